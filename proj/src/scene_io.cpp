#include "streetstage/scene_io.hpp"

#include <fstream>

#include "streetstage/image.hpp"

namespace streetstage::scene_io {

using geo::deg_to_rad;
using geo::rad_to_deg;

namespace {

[[noreturn]] void invalid(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::InvalidScene, path + ": " + what);
}

const json& require(const json& doc, const char* key, const std::string& path) {
  if (!doc.is_object()) invalid(path, "expected an object");
  auto it = doc.find(key);
  if (it == doc.end()) invalid(path + "." + key, "missing");
  return *it;
}

double number(const json& doc, const char* key, const std::string& path) {
  const json& v = require(doc, key, path);
  if (!v.is_number()) invalid(path + "." + key, "expected a number");
  return v.get<double>();
}

double number_or(const json& doc, const char* key, double fallback, const std::string& path) {
  if (!doc.contains(key)) return fallback;
  return number(doc, key, path);
}

std::string text(const json& doc, const char* key, const std::string& path) {
  const json& v = require(doc, key, path);
  if (!v.is_string()) invalid(path + "." + key, "expected a string");
  return v.get<std::string>();
}

geo::GeoPoint point(double lat_deg, double lon_deg, const std::string& path) {
  try {
    return geo::GeoPoint::from_degrees(lat_deg, lon_deg);
  } catch (const Error& e) {
    invalid(path, e.what());
  }
}

}  // namespace

json to_json(const geo::GeoPoint& p) {
  return {{"lat_deg", rad_to_deg(p.latitude)}, {"lon_deg", rad_to_deg(p.longitude)}};
}

json to_json(const staging::Trajectory& t) {
  json points = json::array();
  for (const auto& p : t.sketch) {
    points.push_back({rad_to_deg(p.latitude), rad_to_deg(p.longitude)});
  }
  return {{"points", points}, {"start_s", t.start_time}, {"end_s", t.end_time}};
}

json to_json(const staging::Actor& a) {
  json doc = {{"id", a.id},
              {"lat_deg", rad_to_deg(a.anchor.latitude)},
              {"lon_deg", rad_to_deg(a.anchor.longitude)},
              {"width_m", a.width},
              {"height_m", a.height},
              {"prompt", a.prompt_fragment}};
  if (a.reference_image) doc["reference_image"] = *a.reference_image;
  if (a.trajectory) doc["trajectory"] = to_json(*a.trajectory);
  return doc;
}

json to_json(const staging::CameraKeyframe& k) {
  return {{"t", k.time},
          {"heading_deg", rad_to_deg(k.heading)},
          {"pitch_deg", rad_to_deg(k.pitch)},
          {"hfov_deg", rad_to_deg(k.horizontal_fov)}};
}

json to_json(const staging::ScreenQuad& q) {
  return {{"left", q.left}, {"top", q.top}, {"right", q.right}, {"bottom", q.bottom},
          {"clipped", q.clipped}};
}

json to_json(const staging::Scene& s) {
  const auto& c = s.camera_base;
  json keyframes = json::array();
  for (const auto& k : s.keyframes) keyframes.push_back(to_json(k));
  json actors = json::array();
  for (const auto& a : s.actors) actors.push_back(to_json(a));
  return {{"schema_version", kSchemaVersion},
          {"node_id", s.node_id},
          {"camera_base",
           {{"lat_deg", rad_to_deg(c.position.latitude)},
            {"lon_deg", rad_to_deg(c.position.longitude)},
            {"heading_deg", rad_to_deg(c.heading)},
            {"pitch_deg", rad_to_deg(c.pitch)},
            {"hfov_deg", rad_to_deg(c.horizontal_fov)},
            {"height_m", c.height_above_ground}}},
          {"keyframes", keyframes},
          {"actors", actors},
          {"duration_s", s.duration},
          {"fps", s.fps},
          {"resolution", {s.resolution.width, s.resolution.height}},
          {"scene_prompt", s.scene_prompt}};
}

staging::Trajectory trajectory_from_json(const json& doc) {
  const std::string path = "trajectory";
  staging::Trajectory t;
  const json& points = require(doc, "points", path);
  if (!points.is_array()) invalid(path + ".points", "expected an array");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const json& p = points[i];
    const std::string ppath = path + ".points[" + std::to_string(i) + "]";
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
      invalid(ppath, "expected [lat_deg, lon_deg]");
    }
    t.sketch.push_back(point(p[0].get<double>(), p[1].get<double>(), ppath));
  }
  t.start_time = number_or(doc, "start_s", 0.0, path);
  t.end_time = number_or(doc, "end_s", staging::kDefaultDuration, path);
  return t;
}

staging::Actor actor_from_json(const json& doc) {
  const std::string path = "actor";
  staging::Actor a;
  a.id = text(doc, "id", path);
  a.anchor = point(number(doc, "lat_deg", path), number(doc, "lon_deg", path), path);
  a.width = number_or(doc, "width_m", staging::kDefaultActorWidth, path);
  a.height = number_or(doc, "height_m", staging::kDefaultActorHeight, path);
  if (doc.contains("prompt")) a.prompt_fragment = text(doc, "prompt", path);
  if (doc.contains("reference_image") && !doc["reference_image"].is_null()) {
    a.reference_image = text(doc, "reference_image", path);
  }
  if (doc.contains("trajectory") && !doc["trajectory"].is_null()) {
    a.trajectory = trajectory_from_json(doc["trajectory"]);
  }
  return a;
}

staging::CameraKeyframe keyframe_from_json(const json& doc) {
  const std::string path = "keyframe";
  return {number(doc, "t", path), deg_to_rad(number(doc, "heading_deg", path)),
          deg_to_rad(number_or(doc, "pitch_deg", 0.0, path)),
          deg_to_rad(number_or(doc, "hfov_deg", 90.0, path))};
}

staging::Scene scene_from_json(const json& doc) {
  if (!doc.is_object()) invalid("$", "expected an object");
  const json& version = require(doc, "schema_version", "$");
  if (!version.is_number_integer() || version.get<int>() != kSchemaVersion) {
    invalid("schema_version", "unsupported version (expected " +
                                  std::to_string(kSchemaVersion) + ")");
  }
  staging::Scene s;
  s.node_id = text(doc, "node_id", "$");

  const json& cam = require(doc, "camera_base", "$");
  const std::string cpath = "camera_base";
  s.camera_base.position =
      point(number(cam, "lat_deg", cpath), number(cam, "lon_deg", cpath), cpath);
  s.camera_base.heading = deg_to_rad(number_or(cam, "heading_deg", 0.0, cpath));
  s.camera_base.pitch = deg_to_rad(number_or(cam, "pitch_deg", 0.0, cpath));
  s.camera_base.horizontal_fov = deg_to_rad(number_or(cam, "hfov_deg", 90.0, cpath));
  s.camera_base.height_above_ground =
      number_or(cam, "height_m", staging::kDefaultCameraHeight, cpath);

  s.duration = number(doc, "duration_s", "$");
  s.fps = number(doc, "fps", "$");
  const json& res = require(doc, "resolution", "$");
  if (!res.is_array() || res.size() != 2 || !res[0].is_number_integer() ||
      !res[1].is_number_integer()) {
    invalid("resolution", "expected [width, height]");
  }
  s.resolution = {res[0].get<int>(), res[1].get<int>()};
  s.scene_prompt = doc.contains("scene_prompt") ? text(doc, "scene_prompt", "$") : "";

  const json& keyframes = require(doc, "keyframes", "$");
  if (!keyframes.is_array()) invalid("keyframes", "expected an array");
  for (std::size_t i = 0; i < keyframes.size(); ++i) {
    try {
      s.keyframes.push_back(keyframe_from_json(keyframes[i]));
    } catch (const Error& e) {
      invalid("keyframes[" + std::to_string(i) + "]", e.what());
    }
  }
  const json& actors = require(doc, "actors", "$");
  if (!actors.is_array()) invalid("actors", "expected an array");
  for (std::size_t i = 0; i < actors.size(); ++i) {
    try {
      s.actors.push_back(actor_from_json(actors[i]));
    } catch (const Error& e) {
      invalid("actors[" + std::to_string(i) + "]", e.what());
    }
  }
  if (s.resolution.width > 0 && s.resolution.height > 0) staging::normalize(s);
  return s;
}

staging::Scene load_scene(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  json doc = json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (doc.is_discarded()) invalid(path.string(), "not valid JSON");
  return scene_from_json(doc);
}

void save_scene(const staging::Scene& scene, const std::filesystem::path& path) {
  const std::string body = to_json(scene).dump(2) + "\n";
  write_file_atomic(path, {reinterpret_cast<const std::uint8_t*>(body.data()), body.size()});
}

}  // namespace streetstage::scene_io

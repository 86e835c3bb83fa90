#include "streetstage/staging.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace streetstage::staging {

using geo::kPi;

int frame_count(const Scene& scene) {
  return static_cast<int>(std::lround(scene.duration * scene.fps));
}

geo::GeoPoint resample_trajectory(const Trajectory& trajectory, double t,
                                  const geo::GeoPoint& origin) {
  const auto& sketch = trajectory.sketch;
  if (sketch.size() < 2) {
    throw Error(ErrorCode::DegenerateSketch, "a trajectory needs at least two points");
  }
  std::vector<geo::EnuOffset> points;
  std::vector<double> cumulative;
  points.reserve(sketch.size());
  cumulative.reserve(sketch.size());
  double total = 0.0;
  for (const auto& p : sketch) {
    points.push_back(geo::enu_offset(p, origin));
    if (points.size() > 1) {
      const auto& a = points[points.size() - 2];
      total += std::hypot(points.back().east - a.east, points.back().north - a.north);
    }
    cumulative.push_back(total);
  }
  if (!(total > 0.0)) {
    throw Error(ErrorCode::DegenerateSketch, "trajectory has zero length");
  }
  if (t <= trajectory.start_time) return sketch.front();
  if (t >= trajectory.end_time) return sketch.back();

  const double s =
      (t - trajectory.start_time) / (trajectory.end_time - trajectory.start_time) * total;
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), s);
  if (it == cumulative.end()) return sketch.back();
  const auto i = static_cast<std::size_t>(it - cumulative.begin());
  const double segment = cumulative[i] - cumulative[i - 1];
  const double f = segment > 0.0 ? (s - cumulative[i - 1]) / segment : 0.0;
  const auto& a = points[i - 1];
  const auto& b = points[i];
  return geo::offset_to_geo(origin,
                            {a.east + (b.east - a.east) * f, a.north + (b.north - a.north) * f});
}

geo::GeoPoint actor_position(const Actor& actor, double t, const geo::GeoPoint& origin) {
  if (!actor.trajectory) return actor.anchor;
  return resample_trajectory(*actor.trajectory, t, origin);
}

geo::CameraPose camera_at(const Scene& scene, double t) {
  geo::CameraPose pose = scene.camera_base;
  const auto& keys = scene.keyframes;
  if (!keys.empty()) {
    double heading = 0.0;
    double pitch = 0.0;
    double fov = 0.0;
    if (t <= keys.front().time) {
      heading = keys.front().heading;
      pitch = keys.front().pitch;
      fov = keys.front().horizontal_fov;
    } else if (t >= keys.back().time) {
      heading = keys.back().heading;
      pitch = keys.back().pitch;
      fov = keys.back().horizontal_fov;
    } else {
      auto next = std::upper_bound(keys.begin(), keys.end(), t,
                                   [](double time, const CameraKeyframe& k) { return time < k.time; });
      const auto& k1 = *next;
      const auto& k0 = *(next - 1);
      const double f = (t - k0.time) / (k1.time - k0.time);
      heading = k0.heading + geo::wrap_angle(k1.heading - k0.heading) * f;
      pitch = k0.pitch + (k1.pitch - k0.pitch) * f;
      fov = k0.horizontal_fov + (k1.horizontal_fov - k0.horizontal_fov) * f;
    }
    pose.heading = geo::normalize_heading(heading);
    pose.pitch = pitch;
    pose.horizontal_fov = fov;
  }
  pose.vertical_fov = geo::vertical_fov_for(pose.horizontal_fov, scene.resolution);
  return pose;
}

namespace {

ScreenQuad project_card(const Actor& actor, const geo::GeoPoint& position,
                        const geo::CameraPose& camera, geo::ScreenSize screen, bool& behind) {
  const auto rb = geo::range_bearing(geo::enu_offset(position, camera.position));
  const auto bottom_angles = geo::camera_relative_angles(rb.distance, rb.bearing, camera, 0.0);
  const auto top_angles =
      geo::camera_relative_angles(rb.distance, rb.bearing, camera, actor.height);
  const auto bottom = geo::project_point(bottom_angles, camera, screen);
  const auto top = geo::project_point(top_angles, camera, screen);
  behind = bottom.visibility == geo::Visibility::behind_camera ||
           top.visibility == geo::Visibility::behind_camera;
  if (behind) return {};

  // Angular half-width of the card, mapped through the same horizontal scaling.
  const double half = std::atan(actor.width / (2.0 * rb.distance));
  constexpr double inf = std::numeric_limits<double>::infinity();
  const auto edge = [&](double azimuth, double fallback) {
    const auto p = geo::project_point({azimuth, 0.0}, camera, screen);
    return p.visibility == geo::Visibility::behind_camera ? fallback : p.u;
  };
  ScreenQuad raw;
  raw.left = edge(bottom_angles.azimuth - half, -inf);
  raw.right = edge(bottom_angles.azimuth + half, inf);
  raw.top = top.v;
  raw.bottom = bottom.v;
  return raw;
}

ScreenQuad clip(const ScreenQuad& raw, geo::ScreenSize screen) {
  const double w = screen.width;
  const double h = screen.height;
  ScreenQuad q;
  q.left = std::clamp(raw.left, 0.0, w);
  q.right = std::clamp(raw.right, 0.0, w);
  q.top = std::clamp(raw.top, 0.0, h);
  q.bottom = std::clamp(raw.bottom, 0.0, h);
  q.clipped = q.left != raw.left || q.right != raw.right || q.top != raw.top ||
              q.bottom != raw.bottom;
  return q;
}

}  // namespace

SceneSample sample_scene(const Scene& scene, double t) {
  SceneSample sample;
  const geo::CameraPose camera = camera_at(scene, t);
  for (const auto& actor : scene.actors) {
    try {
      const geo::GeoPoint position = actor_position(actor, t, camera.position);
      bool behind = false;
      const ScreenQuad raw = project_card(actor, position, camera, scene.resolution, behind);
      if (behind) continue;
      sample.quads.push_back({actor.id, clip(raw, scene.resolution)});
    } catch (const Error& e) {
      sample.faults.push_back({actor.id, e.code(), e.what()});
    }
  }
  return sample;
}

namespace {

void check_point_range(const geo::GeoPoint& p, const geo::GeoPoint& node, const std::string& path,
                       std::vector<Diagnostic>& out) {
  try {
    geo::enu_offset(p, node);
  } catch (const Error& e) {
    out.push_back({path, e.code() == ErrorCode::OutOfRange
                             ? "point lies 10 km or more from the imagery node"
                             : e.what()});
  }
}

}  // namespace

std::vector<Diagnostic> validate_scene(const Scene& scene) {
  std::vector<Diagnostic> out;
  const auto fail = [&](std::string path, std::string message) {
    out.push_back({std::move(path), std::move(message)});
  };

  if (scene.node_id.empty()) fail("node_id", "must not be empty");
  if (!(scene.duration > 0.0)) fail("duration_s", "must be positive");
  if (!(scene.fps > 0.0)) fail("fps", "must be positive");
  if (scene.resolution.width <= 0 || scene.resolution.height <= 0) {
    fail("resolution", "must be positive");
  }

  const auto& cam = scene.camera_base;
  const bool pole_ok = std::abs(cam.position.latitude) < geo::kPoleGuard;
  if (!pole_ok) fail("camera_base.lat_deg", "must stay more than 1 degree from the poles");
  if (!(cam.height_above_ground >= 0.0)) fail("camera_base.height_m", "must be non-negative");
  if (!(cam.horizontal_fov > 0.0 && cam.horizontal_fov < kPi)) {
    fail("camera_base.hfov_deg", "must lie in (0, 180)");
  }

  if (scene.keyframes.empty()) {
    fail("keyframes", "at least one keyframe is required");
  } else if (scene.keyframes.front().time != 0.0) {
    fail("keyframes[0].t", "the first keyframe must be at t = 0");
  }
  for (std::size_t i = 0; i < scene.keyframes.size(); ++i) {
    const auto& k = scene.keyframes[i];
    const std::string path = "keyframes[" + std::to_string(i) + "]";
    if (!(k.time >= 0.0 && k.time <= scene.duration)) fail(path + ".t", "outside the timeline");
    if (i > 0 && !(k.time > scene.keyframes[i - 1].time)) {
      fail(path + ".t", "keyframe times must be strictly increasing");
    }
    if (!(k.horizontal_fov > 0.0 && k.horizontal_fov < kPi)) {
      fail(path + ".hfov_deg", "must lie in (0, 180)");
    }
    if (!(std::abs(k.pitch) <= kPi / 2.0)) fail(path + ".pitch_deg", "must lie in [-90, 90]");
    if (!std::isfinite(k.heading)) fail(path + ".heading_deg", "must be finite");
  }

  std::set<std::string> ids;
  for (std::size_t i = 0; i < scene.actors.size(); ++i) {
    const auto& a = scene.actors[i];
    const std::string path = "actors[" + std::to_string(i) + "]";
    if (a.id.empty()) fail(path + ".id", "must not be empty");
    if (!ids.insert(a.id).second) fail(path + ".id", "duplicate actor id '" + a.id + "'");
    if (!(a.width > 0.0)) fail(path + ".width_m", "must be positive");
    if (!(a.height > 0.0)) fail(path + ".height_m", "must be positive");
    if (!pole_ok) continue;
    check_point_range(a.anchor, cam.position, path, out);
    if (!a.trajectory) continue;

    const auto& traj = *a.trajectory;
    const std::string tpath = path + ".trajectory";
    if (traj.sketch.size() < 2) fail(tpath + ".points", "needs at least two points");
    if (!(traj.start_time >= 0.0 && traj.start_time < traj.end_time &&
          traj.end_time <= scene.duration)) {
      fail(tpath, "requires 0 <= start_s < end_s <= duration_s");
    }
    for (std::size_t j = 0; j < traj.sketch.size(); ++j) {
      check_point_range(traj.sketch[j], cam.position,
                        tpath + ".points[" + std::to_string(j) + "]", out);
      if (j > 0 && traj.sketch[j] == traj.sketch[j - 1]) {
        fail(tpath + ".points[" + std::to_string(j) + "]", "repeats the previous point");
      }
    }
    if (!traj.sketch.empty()) {
      try {
        const auto gap = geo::enu_offset(traj.sketch.front(), a.anchor);
        if (std::hypot(gap.east, gap.north) > 1e-3) {
          fail(tpath + ".points[0]", "must coincide with the actor anchor");
        }
      } catch (const Error&) {
        fail(tpath + ".points[0]", "must coincide with the actor anchor");
      }
    }
  }
  return out;
}

void normalize(Scene& scene) {
  scene.camera_base.heading = geo::normalize_heading(scene.camera_base.heading);
  for (auto& k : scene.keyframes) k.heading = geo::normalize_heading(k.heading);
  std::stable_sort(scene.keyframes.begin(), scene.keyframes.end(),
                   [](const CameraKeyframe& a, const CameraKeyframe& b) { return a.time < b.time; });
  scene.camera_base.vertical_fov =
      geo::vertical_fov_for(scene.camera_base.horizontal_fov, scene.resolution);
}

Scene make_default_scene(std::string node_id, const geo::GeoPoint& position) {
  Scene scene;
  scene.node_id = std::move(node_id);
  scene.camera_base.position = position;
  scene.camera_base.height_above_ground = kDefaultCameraHeight;
  scene.camera_base.vertical_fov =
      geo::vertical_fov_for(scene.camera_base.horizontal_fov, scene.resolution);
  scene.keyframes.push_back({0.0, scene.camera_base.heading, scene.camera_base.pitch,
                             scene.camera_base.horizontal_fov});
  return scene;
}

}  // namespace streetstage::staging

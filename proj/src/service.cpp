#include "streetstage/service.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <cmath>
#include <regex>
#include <sstream>

#include "streetstage/render.hpp"
#include "streetstage/scene_io.hpp"

namespace streetstage::service {

namespace {

using geo::deg_to_rad;
using geo::rad_to_deg;

[[noreturn]] void bad_config(const std::string& key, const std::string& why) {
  throw Error(ErrorCode::InvalidArgument, "config " + key + ": " + why);
}

void only_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) bad_config(where, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return key == k; })) {
      bad_config(where.empty() ? key : where + "." + key, "unknown key");
    }
  }
}

std::string str_at(const json& obj, const char* key, const std::string& where, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_string()) bad_config(where + "." + key, "expected a string");
  return obj[key].get<std::string>();
}

std::uint64_t uint_at(const json& obj, const char* key, const std::string& where, std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number_unsigned()) bad_config(where + "." + key, "expected a non-negative integer");
  return obj[key].get<std::uint64_t>();
}

fs::path path_at(const json& obj, const char* key, const std::string& where, const fs::path& base,
                 const fs::path& fallback) {
  if (!obj.contains(key)) return fallback;
  const fs::path p = str_at(obj, key, where, "");
  return p.is_absolute() ? p : base / p;
}

void append_line(const fs::path& path, const std::string& line) {
  std::FILE* f = std::fopen(path.c_str(), "ab");
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size() && std::fflush(f) == 0;
  std::fclose(f);
  if (!ok) throw Error(ErrorCode::IoError, "cannot append to " + path.string());
}

void write_json(const fs::path& path, const json& doc) {
  const std::string body = doc.dump(2) + "\n";
  write_file_atomic(path, {reinterpret_cast<const std::uint8_t*>(body.data()), body.size()});
}

std::int64_t now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

// The queue log stores output paths; keep them valid from any working directory.
Config with_absolute_paths(Config c) {
  c.data_dir = fs::absolute(c.data_dir);
  if (!c.cache_dir.empty()) c.cache_dir = fs::absolute(c.cache_dir);
  return c;
}

std::string format_id(std::uint64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "proj-%06" PRIu64, n);
  return buf;
}

}  // namespace

// --- config ---

Config config_from_json(const json& doc, const fs::path& base_dir) {
  only_keys(doc, "", {"data_dir", "imagery", "backend", "server"});
  Config c;
  c.data_dir = path_at(doc, "data_dir", "", base_dir, c.data_dir);

  if (doc.contains("imagery")) {
    const json& im = doc["imagery"];
    only_keys(im, "imagery", {"provider", "fixtures", "token", "base_url", "cache_dir", "cache_budget_bytes"});
    c.provider = str_at(im, "provider", "imagery", c.provider);
    c.fixtures_dir = path_at(im, "fixtures", "imagery", base_dir, {});
    c.provider_token = str_at(im, "token", "imagery", "");
    c.provider_url = str_at(im, "base_url", "imagery", c.provider_url);
    c.cache_dir = path_at(im, "cache_dir", "imagery", base_dir, {});
    c.cache_budget = uint_at(im, "cache_budget_bytes", "imagery", c.cache_budget);
  }
  if (c.provider != "fixture" && c.provider != "mapillary") {
    bad_config("imagery.provider", "expected \"fixture\" or \"mapillary\"");
  }

  if (doc.contains("backend")) {
    const json& be = doc["backend"];
    only_keys(be, "backend", {"kind", "url", "token", "mock_latency_ms"});
    c.backend = str_at(be, "kind", "backend", c.backend);
    c.backend_url = str_at(be, "url", "backend", "");
    c.backend_token = str_at(be, "token", "backend", "");
    c.mock_latency = std::chrono::milliseconds(uint_at(be, "mock_latency_ms", "backend", 0));
  }
  if (c.backend != "mock" && c.backend != "http") bad_config("backend.kind", "expected \"mock\" or \"http\"");

  if (doc.contains("server")) {
    const json& sv = doc["server"];
    only_keys(sv, "server", {"host", "port", "ui_dir"});
    c.host = str_at(sv, "host", "server", c.host);
    const auto port = uint_at(sv, "port", "server", static_cast<std::uint64_t>(c.port));
    if (port > 65535) bad_config("server.port", "out of range");
    c.port = static_cast<int>(port);
    c.ui_dir = path_at(sv, "ui_dir", "server", base_dir, {});
  }
  return c;
}

Config load_config(const fs::path& path) {
  const auto bytes = read_file(path);
  const json doc = json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::InvalidArgument, "config " + path.string() + " is not valid JSON");
  return config_from_json(doc, fs::absolute(path).parent_path());
}

// --- scenes ---

namespace {

std::string diagnostics_text(const std::vector<staging::Diagnostic>& d) {
  std::string out = "scene rejected";
  for (const auto& x : d) out += "; " + x.path + ": " + x.message;
  return out;
}

}  // namespace

SceneRejected::SceneRejected(std::vector<staging::Diagnostic> diagnostics)
    : Error(ErrorCode::InvalidScene, diagnostics_text(diagnostics)), diagnostics_(std::move(diagnostics)) {}

std::vector<staging::Diagnostic> check_scene(const staging::Scene& scene, const fs::path& base_dir) {
  auto out = staging::validate_scene(scene);
  if (scene.scene_prompt.find_first_not_of(" \t\r\n") == std::string::npos) {
    out.push_back({"scene_prompt", "must not be empty"});
  }
  for (std::size_t i = 0; i < scene.actors.size(); ++i) {
    const auto& ref = scene.actors[i].reference_image;
    if (!ref) continue;
    fs::path p = *ref;
    if (p.is_relative()) p = base_dir / p;
    if (!fs::is_regular_file(p)) {
      out.push_back({"actors[" + std::to_string(i) + "].reference_image", "file not found: " + p.string()});
    }
  }
  return out;
}

void resolve_references(staging::Scene& scene, const fs::path& base_dir) {
  for (auto& a : scene.actors) {
    if (a.reference_image && fs::path(*a.reference_image).is_relative()) {
      a.reference_image = (base_dir / *a.reference_image).lexically_normal().string();
    }
  }
}

json to_json(const staging::Diagnostic& d) { return {{"path", d.path}, {"message", d.message}}; }

json to_json(const imagery::ImageryNode& n) {
  return {{"id", n.id},
          {"lat_deg", rad_to_deg(n.position.latitude)},
          {"lon_deg", rad_to_deg(n.position.longitude)},
          {"compass_angle_deg", rad_to_deg(n.compass_angle)},
          {"is_pano", n.is_panoramic},
          {"captured_at", n.capture_time},
          {"width", n.width},
          {"height", n.height},
          {"warnings", n.warnings}};
}

json to_json(const staging::SceneSample& sample, const staging::Scene& scene, double t) {
  const auto cam = staging::camera_at(scene, t);
  json quads = json::array();
  for (const auto& q : sample.quads) {
    json j = scene_io::to_json(q.quad);
    j["actor_id"] = q.actor_id;
    quads.push_back(std::move(j));
  }
  json faults = json::array();
  for (const auto& f : sample.faults) {
    faults.push_back({{"actor_id", f.actor_id}, {"code", std::string(to_string(f.code))}, {"message", f.message}});
  }
  return {{"t", t},
          {"camera",
           {{"heading_deg", rad_to_deg(cam.heading)},
            {"pitch_deg", rad_to_deg(cam.pitch)},
            {"hfov_deg", rad_to_deg(cam.horizontal_fov)},
            {"vfov_deg", rad_to_deg(cam.vertical_fov)}}},
          {"resolution", {scene.resolution.width, scene.resolution.height}},
          {"quads", quads},
          {"faults", faults}};
}

imagery::BoundingBox parse_bbox(const std::string& text) {
  static const std::regex num(R"(\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*)");
  std::vector<double> v;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::smatch m;
    if (!std::regex_match(part, m, num)) break;
    v.push_back(std::stod(m[1].str()));
  }
  if (v.size() != 4 || std::count(text.begin(), text.end(), ',') != 3) {
    throw Error(ErrorCode::InvalidArgument, "bbox must be minLon,minLat,maxLon,maxLat in degrees");
  }
  imagery::BoundingBox box{geo::GeoPoint::from_degrees(v[1], v[0]), geo::GeoPoint::from_degrees(v[3], v[2])};
  box.check();
  return box;
}

// --- projects ---

json to_json(const Project& p) {
  return {{"project_id", p.project_id}, {"revision", p.revision}, {"scene", scene_io::to_json(p.scene)},
          {"jobs", p.jobs}};
}

ProjectStore::ProjectStore(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
  static const std::regex id_re(R"(proj-(\d{6,}))");
  for (const auto& entry : fs::directory_iterator(dir_)) {
    const auto name = entry.path().filename().string();
    std::smatch m;
    if (!entry.is_directory() || !std::regex_match(name, m, id_re)) continue;
    if (!fs::is_regular_file(entry.path() / "project.json")) continue;
    auto s = std::make_shared<Slot>();
    const auto meta_bytes = read_file(entry.path() / "project.json");
    const json meta = json::parse(meta_bytes.begin(), meta_bytes.end(), nullptr, false);
    if (meta.is_discarded()) throw Error(ErrorCode::IoError, "corrupt project metadata in " + name);
    s->project.project_id = name;
    s->project.revision = meta.value("revision", std::uint64_t{0});
    s->project.jobs = meta.value("jobs", std::vector<std::string>{});
    s->project.scene = scene_io::load_scene(entry.path() / "scene.json");
    slots_[name] = s;
    next_id_ = std::max<std::uint64_t>(next_id_, std::stoull(m[1].str()) + 1);
  }
}

std::shared_ptr<ProjectStore::Slot> ProjectStore::slot(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = slots_.find(id);
  if (it == slots_.end()) throw Error(ErrorCode::NotFound, "no project " + id);
  return it->second;
}

void ProjectStore::persist(const Project& p, const std::string& op, bool scene_changed) {
  const auto d = project_dir(p.project_id);
  fs::create_directories(d);
  if (scene_changed) scene_io::save_scene(p.scene, d / "scene.json");
  write_json(d / "project.json", {{"project_id", p.project_id}, {"revision", p.revision}, {"jobs", p.jobs}});
  append_line(d / "events.jsonl",
              json{{"op", op}, {"revision", p.revision}, {"ts_ms", now_ms()}}.dump() + "\n");
}

Project ProjectStore::create(staging::Scene scene) {
  staging::normalize(scene);
  auto diags = staging::validate_scene(scene);
  if (!diags.empty()) throw SceneRejected(std::move(diags));

  auto s = std::make_shared<Slot>();
  std::lock_guard lock(mu_);
  s->project.project_id = format_id(next_id_++);
  s->project.scene = std::move(scene);
  s->project.revision = 1;
  persist(s->project, "create", true);
  slots_[s->project.project_id] = s;
  return s->project;
}

Project ProjectStore::get(const std::string& id) const {
  auto s = slot(id);
  std::lock_guard lock(s->mu);
  return s->project;
}

std::vector<Project> ProjectStore::list() const {
  std::vector<std::shared_ptr<Slot>> all;
  {
    std::lock_guard lock(mu_);
    for (const auto& [_, s] : slots_) all.push_back(s);
  }
  std::vector<Project> out;
  for (const auto& s : all) {
    std::lock_guard lock(s->mu);
    out.push_back(s->project);
  }
  return out;
}

Project ProjectStore::mutate(const std::string& id, std::optional<std::uint64_t> expected_revision,
                             const std::string& op, const Mutation& fn) {
  auto s = slot(id);
  std::lock_guard lock(s->mu);
  if (expected_revision && *expected_revision != s->project.revision) {
    throw Error(ErrorCode::Conflict, "project " + id + " is at revision " + std::to_string(s->project.revision) +
                                         ", not " + std::to_string(*expected_revision));
  }
  auto scene = s->project.scene;
  fn(scene);
  staging::normalize(scene);
  auto diags = staging::validate_scene(scene);
  if (!diags.empty()) throw SceneRejected(std::move(diags));

  Project next = s->project;
  next.scene = std::move(scene);
  ++next.revision;
  persist(next, op, true);
  s->project = std::move(next);
  return s->project;
}

Project ProjectStore::put(const std::string& id, staging::Scene scene, std::uint64_t expected_revision) {
  return mutate(id, expected_revision, "put", [&](staging::Scene& current) { current = std::move(scene); });
}

Project ProjectStore::record_job(const std::string& id, const std::string& job_id) {
  auto s = slot(id);
  std::lock_guard lock(s->mu);
  Project next = s->project;
  if (std::find(next.jobs.begin(), next.jobs.end(), job_id) == next.jobs.end()) next.jobs.push_back(job_id);
  persist(next, "job " + job_id, false);
  s->project = std::move(next);
  return s->project;
}

// --- facade ---

queue::QueueState read_queue(const fs::path& queue_dir) {
  queue::QueueState state;
  const auto log = queue_dir / "events.jsonl";
  if (!fs::exists(log)) return state;
  for (const auto& e : queue::read_log(log)) state.apply(e);
  return state;
}

std::shared_ptr<imagery::ImageryProvider> make_provider(const Config& c) {
  if (c.provider == "fixture") {
    if (c.fixtures_dir.empty()) throw Error(ErrorCode::InvalidArgument, "fixture provider needs imagery.fixtures");
    return std::make_shared<imagery::FixtureProvider>(c.fixtures_dir);
  }
  if (!c.provider_token.empty()) return std::make_shared<imagery::MapillaryProvider>(c.provider_token, c.provider_url);
  return imagery::MapillaryProvider::from_environment(c.provider_url);
}

std::shared_ptr<genbackend::BackendClient> make_backend(const Config& c) {
  if (c.backend == "mock") {
    genbackend::MockOptions o;
    o.latency = c.mock_latency;
    return std::make_shared<genbackend::MockBackend>(o);
  }
  if (c.backend_url.empty()) throw Error(ErrorCode::InvalidArgument, "http backend needs backend.url");
  genbackend::HttpBackendOptions o;
  o.base_url = c.backend_url;
  o.token = c.backend_token;
  return std::make_shared<genbackend::HttpBackend>(o);
}

Service::Service(Config config) : Service(config, make_provider(config), make_backend(config)) {}

Service::Service(Config config, std::shared_ptr<imagery::ImageryProvider> provider,
                 std::shared_ptr<genbackend::BackendClient> backend)
    : config_(with_absolute_paths(std::move(config))),
      backend_(std::move(backend)),
      projects_(config_.data_dir / "projects") {
  const auto cache_dir = config_.cache_dir.empty() ? config_.data_dir / "cache" : config_.cache_dir;
  auto disk = std::make_shared<imagery::DiskCache>(cache_dir, config_.cache_budget);
  imagery_ = std::make_unique<imagery::ImageryClient>(std::move(provider), std::move(disk));
}

Service::~Service() = default;

queue::RenderQueue& Service::queue() {
  std::lock_guard lock(queue_mu_);
  if (!queue_) {
    queue::QueueOptions o;
    o.dir = queue_dir();
    queue_ = std::make_unique<queue::RenderQueue>(backend_, o);
  }
  return *queue_;
}

std::vector<imagery::ImageryNode> Service::search_nodes(const imagery::BoundingBox& box, int limit) {
  return imagery_->search_nodes(box, limit);
}

std::shared_ptr<const panorama::Panorama> Service::panorama_for(const std::string& node_id) {
  return imagery_->fetch_panorama(imagery_->get_node(node_id));
}

Image Service::view(const std::string& node_id, double heading, double pitch, double hfov, geo::ScreenSize size) {
  constexpr int kMaxSide = 4096;
  if (size.width < 1 || size.height < 1 || size.width > kMaxSide || size.height > kMaxSide) {
    throw Error(ErrorCode::InvalidArgument, "view size must lie in [1, 4096]");
  }
  if (!(std::abs(pitch) <= geo::kPi / 2.0)) throw Error(ErrorCode::InvalidArgument, "pitch must lie in [-90, 90] degrees");
  if (!std::isfinite(heading)) throw Error(ErrorCode::InvalidArgument, "heading must be finite");
  const auto node = imagery_->get_node(node_id);
  geo::CameraPose cam;
  cam.position = node.position;
  cam.heading = geo::normalize_heading(heading);
  cam.pitch = pitch;
  cam.horizontal_fov = hfov;
  cam.vertical_fov = geo::vertical_fov_for(hfov, size);
  geo::check_camera(cam);
  return panorama::render_view(*imagery_->fetch_panorama(node), cam, size);
}

void overlay_quads(Image& frame, const staging::SceneSample& sample, geo::ScreenSize size) {
  for (const auto& q : sample.quads) {
    render::alpha_over(frame, render::mask_frame(sample, q.actor_id, size));
  }
}

Image Service::preview(const staging::Scene& scene, double t) {
  const auto cam = staging::camera_at(scene, t);
  Image frame = view(scene.node_id, cam.heading, cam.pitch, cam.horizontal_fov, scene.resolution);
  overlay_quads(frame, staging::sample_scene(scene, t), scene.resolution);
  return frame;
}

staging::Scene Service::new_scene(const std::string& node_id) {
  const auto node = imagery_->get_node(node_id);
  if (!node.is_panoramic) throw Error(ErrorCode::InvalidArgument, "node " + node_id + " is not panoramic");
  return staging::make_default_scene(node.id, node.position);
}

std::string Service::render(const staging::Scene& scene, const fs::path& work_dir) {
  auto diags = staging::validate_scene(scene);
  if (!diags.empty()) throw SceneRejected(std::move(diags));
  if (scene.scene_prompt.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Error(ErrorCode::EmptyPrompt, "scene prompt is empty");
  }
  const auto pano = panorama_for(scene.node_id);
  fs::create_directories(work_dir);
  const auto inputs = render::render_to_directory(scene, *pano, work_dir / "inputs");
  const auto bundle = genbackend::build_bundle(scene, inputs);
  genbackend::write_bundle(bundle, work_dir / "bundle.json");
  return queue().submit(work_dir / "bundle.json");
}

std::string Service::render_project(const std::string& project_id) {
  const auto project = projects_.get(project_id);
  auto scene = project.scene;
  const auto dir = projects_.project_dir(project_id);
  resolve_references(scene, dir);
  const auto job_id = render(scene, dir / "renders" / ("r" + std::to_string(project.revision)));
  projects_.record_job(project_id, job_id);
  return job_id;
}

}  // namespace streetstage::service

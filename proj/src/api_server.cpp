#include "streetstage/api_server.hpp"

#include <cmath>
#include <regex>

#include "http.hpp"
#include "streetstage/render.hpp"
#include "streetstage/scene_io.hpp"

namespace streetstage::service {

namespace {

using geo::deg_to_rad;
using geo::rad_to_deg;
using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

constexpr const char* kPrefix = "/api/v1";

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_png(httplib::Response& res, const Image& image) {
  const auto png = encode_png(image);
  res.set_content(reinterpret_cast<const char*>(png.data()), png.size(), "image/png");
}

void send_problem(httplib::Response& res, const Error& e) {
  const auto body = problem_json(e);
  res.status = body["status"].get<int>();
  res.set_content(body.dump(), "application/problem+json");
}

Handler guarded(Handler fn) {
  return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_problem(res, e);
    } catch (const json::exception& e) {
      send_problem(res, Error(ErrorCode::InvalidArgument, e.what()));
    } catch (const std::exception& e) {
      send_problem(res, Error(ErrorCode::IoError, e.what()));
    }
  };
}

json body_json(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json doc = json::parse(req.body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw Error(ErrorCode::InvalidArgument, "request body must be a JSON object");
  return doc;
}

double number_param(const httplib::Request& req, const char* name, std::optional<double> fallback) {
  if (!req.has_param(name)) {
    if (fallback) return *fallback;
    throw Error(ErrorCode::InvalidArgument, std::string("missing query parameter ") + name);
  }
  const auto text = req.get_param_value(name);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty() || !std::isfinite(v)) {
    throw Error(ErrorCode::InvalidArgument, std::string("query parameter ") + name + " is not a number");
  }
  return v;
}

int int_param(const httplib::Request& req, const char* name, int fallback) {
  const double v = number_param(req, name, fallback);
  if (v != std::floor(v) || std::abs(v) > 1e9) {
    throw Error(ErrorCode::InvalidArgument, std::string("query parameter ") + name + " must be an integer");
  }
  return static_cast<int>(v);
}

std::optional<std::uint64_t> revision_of(const json& body, const httplib::Request& req) {
  if (body.contains("revision")) {
    if (!body["revision"].is_number_unsigned()) throw Error(ErrorCode::InvalidArgument, "revision must be a non-negative integer");
    return body["revision"].get<std::uint64_t>();
  }
  if (req.has_param("revision")) return static_cast<std::uint64_t>(int_param(req, "revision", 0));
  return std::nullopt;
}

double scene_time(const httplib::Request& req, const staging::Scene& scene) {
  const double t = number_param(req, "t", 0.0);
  if (t < 0.0 || t > scene.duration) throw Error(ErrorCode::InvalidArgument, "t must lie in [0, duration]");
  return t;
}

bool plain_id(const std::string& s) {
  static const std::regex re("[A-Za-z0-9_-]{1,64}");
  return std::regex_match(s, re);
}

staging::Actor* find_actor(staging::Scene& scene, const std::string& id) {
  for (auto& a : scene.actors) {
    if (a.id == id) return &a;
  }
  return nullptr;
}

json job_json(const queue::RenderJob& job) { return queue::to_json(job); }

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::PoleProximity:
    case ErrorCode::OutOfRange:
    case ErrorCode::OutOfRaster:
      return 400;
    case ErrorCode::NotFound:
      return 404;
    case ErrorCode::Conflict:
      return 409;
    case ErrorCode::InvalidScene:
    case ErrorCode::DegenerateSketch:
    case ErrorCode::NoGroundIntersection:
    case ErrorCode::EmptyPrompt:
    case ErrorCode::SequenceMismatch:
      return 422;
    case ErrorCode::QuotaExceeded:
      return 429;
    case ErrorCode::DecodeError:
    case ErrorCode::BackendFailure:
      return 502;
    case ErrorCode::ProviderUnavailable:
    case ErrorCode::BackendUnreachable:
      return 503;
    case ErrorCode::IoError:
    case ErrorCode::IllegalTransition:
      return 500;
  }
  return 500;
}

json problem_json(const Error& e) {
  const std::string code(to_string(e.code()));
  json body{{"type", "urn:streetstage:error:" + code},
            {"title", code},
            {"status", http_status(e.code())},
            {"detail", e.what()},
            {"code", code}};
  if (const auto* rejected = dynamic_cast<const SceneRejected*>(&e)) {
    json diags = json::array();
    for (const auto& d : rejected->diagnostics()) diags.push_back(to_json(d));
    body["diagnostics"] = diags;
  }
  return body;
}

struct ApiServer::Impl {
  Service& service;
  httplib::Server server;
  int port = -1;

  explicit Impl(Service& s) : service(s) {}

  void route(const std::string& method, const std::string& pattern, Handler fn) {
    const auto path = std::string(kPrefix) + pattern;
    auto h = guarded(std::move(fn));
    if (method == "GET") server.Get(path, h);
    else if (method == "POST") server.Post(path, h);
    else if (method == "PUT") server.Put(path, h);
    else if (method == "DELETE") server.Delete(path, h);
  }

  void install() {
    server.set_payload_max_length(64u << 20);

    route("GET", "/health", [](const auto&, auto& res) { send_json(res, {{"status", "ok"}}); });

    route("GET", "/nodes", [this](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_param("bbox")) throw Error(ErrorCode::InvalidArgument, "missing query parameter bbox");
      const auto box = parse_bbox(req.get_param_value("bbox"));
      const auto nodes = service.search_nodes(box, int_param(req, "limit", 100));
      json out = json::array();
      for (const auto& n : nodes) out.push_back(to_json(n));
      send_json(res, {{"nodes", out}});
    });

    route("GET", R"(/nodes/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, to_json(service.imagery().get_node(req.matches[1])));
    });

    route("GET", R"(/nodes/([^/]+)/view)", [this](const httplib::Request& req, httplib::Response& res) {
      const geo::ScreenSize size{int_param(req, "w", 1280), int_param(req, "h", 720)};
      send_png(res, service.view(req.matches[1], deg_to_rad(number_param(req, "heading", 0.0)),
                                 deg_to_rad(number_param(req, "pitch", 0.0)),
                                 deg_to_rad(number_param(req, "fov", 90.0)), size));
    });

    route("GET", "/projects", [this](const auto&, httplib::Response& res) {
      json out = json::array();
      for (const auto& p : service.projects().list()) {
        out.push_back({{"project_id", p.project_id}, {"revision", p.revision}, {"node_id", p.scene.node_id}});
      }
      send_json(res, {{"projects", out}});
    });

    route("POST", "/projects", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = body_json(req);
      staging::Scene scene;
      if (body.contains("scene")) {
        scene = scene_io::scene_from_json(body["scene"]);
      } else if (body.contains("node_id") && body["node_id"].is_string()) {
        scene = service.new_scene(body["node_id"].get<std::string>());
      } else {
        throw Error(ErrorCode::InvalidArgument, "expected \"scene\" or \"node_id\"");
      }
      send_json(res, to_json(service.projects().create(std::move(scene))), 201);
    });

    route("GET", R"(/projects/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, to_json(service.projects().get(req.matches[1])));
    });

    route("PUT", R"(/projects/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = body_json(req);
      const auto rev = revision_of(body, req);
      if (!rev) throw Error(ErrorCode::InvalidArgument, "PUT requires the revision being replaced");
      if (!body.contains("scene")) throw Error(ErrorCode::InvalidArgument, "missing \"scene\"");
      send_json(res, to_json(service.projects().put(req.matches[1], scene_io::scene_from_json(body["scene"]), *rev)));
    });

    route("POST", R"(/projects/([^/]+)/actors)", [this](const httplib::Request& req, httplib::Response& res) {
      auto body = body_json(req);
      if (!body.contains("actor") || !body["actor"].is_object()) throw Error(ErrorCode::InvalidArgument, "missing \"actor\"");
      json doc = body["actor"];
      const auto id = std::string(req.matches[1]);
      if (!doc.contains("id")) {
        const auto current = service.projects().get(id).scene;
        int n = static_cast<int>(current.actors.size());
        std::string candidate;
        do candidate = "actor" + std::to_string(n++);
        while (std::any_of(current.actors.begin(), current.actors.end(),
                           [&](const staging::Actor& a) { return a.id == candidate; }));
        doc["id"] = candidate;
      }
      auto actor = scene_io::actor_from_json(doc);
      const auto p = service.projects().mutate(id, revision_of(body, req), "actor " + actor.id,
                                               [&](staging::Scene& s) {
                                                 if (auto* a = find_actor(s, actor.id)) *a = actor;
                                                 else s.actors.push_back(actor);
                                               });
      send_json(res, to_json(p));
    });

    route("DELETE", R"(/projects/([^/]+)/actors/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string actor_id = req.matches[2];
      const auto p = service.projects().mutate(req.matches[1], revision_of(json::object(), req),
                                               "delete actor " + actor_id, [&](staging::Scene& s) {
                                                 const auto before = s.actors.size();
                                                 std::erase_if(s.actors, [&](const auto& a) { return a.id == actor_id; });
                                                 if (s.actors.size() == before) {
                                                   throw Error(ErrorCode::NotFound, "no actor " + actor_id);
                                                 }
                                               });
      send_json(res, to_json(p));
    });

    route("PUT", R"(/projects/([^/]+)/actors/([^/]+)/reference)",
          [this](const httplib::Request& req, httplib::Response& res) {
            const std::string project_id = req.matches[1];
            const std::string actor_id = req.matches[2];
            if (!plain_id(actor_id)) throw Error(ErrorCode::InvalidArgument, "actor id is not usable as a file name");
            const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(req.body.data()),
                                                      req.body.size());
            try {
              decode_image(bytes);
            } catch (const Error&) {
              throw Error(ErrorCode::InvalidArgument, "reference image must be a PNG or JPEG");
            }
            const bool png = bytes.size() > 4 && bytes[1] == 'P' && bytes[2] == 'N' && bytes[3] == 'G';
            const std::string rel = "refs/" + actor_id + (png ? ".png" : ".jpg");
            const auto p = service.projects().mutate(
                project_id, revision_of(json::object(), req), "reference " + actor_id, [&](staging::Scene& s) {
                  auto* a = find_actor(s, actor_id);
                  if (!a) throw Error(ErrorCode::NotFound, "no actor " + actor_id);
                  fs::create_directories(service.projects().project_dir(project_id) / "refs");
                  write_file_atomic(service.projects().project_dir(project_id) / rel, bytes);
                  a->reference_image = rel;
                });
            send_json(res, to_json(p));
          });

    route("POST", R"(/projects/([^/]+)/trajectory)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = body_json(req);
      if (!body.contains("actor_id") || !body["actor_id"].is_string()) {
        throw Error(ErrorCode::InvalidArgument, "missing \"actor_id\"");
      }
      const auto actor_id = body["actor_id"].get<std::string>();
      std::optional<staging::Trajectory> traj;
      if (body.contains("trajectory") && !body["trajectory"].is_null()) {
        traj = scene_io::trajectory_from_json(body["trajectory"]);
      }
      const auto p = service.projects().mutate(req.matches[1], revision_of(body, req), "trajectory " + actor_id,
                                               [&](staging::Scene& s) {
                                                 auto* a = find_actor(s, actor_id);
                                                 if (!a) throw Error(ErrorCode::NotFound, "no actor " + actor_id);
                                                 a->trajectory = traj;
                                                 // A sketch starts where the actor stands.
                                                 if (traj && !traj->sketch.empty()) a->anchor = traj->sketch.front();
                                               });
      send_json(res, to_json(p));
    });

    route("POST", R"(/projects/([^/]+)/keyframes)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = body_json(req);
      std::function<void(staging::Scene&)> edit;
      if (body.contains("keyframes")) {
        std::vector<staging::CameraKeyframe> all;
        if (!body["keyframes"].is_array()) throw Error(ErrorCode::InvalidArgument, "keyframes must be an array");
        for (const auto& k : body["keyframes"]) all.push_back(scene_io::keyframe_from_json(k));
        edit = [all](staging::Scene& s) { s.keyframes = all; };
      } else if (body.contains("keyframe")) {
        const auto k = scene_io::keyframe_from_json(body["keyframe"]);
        edit = [k](staging::Scene& s) {
          auto it = std::find_if(s.keyframes.begin(), s.keyframes.end(),
                                 [&](const auto& x) { return x.time == k.time; });
          if (it != s.keyframes.end()) *it = k;
          else s.keyframes.push_back(k);
        };
      } else if (body.contains("delete_t") && body["delete_t"].is_number()) {
        const double t = body["delete_t"].get<double>();
        edit = [t](staging::Scene& s) {
          if (std::erase_if(s.keyframes, [&](const auto& x) { return x.time == t; }) == 0) {
            throw Error(ErrorCode::NotFound, "no keyframe at t = " + std::to_string(t));
          }
        };
      } else {
        throw Error(ErrorCode::InvalidArgument, "expected \"keyframe\", \"keyframes\" or \"delete_t\"");
      }
      send_json(res, to_json(service.projects().mutate(req.matches[1], revision_of(body, req), "keyframes", edit)));
    });

    route("POST", R"(/projects/([^/]+)/prompt)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = body_json(req);
      if (!body.contains("scene_prompt") || !body["scene_prompt"].is_string()) {
        throw Error(ErrorCode::InvalidArgument, "missing \"scene_prompt\"");
      }
      const auto prompt = body["scene_prompt"].get<std::string>();
      send_json(res, to_json(service.projects().mutate(req.matches[1], revision_of(body, req), "prompt",
                                                       [&](staging::Scene& s) { s.scene_prompt = prompt; })));
    });

    route("GET", R"(/projects/([^/]+)/sample)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto scene = service.projects().get(req.matches[1]).scene;
      const double t = scene_time(req, scene);
      send_json(res, to_json(staging::sample_scene(scene, t), scene, t));
    });

    route("GET", R"(/projects/([^/]+)/preview)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto scene = service.projects().get(req.matches[1]).scene;
      send_png(res, service.preview(scene, scene_time(req, scene)));
    });

    route("POST", R"(/projects/([^/]+)/unproject)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = body_json(req);
      const auto scene = service.projects().get(req.matches[1]).scene;
      const double t = body.value("t", 0.0);
      if (!body.contains("u") || !body.contains("v")) throw Error(ErrorCode::InvalidArgument, "expected \"u\" and \"v\"");
      if (t < 0.0 || t > scene.duration) throw Error(ErrorCode::InvalidArgument, "t must lie in [0, duration]");
      const auto p = geo::unproject_to_ground(body["u"].get<double>(), body["v"].get<double>(),
                                              staging::camera_at(scene, t), scene.resolution);
      send_json(res, scene_io::to_json(p));
    });

    route("POST", R"(/projects/([^/]+)/render)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const auto body = body_json(req);
      if (const auto rev = revision_of(body, req); rev && *rev != service.projects().get(id).revision) {
        throw Error(ErrorCode::Conflict, "project " + id + " changed since revision " + std::to_string(*rev));
      }
      const auto job_id = service.render_project(id);
      send_json(res, {{"job_id", job_id}, {"project_id", id}}, 202);
    });

    route("GET", "/jobs", [this](const auto&, httplib::Response& res) {
      json out = json::array();
      for (const auto& j : service.queue().jobs()) out.push_back(job_json(j));
      send_json(res, {{"jobs", out}});
    });

    route("GET", R"(/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const auto job = service.queue().poll(req.matches[1]);
      if (!job) throw Error(ErrorCode::NotFound, "no job " + std::string(req.matches[1]));
      send_json(res, job_json(*job));
    });

    route("GET", R"(/jobs/([^/]+)/frames)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto job = service.queue().poll(req.matches[1]);
      if (!job) throw Error(ErrorCode::NotFound, "no job " + std::string(req.matches[1]));
      if (!job->result) throw Error(ErrorCode::NotFound, "job " + job->job_id + " has no result yet");
      const auto m = render::read_manifest(*job->result);
      send_json(res, {{"job_id", job->job_id},
                      {"count", m.count},
                      {"fps", m.fps},
                      {"resolution", {m.resolution.width, m.resolution.height}}});
    });

    route("GET", R"(/jobs/([^/]+)/frames/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      const auto job = service.queue().poll(req.matches[1]);
      if (!job) throw Error(ErrorCode::NotFound, "no job " + std::string(req.matches[1]));
      if (!job->result) throw Error(ErrorCode::NotFound, "job " + job->job_id + " has no result yet");
      const auto m = render::read_manifest(*job->result);
      const int k = std::stoi(req.matches[2]);
      if (k >= m.count) throw Error(ErrorCode::NotFound, "frame out of range");
      const auto bytes = read_file(fs::path(*job->result) / render::frame_file_name(k));
      res.set_content(reinterpret_cast<const char*>(bytes.data()), bytes.size(), "image/png");
    });

    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty() || req.path.rfind(kPrefix, 0) != 0) return;
      const auto code = res.status == 404 ? ErrorCode::NotFound : ErrorCode::InvalidArgument;
      auto body = problem_json(Error(code, "no route for " + req.method + " " + req.path));
      body["status"] = res.status;
      res.set_content(body.dump(), "application/problem+json");
    });
  }
};

ApiServer::ApiServer(Service& service, std::filesystem::path ui_dir) : impl_(std::make_unique<Impl>(service)) {
  impl_->install();
  if (!ui_dir.empty()) {
    if (!fs::is_directory(ui_dir)) throw Error(ErrorCode::NotFound, "UI directory not found: " + ui_dir.string());
    impl_->server.set_mount_point("/", ui_dir.string());
  }
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else {
    impl_->port = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (impl_->port < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  return impl_->port;
}

void ApiServer::listen() {
  if (impl_->port < 0) throw Error(ErrorCode::InvalidArgument, "bind() before listen()");
  impl_->server.listen_after_bind();
}

void ApiServer::start() {
  thread_ = std::thread([this] { listen(); });
  impl_->server.wait_until_ready();
}

void ApiServer::stop() {
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace streetstage::service

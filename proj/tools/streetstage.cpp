// streetstage: headless authoring, rendering and serving.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "streetstage/api_server.hpp"
#include "streetstage/render.hpp"
#include "streetstage/scene_io.hpp"
#include "streetstage/service.hpp"

namespace fs = std::filesystem;
namespace ss = streetstage;
using nlohmann::json;

namespace {

struct GlobalOptions {
  std::string config_path;
  std::string fixtures;
  std::string data_dir;
};

ss::service::Config resolve_config(const GlobalOptions& g) {
  ss::service::Config c;
  std::string path = g.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("STREETSTAGE_CONFIG")) path = env;
    else if (fs::is_regular_file("streetstage.json")) path = "streetstage.json";
  }
  if (!path.empty()) c = ss::service::load_config(path);
  if (!g.fixtures.empty()) {
    c.provider = "fixture";
    c.fixtures_dir = fs::absolute(g.fixtures);
  }
  if (!g.data_dir.empty()) c.data_dir = fs::absolute(g.data_dir);
  return c;
}

ss::staging::Scene load_scene_file(const fs::path& path) {
  auto scene = ss::scene_io::load_scene(path);
  ss::service::resolve_references(scene, fs::absolute(path).parent_path());
  return scene;
}

void print_job(const ss::queue::RenderJob& job, bool as_json) {
  if (as_json) {
    std::cout << ss::queue::to_json(job).dump(2) << "\n";
    return;
  }
  std::cout << job.job_id << "  " << ss::queue::to_string(job.state) << "  bundle " << job.bundle_id.substr(0, 12)
            << "  sub-jobs";
  for (auto s : job.subjobs) std::cout << " " << ss::queue::to_string(s);
  if (job.result) std::cout << "  result " << *job.result;
  if (job.error) std::cout << "  error: " << *job.error;
  std::cout << "\n";
}

void copy_sequence(const fs::path& from, const fs::path& to) {
  fs::remove_all(to);
  fs::create_directories(to);
  for (const auto& e : fs::directory_iterator(from)) {
    if (e.is_regular_file()) fs::copy_file(e.path(), to / e.path().filename());
  }
}

ss::service::ApiServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Street-view scene staging: scout imagery, validate and preview scenes, render job bundles"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config_path, "Config file (default: $STREETSTAGE_CONFIG or ./streetstage.json)");
  app.add_option("--fixtures", g.fixtures, "Use fixture imagery from this directory");
  app.add_option("--data-dir", g.data_dir, "Projects, cache and render queue directory");

  auto* scout = app.add_subcommand("scout", "List panoramic nodes inside a bounding box");
  std::string bbox;
  int limit = 100;
  bool scout_json = false;
  scout->add_option("--bbox", bbox, "minLon,minLat,maxLon,maxLat in degrees")->required();
  scout->add_option("--limit", limit, "Maximum number of nodes");
  scout->add_flag("--json", scout_json, "Print JSON");

  auto* validate = app.add_subcommand("validate", "Check a scene file and list every problem");
  std::string validate_path;
  bool validate_json = false;
  validate->add_option("scene", validate_path)->required();
  validate->add_flag("--json", validate_json, "Print JSON diagnostics");

  auto* preview = app.add_subcommand("preview", "Write the view at time t with mask cards drawn on top");
  std::string preview_path, preview_out;
  double preview_t = 0.0;
  preview->add_option("scene", preview_path)->required();
  preview->add_option("--t", preview_t, "Time in seconds");
  preview->add_option("--out", preview_out, "Output PNG")->required();

  auto* render = app.add_subcommand("render", "Render inputs, build the job bundle and run it on a backend");
  std::string render_path, render_out, backend, backend_url;
  std::optional<int> latency_ms;
  bool no_wait = false;
  double timeout_s = 3600.0;
  render->add_option("scene", render_path)->required();
  render->add_option("--out", render_out, "Output directory")->required();
  render->add_option("--backend", backend, "mock or http (default from config)")->check(CLI::IsMember({"mock", "http"}));
  render->add_option("--backend-url", backend_url, "Generation backend base URL");
  render->add_option("--latency-ms", latency_ms, "Mock per-mask latency");
  render->add_flag("--no-wait", no_wait, "Submit and return without waiting");
  render->add_option("--timeout", timeout_s, "Seconds to wait for the job");

  auto* jobs = app.add_subcommand("jobs", "Inspect the render queue");
  jobs->require_subcommand(1);
  auto* jobs_ls = jobs->add_subcommand("ls", "List jobs");
  bool jobs_json = false;
  jobs_ls->add_flag("--json", jobs_json, "Print JSON");
  auto* jobs_show = jobs->add_subcommand("show", "Show one job");
  std::string job_id;
  jobs_show->add_option("job_id", job_id)->required();

  auto* serve = app.add_subcommand("serve", "Serve the HTTP API and the UI bundle");
  std::string host, ui_dir;
  int port = -1;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->add_option("--ui", ui_dir, "Built UI directory to serve at /");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) {
      std::vector<ss::staging::Diagnostic> diags;
      try {
        const auto scene = ss::scene_io::load_scene(validate_path);
        diags = ss::service::check_scene(scene, fs::absolute(validate_path).parent_path());
      } catch (const ss::Error& e) {
        if (e.code() != ss::ErrorCode::InvalidScene) throw;
        diags.push_back({"$", e.what()});
      }
      if (validate_json) {
        json out = json::array();
        for (const auto& d : diags) out.push_back(ss::service::to_json(d));
        std::cout << json{{"ok", diags.empty()}, {"diagnostics", out}}.dump(2) << "\n";
      } else if (diags.empty()) {
        std::cout << validate_path << ": ok\n";
      } else {
        for (const auto& d : diags) std::cout << validate_path << ": " << d.path << ": " << d.message << "\n";
      }
      return diags.empty() ? 0 : 1;
    }

    auto config = resolve_config(g);

    if (*jobs) {
      const auto state = ss::service::read_queue(config.data_dir / "queue");
      if (*jobs_ls) {
        std::vector<const ss::queue::RenderJob*> all;
        for (const auto& [_, j] : state.jobs()) all.push_back(&j);
        std::sort(all.begin(), all.end(), [](auto* a, auto* b) { return a->seq < b->seq; });
        if (jobs_json) {
          json out = json::array();
          for (const auto* j : all) out.push_back(ss::queue::to_json(*j));
          std::cout << out.dump(2) << "\n";
        } else {
          for (const auto* j : all) print_job(*j, false);
        }
        return 0;
      }
      const auto* job = state.find(job_id);
      if (!job) {
        std::cerr << "no job " << job_id << "\n";
        return 1;
      }
      print_job(*job, true);
      return 0;
    }

    if (*render) {
      if (!backend.empty()) config.backend = backend;
      if (!backend_url.empty()) config.backend_url = backend_url;
      if (latency_ms) config.mock_latency = std::chrono::milliseconds(*latency_ms);
    }
    ss::service::Service service(config);

    if (*scout) {
      const auto nodes = service.search_nodes(ss::service::parse_bbox(bbox), limit);
      if (scout_json) {
        json out = json::array();
        for (const auto& n : nodes) out.push_back(ss::service::to_json(n));
        std::cout << out.dump(2) << "\n";
      } else {
        for (const auto& n : nodes) {
          std::printf("%s  %.7f %.7f  compass %.1f  captured %lld\n", n.id.c_str(),
                      ss::geo::rad_to_deg(n.position.latitude), ss::geo::rad_to_deg(n.position.longitude),
                      ss::geo::rad_to_deg(n.compass_angle), static_cast<long long>(n.capture_time));
        }
        if (nodes.empty()) std::cerr << "no panoramic nodes in that box\n";
      }
      return 0;
    }

    if (*preview) {
      const auto scene = load_scene_file(preview_path);
      if (preview_t < 0.0 || preview_t > scene.duration) {
        std::cerr << "--t must lie in [0, " << scene.duration << "]\n";
        return 2;
      }
      ss::write_png(service.preview(scene, preview_t), preview_out);
      std::cout << preview_out << "\n";
      return 0;
    }

    if (*render) {
      const auto scene = load_scene_file(render_path);
      auto diags = ss::service::check_scene(scene, fs::absolute(render_path).parent_path());
      if (!diags.empty()) throw ss::service::SceneRejected(std::move(diags));
      const fs::path out = fs::absolute(render_out);
      const auto id = service.render(scene, out);
      std::cout << "submitted " << id << "\n";
      if (no_wait) return 0;
      const auto job = service.queue().wait(id, std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000)));
      print_job(job, false);
      if (job.state != ss::queue::JobState::done || !job.result) return 1;
      copy_sequence(*job.result, out / "result");
      const auto m = ss::render::read_manifest(out / "result");
      std::cout << "result " << (out / "result").string() << "  " << m.count << " frames\n";
      return 0;
    }

    if (*serve) {
      if (!host.empty()) config.host = host;
      if (port >= 0) config.port = port;
      if (!ui_dir.empty()) config.ui_dir = fs::absolute(ui_dir);
      ss::service::ApiServer server(service, config.ui_dir);
      const int bound = server.bind(config.host, config.port);
      service.queue();
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on http://" << config.host << ":" << bound << "/api/v1" << std::endl;
      server.listen();
      g_server = nullptr;
      return 0;
    }
  } catch (const ss::service::SceneRejected& e) {
    for (const auto& d : e.diagnostics()) std::cerr << d.path << ": " << d.message << "\n";
    return 1;
  } catch (const ss::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

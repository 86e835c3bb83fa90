#pragma once

// The service layer shared by the CLI and the HTTP API: configuration, the
// on-disk project store and one facade over imagery, staging, render and the
// render queue.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "streetstage/error.hpp"
#include "streetstage/genbackend.hpp"
#include "streetstage/imagery.hpp"
#include "streetstage/queue.hpp"
#include "streetstage/staging.hpp"

namespace streetstage::service {

namespace fs = std::filesystem;
using nlohmann::json;

// Config file (JSON); relative paths resolve against the file's directory.
// Without a data_dir key the store lives in ./.streetstage.
//
//   {
//     "data_dir": ".streetstage",
//     "imagery": {"provider": "fixture" | "mapillary", "fixtures": "...", "token": "...",
//                 "base_url": "...", "cache_dir": "...", "cache_budget_bytes": N},
//     "backend": {"kind": "mock" | "http", "url": "...", "token": "...", "mock_latency_ms": N},
//     "server": {"host": "127.0.0.1", "port": 8080, "ui_dir": "..."}
//   }
struct Config {
  fs::path data_dir = ".streetstage";

  std::string provider = "fixture";
  fs::path fixtures_dir;
  std::string provider_token;  // empty: read MAPILLARY_ACCESS_TOKEN
  std::string provider_url = imagery::MapillaryProvider::kDefaultBaseUrl;
  fs::path cache_dir;          // empty: data_dir/cache
  std::uint64_t cache_budget = imagery::kDefaultCacheBudget;

  std::string backend = "mock";
  std::string backend_url;
  std::string backend_token;
  std::chrono::milliseconds mock_latency{0};

  std::string host = "127.0.0.1";
  int port = 8080;
  fs::path ui_dir;
};

/// Throws InvalidArgument on unknown keys or bad values.
Config config_from_json(const json& doc, const fs::path& base_dir);
Config load_config(const fs::path& path);

/// Rejected scene mutation; carries the validator's diagnostics.
class SceneRejected : public Error {
 public:
  explicit SceneRejected(std::vector<staging::Diagnostic> diagnostics);
  const std::vector<staging::Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<staging::Diagnostic> diagnostics_;
};

/// validate_scene plus the checks rendering needs: a non-empty scene prompt
/// and reference images that exist (relative paths taken from `base_dir`).
std::vector<staging::Diagnostic> check_scene(const staging::Scene& scene, const fs::path& base_dir);

/// Makes relative reference-image paths absolute against `base_dir`.
void resolve_references(staging::Scene& scene, const fs::path& base_dir);

json to_json(const staging::Diagnostic& d);
json to_json(const imagery::ImageryNode& node);
json to_json(const staging::SceneSample& sample, const staging::Scene& scene, double t);

/// "minLon,minLat,maxLon,maxLat" in degrees.
imagery::BoundingBox parse_bbox(const std::string& text);

// --- projects ---

struct Project {
  std::string project_id;
  staging::Scene scene;
  std::uint64_t revision = 0;
  std::vector<std::string> jobs;
};

json to_json(const Project& project);

/// Projects live in dir/<id>/ as scene.json, project.json and an append-only
/// events.jsonl. Every scene change bumps the revision; mutations on one
/// project are serialized and checked against the caller's revision.
class ProjectStore {
 public:
  explicit ProjectStore(fs::path dir);

  /// Throws SceneRejected.
  Project create(staging::Scene scene);
  Project get(const std::string& id) const;  // NotFound
  std::vector<Project> list() const;

  using Mutation = std::function<void(staging::Scene&)>;

  /// Applies `fn` to a copy of the scene and commits it when it validates.
  /// Throws Conflict when `expected_revision` is stale, SceneRejected when
  /// the result is invalid.
  Project mutate(const std::string& id, std::optional<std::uint64_t> expected_revision,
                 const std::string& op, const Mutation& fn);
  Project put(const std::string& id, staging::Scene scene, std::uint64_t expected_revision);

  /// Appends to the job history; not a scene change, so the revision stays.
  Project record_job(const std::string& id, const std::string& job_id);

  fs::path project_dir(const std::string& id) const { return dir_ / id; }
  const fs::path& directory() const { return dir_; }

 private:
  struct Slot {
    std::mutex mu;
    Project project;
  };
  std::shared_ptr<Slot> slot(const std::string& id) const;
  void persist(const Project& p, const std::string& op, bool scene_changed);

  fs::path dir_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Slot>> slots_;
  std::uint64_t next_id_ = 1;
};

// --- facade ---

/// Queue state rebuilt from a queue directory's log without taking the
/// queue lock, for read-only listing.
queue::QueueState read_queue(const fs::path& queue_dir);

std::shared_ptr<imagery::ImageryProvider> make_provider(const Config& config);
std::shared_ptr<genbackend::BackendClient> make_backend(const Config& config);

class Service {
 public:
  explicit Service(Config config);
  /// Injected provider and backend; the rest comes from `config`.
  Service(Config config, std::shared_ptr<imagery::ImageryProvider> provider,
          std::shared_ptr<genbackend::BackendClient> backend);
  ~Service();

  const Config& config() const { return config_; }
  imagery::ImageryClient& imagery() { return *imagery_; }
  ProjectStore& projects() { return projects_; }
  /// Opened on first use; holds the queue directory lock from then on.
  queue::RenderQueue& queue();
  fs::path queue_dir() const { return config_.data_dir / "queue"; }

  std::vector<imagery::ImageryNode> search_nodes(const imagery::BoundingBox& box, int limit);
  /// Perspective view from a panoramic node; angles in radians. Vertical FOV
  /// follows the aspect ratio.
  Image view(const std::string& node_id, double heading, double pitch, double hfov,
             geo::ScreenSize size);
  /// The scene's view at time t with every actor card painted on top.
  Image preview(const staging::Scene& scene, double t);

  /// Default scene at a panoramic node.
  staging::Scene new_scene(const std::string& node_id);

  /// Renders inputs under work_dir, writes work_dir/bundle.json and submits
  /// it. Reference images must already be absolute.
  std::string render(const staging::Scene& scene, const fs::path& work_dir);
  std::string render_project(const std::string& project_id);

 private:
  std::shared_ptr<const panorama::Panorama> panorama_for(const std::string& node_id);

  Config config_;
  std::shared_ptr<genbackend::BackendClient> backend_;
  std::unique_ptr<imagery::ImageryClient> imagery_;
  ProjectStore projects_;
  std::mutex queue_mu_;
  std::unique_ptr<queue::RenderQueue> queue_;
};

/// Composites opaque actor cards onto an RGB frame, in sample order.
void overlay_quads(Image& frame, const staging::SceneSample& sample, geo::ScreenSize size);

}  // namespace streetstage::service

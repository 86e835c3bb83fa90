#pragma once

// Job bundles (background frames, per-actor mask frames, prompts, optional
// reference images) and the clients that turn them into generated frames.

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "streetstage/render.hpp"
#include "streetstage/staging.hpp"

namespace streetstage::genbackend {

namespace fs = std::filesystem;

/// A frame directory written by render::SequenceWriter plus its content digest.
struct SequenceRef {
  fs::path dir;
  render::SequenceManifest manifest;
  std::string digest;
};

/// Digest over the manifest fields and every frame's bytes, in index order.
std::string sequence_digest(const fs::path& dir);
SequenceRef sequence_ref(const fs::path& dir);

struct MaskInput {
  SequenceRef frames;
  std::string prompt_fragment;
  /// Absent means the backend derives a reference from the prompts.
  std::optional<fs::path> reference_image;
  std::string reference_digest;
};

struct JobBundle {
  std::string bundle_id;
  SequenceRef background;
  std::vector<MaskInput> masks;
  std::string scene_prompt;
  nlohmann::json sampling_config;
};

/// {steps: 6, guidance: 1, shift: 5, upscale: true}
nlohmann::json default_sampling_config();

/// Throws EmptyPrompt or SequenceMismatch. `sampling_config` is passed through
/// untouched except that missing default keys are filled in.
JobBundle build_bundle(const staging::Scene& scene, const render::RenderedInputs& inputs,
                       nlohmann::json sampling_config = default_sampling_config());

/// Canonical form the bundle id is hashed from: paths excluded, keys sorted.
std::string canonical_bundle_text(const JobBundle& bundle);

/// bundle.json with paths relative to the manifest's directory.
nlohmann::json bundle_to_json(const JobBundle& bundle, const fs::path& relative_to);
void write_bundle(const JobBundle& bundle, const fs::path& manifest_path);
/// Re-reads and re-verifies digests; throws InvalidArgument/SequenceMismatch.
JobBundle load_bundle(const fs::path& manifest_path);

/// Sub-job i composites mask i over `input` (the background for i = 0, the
/// previous sub-job's output afterwards) and writes a frame directory.
class BackendClient {
 public:
  virtual ~BackendClient() = default;
  virtual std::string name() const = 0;
  /// Throws BackendUnreachable when the backend cannot take work.
  virtual void probe() {}
  virtual SequenceRef generate_mask(const JobBundle& bundle, std::size_t mask_index, const fs::path& input,
                                    const fs::path& out_dir) = 0;
};

struct SubJobSpan {
  std::size_t mask_index = 0;
  std::chrono::steady_clock::time_point start;
  std::chrono::steady_clock::time_point end;
};

struct MockOptions {
  /// Wall time each sub-job takes at minimum (simulated sampling latency).
  std::chrono::milliseconds latency{0};
  /// Leading probe() calls that report the backend unreachable.
  int unreachable_probes = 0;
  /// Mask index whose sub-job fails with BackendFailure.
  std::optional<std::size_t> fail_mask;
};

/// Deterministic stand-in: fills each mask region with a seeded texture.
class MockBackend final : public BackendClient {
 public:
  explicit MockBackend(MockOptions options = {});

  std::string name() const override { return "mock"; }
  void probe() override;
  SequenceRef generate_mask(const JobBundle& bundle, std::size_t mask_index, const fs::path& input,
                            const fs::path& out_dir) override;

  std::vector<SubJobSpan> spans() const;
  int probes() const;

 private:
  MockOptions options_;
  mutable std::mutex mu_;
  std::vector<SubJobSpan> spans_;
  int probes_ = 0;
};

/// RGB texel of the mock texture for (bundle, mask, frame, x, y).
std::array<std::uint8_t, 3> mock_texel(std::uint64_t seed, int frame, int x, int y);
std::uint64_t mock_seed(const std::string& bundle_id, std::size_t mask_index);

/// Runs every sub-job in mask order against `backend`; returns the last output.
SequenceRef run_sequential(BackendClient& backend, const JobBundle& bundle, const fs::path& work_dir);

/// Mock generation with the given per-mask latency.
SequenceRef mock_generate(const JobBundle& bundle, const fs::path& work_dir,
                          std::chrono::milliseconds latency = std::chrono::milliseconds{0});

struct HttpBackendOptions {
  std::string base_url;
  std::string token;
  std::chrono::milliseconds poll_interval{500};
  int timeout_s = 30;
  /// Upper bound on one sub-job's wall time before it counts as failed.
  std::chrono::seconds max_wait{3600};
};

/// Protocol (all under base_url, bearer token when set):
///   GET  /health                      -> 200 when ready
///   POST /v1/subjobs   (zip body)     -> 202 {"id": ...}
///        zip: request.json, input/<frames>, mask/<frames>, reference.<ext>?
///   GET  /v1/subjobs/{id}             -> {"state": queued|running|done|failed, "error"?}
///   GET  /v1/subjobs/{id}/result      -> zip of a frame directory
class HttpBackend final : public BackendClient {
 public:
  explicit HttpBackend(HttpBackendOptions options);

  std::string name() const override { return "http"; }
  void probe() override;
  SequenceRef generate_mask(const JobBundle& bundle, std::size_t mask_index, const fs::path& input,
                            const fs::path& out_dir) override;

 private:
  HttpBackendOptions options_;
};

/// request.json body for one sub-job.
nlohmann::json subjob_request(const JobBundle& bundle, std::size_t mask_index);

}  // namespace streetstage::genbackend

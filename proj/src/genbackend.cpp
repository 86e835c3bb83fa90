#include "streetstage/genbackend.hpp"

#include <algorithm>
#include <cstdio>
#include <thread>

#include "http.hpp"
#include "streetstage/archive.hpp"
#include "streetstage/error.hpp"
#include "streetstage/hashing.hpp"
#include "streetstage/image.hpp"

namespace streetstage::genbackend {

using nlohmann::json;
using render::SequenceManifest;

namespace {

json manifest_json(const SequenceManifest& m) {
  return {{"fps", m.fps},
          {"width", m.resolution.width},
          {"height", m.resolution.height},
          {"count", m.count},
          {"layout", m.layout == ChannelLayout::rgba ? "rgba" : "rgb"}};
}

bool same_shape(const SequenceManifest& a, const SequenceManifest& b) {
  return a.fps == b.fps && a.resolution == b.resolution && a.count == b.count;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::string subjob_dir_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sub_%02zu", i);
  return buf;
}

void check_shapes(const JobBundle& b) {
  if (b.masks.empty()) throw Error(ErrorCode::SequenceMismatch, "bundle has no mask sequences");
  const auto& bg = b.background.manifest;
  if (bg.layout != ChannelLayout::rgb) throw Error(ErrorCode::SequenceMismatch, "background must be RGB");
  if (bg.count < 1) throw Error(ErrorCode::SequenceMismatch, "background has no frames");
  for (std::size_t i = 0; i < b.masks.size(); ++i) {
    const auto& m = b.masks[i].frames.manifest;
    if (m.layout != ChannelLayout::rgba) {
      throw Error(ErrorCode::SequenceMismatch, "mask " + std::to_string(i) + " must be RGBA");
    }
    if (!same_shape(m, bg)) {
      throw Error(ErrorCode::SequenceMismatch,
                  "mask " + std::to_string(i) + " differs from the background in fps, resolution or frame count");
    }
  }
}

}  // namespace

std::string sequence_digest(const fs::path& dir) {
  const auto m = render::read_manifest(dir);
  Sha256 h;
  h.update(manifest_json(m).dump());
  for (int k = 0; k < m.count; ++k) {
    const auto name = render::frame_file_name(k);
    h.update(name);
    h.update(sha256_file(dir / name));
  }
  return h.hex_digest();
}

SequenceRef sequence_ref(const fs::path& dir) { return {dir, render::read_manifest(dir), sequence_digest(dir)}; }

json default_sampling_config() { return {{"steps", 6}, {"guidance", 1}, {"shift", 5}, {"upscale", true}}; }

std::string canonical_bundle_text(const JobBundle& b) {
  json masks = json::array();
  for (const auto& m : b.masks) {
    masks.push_back({{"frames", m.frames.digest},
                     {"prompt", m.prompt_fragment},
                     {"reference", m.reference_image ? json(m.reference_digest) : json(nullptr)}});
  }
  auto bg = manifest_json(b.background.manifest);
  bg["digest"] = b.background.digest;
  const json doc{{"version", 1},
                 {"background", bg},
                 {"masks", masks},
                 {"scene_prompt", b.scene_prompt},
                 {"sampling_config", b.sampling_config}};
  return doc.dump();
}

JobBundle build_bundle(const staging::Scene& scene, const render::RenderedInputs& inputs, json sampling_config) {
  if (trim(scene.scene_prompt).empty()) throw Error(ErrorCode::EmptyPrompt, "scene prompt is empty");
  if (!sampling_config.is_object()) throw Error(ErrorCode::InvalidArgument, "sampling_config must be an object");
  const auto defaults = default_sampling_config();
  for (const auto& [k, v] : defaults.items()) {
    if (!sampling_config.contains(k)) sampling_config[k] = v;
  }
  if (inputs.masks.size() != scene.actors.size()) {
    throw Error(ErrorCode::SequenceMismatch, "one mask sequence per actor expected");
  }

  JobBundle b;
  b.scene_prompt = scene.scene_prompt;
  b.sampling_config = std::move(sampling_config);
  b.background = sequence_ref(inputs.background);
  for (std::size_t i = 0; i < inputs.masks.size(); ++i) {
    MaskInput m;
    m.frames = sequence_ref(inputs.masks[i]);
    m.prompt_fragment = scene.actors[i].prompt_fragment;
    if (scene.actors[i].reference_image) {
      const fs::path ref = *scene.actors[i].reference_image;
      if (!fs::is_regular_file(ref)) throw Error(ErrorCode::NotFound, "reference image not found: " + ref.string());
      m.reference_image = fs::absolute(ref);
      m.reference_digest = sha256_file(ref);
    }
    b.masks.push_back(std::move(m));
  }
  check_shapes(b);
  const auto& bg = b.background.manifest;
  if (bg.count != staging::frame_count(scene) || !(bg.resolution == scene.resolution) || bg.fps != scene.fps) {
    throw Error(ErrorCode::SequenceMismatch, "rendered sequences do not match the scene's output format");
  }
  b.bundle_id = sha256_hex(canonical_bundle_text(b));
  return b;
}

json bundle_to_json(const JobBundle& b, const fs::path& relative_to) {
  const auto rel = [&](const fs::path& p) { return fs::absolute(p).lexically_relative(fs::absolute(relative_to)).generic_string(); };
  auto doc = json::parse(canonical_bundle_text(b));
  doc["format"] = "streetstage.bundle";
  doc["bundle_id"] = b.bundle_id;
  doc["background"]["path"] = rel(b.background.dir);
  for (std::size_t i = 0; i < b.masks.size(); ++i) {
    doc["masks"][i]["path"] = rel(b.masks[i].frames.dir);
    if (b.masks[i].reference_image) doc["masks"][i]["reference_path"] = b.masks[i].reference_image->string();
  }
  return doc;
}

void write_bundle(const JobBundle& b, const fs::path& manifest_path) {
  const auto text = bundle_to_json(b, manifest_path.parent_path()).dump(2) + "\n";
  write_file_atomic(manifest_path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

JobBundle load_bundle(const fs::path& manifest_path) {
  const auto bytes = read_file(manifest_path);
  const json doc = json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (doc.is_discarded() || doc.value("format", "") != "streetstage.bundle") {
    throw Error(ErrorCode::InvalidArgument, "not a bundle manifest: " + manifest_path.string());
  }
  const auto base = manifest_path.parent_path();
  JobBundle b;
  try {
    b.scene_prompt = doc.at("scene_prompt").get<std::string>();
    b.sampling_config = doc.at("sampling_config");
    b.background = sequence_ref(base / doc.at("background").at("path").get<std::string>());
    for (const auto& m : doc.at("masks")) {
      MaskInput in;
      in.frames = sequence_ref(base / m.at("path").get<std::string>());
      in.prompt_fragment = m.at("prompt").get<std::string>();
      if (m.contains("reference_path")) {
        in.reference_image = m["reference_path"].get<std::string>();
        in.reference_digest = sha256_file(*in.reference_image);
      }
      b.masks.push_back(std::move(in));
    }
    b.bundle_id = doc.at("bundle_id").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed bundle manifest: ") + e.what());
  }
  check_shapes(b);
  if (sha256_hex(canonical_bundle_text(b)) != b.bundle_id) {
    throw Error(ErrorCode::SequenceMismatch, "bundle inputs changed since the bundle was built");
  }
  return b;
}

// ---- mock backend ----

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t mock_seed(const std::string& bundle_id, std::size_t mask_index) {
  const auto hex = sha256_hex(bundle_id + ":" + std::to_string(mask_index));
  return std::stoull(hex.substr(0, 16), nullptr, 16);
}

std::array<std::uint8_t, 3> mock_texel(std::uint64_t seed, int frame, int x, int y) {
  // 4x4 pixel cells so the texture reads as blocks rather than noise.
  const std::uint64_t cell = (static_cast<std::uint64_t>(frame) << 42) ^
                             (static_cast<std::uint64_t>(y / 4) << 21) ^ static_cast<std::uint64_t>(x / 4);
  const auto h = splitmix64(seed ^ splitmix64(cell));
  return {static_cast<std::uint8_t>(h), static_cast<std::uint8_t>(h >> 8), static_cast<std::uint8_t>(h >> 16)};
}

MockBackend::MockBackend(MockOptions options) : options_(options) {}

void MockBackend::probe() {
  std::lock_guard lock(mu_);
  ++probes_;
  if (probes_ <= options_.unreachable_probes) {
    throw Error(ErrorCode::BackendUnreachable, "mock backend is offline (probe " + std::to_string(probes_) + ")");
  }
}

SequenceRef MockBackend::generate_mask(const JobBundle& bundle, std::size_t mask_index, const fs::path& input,
                                       const fs::path& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  auto record = [&] {
    std::lock_guard lock(mu_);
    spans_.push_back({mask_index, start, std::chrono::steady_clock::now()});
  };
  if (mask_index >= bundle.masks.size()) throw Error(ErrorCode::InvalidArgument, "mask index out of range");
  if (options_.fail_mask && *options_.fail_mask == mask_index) {
    std::this_thread::sleep_until(start + options_.latency);
    record();
    throw Error(ErrorCode::BackendFailure, "mock failure on mask " + std::to_string(mask_index));
  }

  const auto in_manifest = render::read_manifest(input);
  const auto& mask_dir = bundle.masks[mask_index].frames.dir;
  const auto mask_manifest = render::read_manifest(mask_dir);
  if (!same_shape(in_manifest, mask_manifest) || in_manifest.layout != ChannelLayout::rgb) {
    throw Error(ErrorCode::SequenceMismatch, "sub-job input does not match its mask sequence");
  }
  const auto seed = mock_seed(bundle.bundle_id, mask_index);
  render::SequenceWriter writer(out_dir, in_manifest.fps, in_manifest.resolution, ChannelLayout::rgb);
  for (int k = 0; k < in_manifest.count; ++k) {
    Image frame = render::read_frame(input, k);
    const Image mask = render::read_frame(mask_dir, k);
    if (mask.layout() != ChannelLayout::rgba || mask.width() != frame.width() || mask.height() != frame.height()) {
      throw Error(ErrorCode::SequenceMismatch, "mask frame " + std::to_string(k) + " has the wrong format");
    }
    for (int y = 0; y < frame.height(); ++y) {
      for (int x = 0; x < frame.width(); ++x) {
        const int a = mask.pixel(x, y)[3];
        if (a == 0) continue;
        const auto t = mock_texel(seed, k, x, y);
        auto* p = frame.pixel(x, y);
        for (int c = 0; c < 3; ++c) p[c] = static_cast<std::uint8_t>((t[c] * a + p[c] * (255 - a) + 127) / 255);
      }
    }
    writer.write(k, frame);
  }
  writer.finish();
  std::this_thread::sleep_until(start + options_.latency);
  record();
  return sequence_ref(out_dir);
}

std::vector<SubJobSpan> MockBackend::spans() const {
  std::lock_guard lock(mu_);
  return spans_;
}

int MockBackend::probes() const {
  std::lock_guard lock(mu_);
  return probes_;
}

SequenceRef run_sequential(BackendClient& backend, const JobBundle& bundle, const fs::path& work_dir) {
  check_shapes(bundle);
  fs::path input = bundle.background.dir;
  SequenceRef last;
  for (std::size_t i = 0; i < bundle.masks.size(); ++i) {
    last = backend.generate_mask(bundle, i, input, work_dir / subjob_dir_name(i));
    input = last.dir;
  }
  return last;
}

SequenceRef mock_generate(const JobBundle& bundle, const fs::path& work_dir, std::chrono::milliseconds latency) {
  MockBackend backend(MockOptions{latency, 0, std::nullopt});
  return run_sequential(backend, bundle, work_dir);
}

// ---- HTTP backend ----

json subjob_request(const JobBundle& b, std::size_t i) {
  return {{"bundle_id", b.bundle_id},
          {"mask_index", i},
          {"mask_count", b.masks.size()},
          {"scene_prompt", b.scene_prompt},
          {"prompt_fragment", b.masks.at(i).prompt_fragment},
          {"has_reference", b.masks[i].reference_image.has_value()},
          {"sampling_config", b.sampling_config},
          {"frames", manifest_json(b.background.manifest)}};
}

namespace {

httplib::Headers auth_headers(const std::string& token) {
  if (token.empty()) return {};
  return {{"Authorization", "Bearer " + token}};
}

[[noreturn]] void raise_backend(const httplib::Result& res, const std::string& what) {
  if (!res) throw Error(ErrorCode::BackendUnreachable, what + ": " + httplib::to_string(res.error()));
  if (res->status == 503) throw Error(ErrorCode::BackendUnreachable, what + ": backend busy or starting");
  throw Error(ErrorCode::BackendFailure, what + ": HTTP " + std::to_string(res->status) + " " + res->body);
}

}  // namespace

HttpBackend::HttpBackend(HttpBackendOptions options) : options_(std::move(options)) {
  detail::split_url(options_.base_url);
}

void HttpBackend::probe() {
  const auto url = detail::join_url(options_.base_url, "/health");
  auto cli = detail::make_client(url.origin, options_.timeout_s);
  const auto res = cli.Get(url.path, auth_headers(options_.token));
  if (!res || res->status != 200) {
    throw Error(ErrorCode::BackendUnreachable,
                "backend health check failed: " + (res ? "HTTP " + std::to_string(res->status)
                                                       : httplib::to_string(res.error())));
  }
}

SequenceRef HttpBackend::generate_mask(const JobBundle& bundle, std::size_t mask_index, const fs::path& input,
                                       const fs::path& out_dir) {
  if (mask_index >= bundle.masks.size()) throw Error(ErrorCode::InvalidArgument, "mask index out of range");
  const auto& mask = bundle.masks[mask_index];
  std::vector<std::uint8_t> payload;
  {
    archive::ZipWriter zip;
    const auto req = subjob_request(bundle, mask_index).dump(2);
    zip.add("request.json", std::span(reinterpret_cast<const std::uint8_t*>(req.data()), req.size()));
    zip.add_directory(input, "input/");
    zip.add_directory(mask.frames.dir, "mask/");
    if (mask.reference_image) {
      zip.add("reference" + mask.reference_image->extension().string(), read_file(*mask.reference_image));
    }
    payload = zip.finish();
  }

  const auto base = detail::join_url(options_.base_url, "/v1/subjobs");
  auto cli = detail::make_client(base.origin, options_.timeout_s);
  const auto headers = auth_headers(options_.token);
  const auto posted = cli.Post(base.path, headers, reinterpret_cast<const char*>(payload.data()), payload.size(),
                               "application/zip");
  if (!posted || (posted->status != 200 && posted->status != 202)) raise_backend(posted, "sub-job submission");
  std::string id;
  try {
    id = json::parse(posted->body).at("id").get<std::string>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::BackendFailure, "backend returned no sub-job id");
  }
  payload.clear();
  payload.shrink_to_fit();

  const auto deadline = std::chrono::steady_clock::now() + options_.max_wait;
  for (;;) {
    const auto st = cli.Get(base.path + "/" + id, headers);
    if (!st || st->status != 200) raise_backend(st, "sub-job status");
    json doc = json::parse(st->body, nullptr, false);
    const auto state = doc.is_object() ? doc.value("state", "") : "";
    if (state == "done") break;
    if (state == "failed") {
      throw Error(ErrorCode::BackendFailure, "sub-job " + id + " failed: " + doc.value("error", "unknown error"));
    }
    if (state != "queued" && state != "running") throw Error(ErrorCode::BackendFailure, "unknown sub-job state");
    if (std::chrono::steady_clock::now() > deadline) {
      throw Error(ErrorCode::BackendFailure, "sub-job " + id + " exceeded its time budget");
    }
    std::this_thread::sleep_for(options_.poll_interval);
  }

  const auto result = cli.Get(base.path + "/" + id + "/result", headers);
  if (!result || result->status != 200) raise_backend(result, "sub-job result");
  fs::remove_all(out_dir);
  try {
    archive::extract_zip(std::span(reinterpret_cast<const std::uint8_t*>(result->body.data()), result->body.size()),
                         out_dir);
    auto ref = sequence_ref(out_dir);
    const auto& bg = bundle.background.manifest;
    if (!same_shape(ref.manifest, bg) || ref.manifest.layout != ChannelLayout::rgb) {
      throw Error(ErrorCode::BackendFailure, "backend result does not match the bundle's frame format");
    }
    return ref;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::BackendFailure) throw;
    throw Error(ErrorCode::BackendFailure, std::string("unusable backend result: ") + e.what());
  }
}

}  // namespace streetstage::genbackend

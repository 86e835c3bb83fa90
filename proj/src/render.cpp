#include "streetstage/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "streetstage/error.hpp"

namespace streetstage::render {

namespace fs = std::filesystem;
using nlohmann::json;

double frame_time(const staging::Scene& scene, int k) { return k / scene.fps; }

void render_background(const staging::Scene& scene, const panorama::Panorama& pano,
                       const FrameSink& sink) {
  const int n = staging::frame_count(scene);
  for (int k = 0; k < n; ++k) {
    sink(k, panorama::render_view(pano, staging::camera_at(scene, frame_time(scene, k)),
                                  scene.resolution));
  }
}

FrameSequence render_background(const staging::Scene& scene, const panorama::Panorama& pano) {
  FrameSequence seq{{}, scene.fps, scene.resolution, ChannelLayout::rgb};
  seq.frames.reserve(static_cast<std::size_t>(staging::frame_count(scene)));
  render_background(scene, pano, [&](int, Image&& frame) { seq.frames.push_back(std::move(frame)); });
  return seq;
}

void paint_quad(Image& rgba, const staging::ScreenQuad& quad, Rgba color) {
  if (rgba.layout() != ChannelLayout::rgba) {
    throw Error(ErrorCode::InvalidArgument, "mask frames must be RGBA");
  }
  if (quad.empty()) return;
  // Pixel x is covered iff left <= x + 0.5 < right.
  const auto first = [](double edge) { return std::ceil(edge - 0.5); };
  const int x0 = static_cast<int>(std::max(0.0, first(quad.left)));
  const int x1 = static_cast<int>(std::min<double>(rgba.width(), first(quad.right)));
  const int y0 = static_cast<int>(std::max(0.0, first(quad.top)));
  const int y1 = static_cast<int>(std::min<double>(rgba.height(), first(quad.bottom)));
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) std::copy(color.begin(), color.end(), rgba.pixel(x, y));
  }
}

Image mask_frame(const staging::SceneSample& sample, const std::string& actor_id,
                 geo::ScreenSize resolution, const RenderOptions& options) {
  Image frame(resolution.width, resolution.height, ChannelLayout::rgba);
  for (const auto& q : sample.quads) {
    if (q.actor_id == actor_id) paint_quad(frame, q.quad, options.mask_color);
  }
  return frame;
}

void render_masks(const staging::Scene& scene, const MaskSink& sink, const RenderOptions& options) {
  const int n = staging::frame_count(scene);
  for (int k = 0; k < n; ++k) {
    const auto sample = staging::sample_scene(scene, frame_time(scene, k));
    for (std::size_t a = 0; a < scene.actors.size(); ++a) {
      sink(a, k, mask_frame(sample, scene.actors[a].id, scene.resolution, options));
    }
  }
}

std::vector<FrameSequence> render_masks(const staging::Scene& scene, const RenderOptions& options) {
  std::vector<FrameSequence> out(scene.actors.size(),
                                 FrameSequence{{}, scene.fps, scene.resolution, ChannelLayout::rgba});
  render_masks(
      scene, [&](std::size_t a, int, Image&& frame) { out[a].frames.push_back(std::move(frame)); },
      options);
  return out;
}

void alpha_over(Image& base, const Image& overlay) {
  if (base.layout() != ChannelLayout::rgb || overlay.layout() != ChannelLayout::rgba ||
      base.width() != overlay.width() || base.height() != overlay.height()) {
    throw Error(ErrorCode::SequenceMismatch, "alpha_over needs RGB base and same-size RGBA overlay");
  }
  for (int y = 0; y < base.height(); ++y) {
    for (int x = 0; x < base.width(); ++x) {
      const std::uint8_t* src = overlay.pixel(x, y);
      const unsigned a = src[3];
      if (a == 0) continue;
      std::uint8_t* dst = base.pixel(x, y);
      if (a == 255) {
        std::copy(src, src + 3, dst);
        continue;
      }
      for (int c = 0; c < 3; ++c) {
        dst[c] = static_cast<std::uint8_t>((src[c] * a + dst[c] * (255 - a) + 127) / 255);
      }
    }
  }
}

FrameSequence compose_preview(const FrameSequence& background,
                              std::span<const FrameSequence> masks) {
  for (const auto& m : masks) {
    if (m.frames.size() != background.frames.size() || !(m.resolution == background.resolution)) {
      throw Error(ErrorCode::SequenceMismatch, "mask sequence does not match the background");
    }
  }
  FrameSequence out = background;
  for (std::size_t k = 0; k < out.frames.size(); ++k) {
    for (const auto& m : masks) alpha_over(out.frames[k], m.frames[k]);
  }
  return out;
}

std::string frame_file_name(int index) {
  char name[32];
  std::snprintf(name, sizeof(name), "frame_%05d.png", index);
  return name;
}

namespace {

const char* layout_name(ChannelLayout layout) {
  return layout == ChannelLayout::rgba ? "rgba" : "rgb";
}

}  // namespace

SequenceWriter::SequenceWriter(fs::path dir, double fps, geo::ScreenSize resolution,
                               ChannelLayout layout)
    : dir_(std::move(dir)), manifest_{fps, resolution, 0, layout} {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir_.string());
}

void SequenceWriter::write(int index, const Image& frame) {
  if (index != manifest_.count) {
    throw Error(ErrorCode::InvalidArgument, "frames must be written in order");
  }
  if (frame.width() != manifest_.resolution.width ||
      frame.height() != manifest_.resolution.height || frame.layout() != manifest_.layout) {
    throw Error(ErrorCode::SequenceMismatch, "frame does not match the sequence format");
  }
  write_png(frame, dir_ / frame_file_name(index));
  ++manifest_.count;
}

SequenceManifest SequenceWriter::finish() {
  const json doc = {{"format", "streetstage.frames"},
                    {"version", 1},
                    {"fps", manifest_.fps},
                    {"width", manifest_.resolution.width},
                    {"height", manifest_.resolution.height},
                    {"count", manifest_.count},
                    {"layout", layout_name(manifest_.layout)},
                    {"pattern", "frame_%05d.png"}};
  const std::string body = doc.dump(2) + "\n";
  write_file_atomic(dir_ / "manifest.json",
                    {reinterpret_cast<const std::uint8_t*>(body.data()), body.size()});
  return manifest_;
}

SequenceManifest read_manifest(const fs::path& dir) {
  const auto bytes = read_file(dir / "manifest.json");
  const json doc = json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw Error(ErrorCode::DecodeError, "bad manifest in " + dir.string());
  }
  try {
    SequenceManifest m;
    m.fps = doc.at("fps").get<double>();
    m.resolution = {doc.at("width").get<int>(), doc.at("height").get<int>()};
    m.count = doc.at("count").get<int>();
    m.layout = doc.at("layout").get<std::string>() == "rgba" ? ChannelLayout::rgba
                                                              : ChannelLayout::rgb;
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::DecodeError, "bad manifest in " + dir.string() + ": " + e.what());
  }
}

Image read_frame(const fs::path& dir, int index) {
  return read_image(dir / frame_file_name(index));
}

void write_sequence(const FrameSequence& seq, const fs::path& dir) {
  SequenceWriter writer(dir, seq.fps, seq.resolution, seq.layout);
  for (std::size_t k = 0; k < seq.frames.size(); ++k) {
    writer.write(static_cast<int>(k), seq.frames[k]);
  }
  writer.finish();
}

FrameSequence load_sequence(const fs::path& dir) {
  const SequenceManifest m = read_manifest(dir);
  FrameSequence seq{{}, m.fps, m.resolution, m.layout};
  seq.frames.reserve(static_cast<std::size_t>(m.count));
  for (int k = 0; k < m.count; ++k) seq.frames.push_back(read_frame(dir, k));
  return seq;
}

RenderedInputs render_to_directory(const staging::Scene& scene, const panorama::Panorama& pano,
                                   const fs::path& out_dir, const RenderOptions& options) {
  RenderedInputs inputs;
  inputs.background = out_dir / "background";
  SequenceWriter background(inputs.background, scene.fps, scene.resolution, ChannelLayout::rgb);
  std::vector<SequenceWriter> masks;
  for (std::size_t a = 0; a < scene.actors.size(); ++a) {
    char name[16];
    std::snprintf(name, sizeof(name), "mask_%02zu", a);
    inputs.masks.push_back(out_dir / name);
    masks.emplace_back(inputs.masks.back(), scene.fps, scene.resolution, ChannelLayout::rgba);
  }

  const int n = staging::frame_count(scene);
  for (int k = 0; k < n; ++k) {
    const double t = frame_time(scene, k);
    background.write(k, panorama::render_view(pano, staging::camera_at(scene, t), scene.resolution));
    const auto sample = staging::sample_scene(scene, t);
    for (std::size_t a = 0; a < scene.actors.size(); ++a) {
      masks[a].write(k, mask_frame(sample, scene.actors[a].id, scene.resolution, options));
    }
  }
  background.finish();
  for (auto& m : masks) m.finish();
  return inputs;
}

}  // namespace streetstage::render

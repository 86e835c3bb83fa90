#pragma once

// Background and mask frame sequences for the generation backend, plus their
// on-disk form: a directory of frame_%05d.png files and a manifest.json.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "streetstage/image.hpp"
#include "streetstage/panorama.hpp"
#include "streetstage/staging.hpp"

namespace streetstage::render {

using Rgba = std::array<std::uint8_t, 4>;

inline constexpr Rgba kMaskGreen{0, 255, 0, 255};

struct RenderOptions {
  Rgba mask_color = kMaskGreen;
};

struct FrameSequence {
  std::vector<Image> frames;
  double fps = staging::kDefaultFps;
  geo::ScreenSize resolution = staging::kDefaultResolution;
  ChannelLayout layout = ChannelLayout::rgb;
};

/// Frame k is sampled at t = k / fps.
double frame_time(const staging::Scene& scene, int k);

using FrameSink = std::function<void(int index, Image&& frame)>;

/// Streams background frames to `sink` in index order.
void render_background(const staging::Scene& scene, const panorama::Panorama& pano,
                       const FrameSink& sink);
FrameSequence render_background(const staging::Scene& scene, const panorama::Panorama& pano);

/// Fills pixels whose centers fall inside the quad; no anti-aliasing.
void paint_quad(Image& rgba, const staging::ScreenQuad& quad, Rgba color);

/// Transparent frame with the named actor's quad painted, if present in `sample`.
Image mask_frame(const staging::SceneSample& sample, const std::string& actor_id,
                 geo::ScreenSize resolution, const RenderOptions& options = {});

/// Streams one mask frame per actor per time step; sink receives (actor index, frame index).
using MaskSink = std::function<void(std::size_t actor, int index, Image&& frame)>;
void render_masks(const staging::Scene& scene, const MaskSink& sink,
                  const RenderOptions& options = {});
std::vector<FrameSequence> render_masks(const staging::Scene& scene,
                                        const RenderOptions& options = {});

/// Alpha-over of RGBA `overlay` onto RGB `base`, in place.
void alpha_over(Image& base, const Image& overlay);

FrameSequence compose_preview(const FrameSequence& background,
                              std::span<const FrameSequence> masks);

// --- on-disk frame directories ---

struct SequenceManifest {
  double fps = staging::kDefaultFps;
  geo::ScreenSize resolution = staging::kDefaultResolution;
  int count = 0;
  ChannelLayout layout = ChannelLayout::rgb;
};

std::string frame_file_name(int index);

class SequenceWriter {
 public:
  SequenceWriter(std::filesystem::path dir, double fps, geo::ScreenSize resolution,
                 ChannelLayout layout);

  /// Frames must arrive in index order starting at 0.
  void write(int index, const Image& frame);
  /// Writes manifest.json; returns the manifest.
  SequenceManifest finish();

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  SequenceManifest manifest_;
};

SequenceManifest read_manifest(const std::filesystem::path& dir);
Image read_frame(const std::filesystem::path& dir, int index);
void write_sequence(const FrameSequence& seq, const std::filesystem::path& dir);
FrameSequence load_sequence(const std::filesystem::path& dir);

struct RenderedInputs {
  std::filesystem::path background;
  std::vector<std::filesystem::path> masks;  // one per actor, scene order
};

/// Renders the background and every mask sequence into `out_dir`
/// (background/, mask_00/, mask_01/, ...). Masks and background share the
/// same camera sample for every frame.
RenderedInputs render_to_directory(const staging::Scene& scene, const panorama::Panorama& pano,
                                   const std::filesystem::path& out_dir,
                                   const RenderOptions& options = {});

}  // namespace streetstage::render

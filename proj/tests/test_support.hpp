#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "streetstage/geo.hpp"
#include "streetstage/image.hpp"
#include "streetstage/panorama.hpp"
#include "streetstage/staging.hpp"

namespace test_support {

/// Panorama whose red channel encodes the column (R = round(x * 255 / (W - 1)))
/// and green encodes the row (G = y), so bilinear samples are linear in (u, v).
inline streetstage::panorama::Panorama direction_coded_panorama(double north_offset = 0.0) {
  using streetstage::ChannelLayout;
  streetstage::Image img(512, 256, ChannelLayout::rgb);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      auto* p = img.pixel(x, y);
      p[0] = static_cast<std::uint8_t>(std::lround(x * 255.0 / (img.width() - 1)));
      p[1] = static_cast<std::uint8_t>(y);
      p[2] = static_cast<std::uint8_t>((x * 7 + y * 3) & 0xFF);
    }
  }
  return {std::move(img), north_offset};
}

/// Pseudo-random textured panorama; deterministic for a seed.
inline streetstage::panorama::Panorama noise_panorama(int height, unsigned seed,
                                                      double north_offset = 0.0) {
  streetstage::Image img(2 * height, height, streetstage::ChannelLayout::rgb);
  std::mt19937 rng(seed);
  for (auto& b : img.bytes()) b = static_cast<std::uint8_t>(rng());
  return {std::move(img), north_offset};
}

inline streetstage::staging::Scene small_scene(streetstage::geo::ScreenSize resolution = {160, 90}) {
  using namespace streetstage;
  auto scene = staging::make_default_scene("node-a", geo::GeoPoint::from_degrees(40.0100, -105.2700));
  scene.resolution = resolution;
  staging::normalize(scene);
  scene.scene_prompt = "a pedestrian crosses the street";
  return scene;
}

inline streetstage::staging::Actor actor_at(const std::string& id,
                                            const streetstage::geo::GeoPoint& origin, double east,
                                            double north) {
  streetstage::staging::Actor a;
  a.id = id;
  a.anchor = streetstage::geo::offset_to_geo(origin, {east, north});
  a.prompt_fragment = "a person in a red coat";
  return a;
}

inline streetstage::staging::Trajectory straight_path(const streetstage::geo::GeoPoint& origin,
                                                      streetstage::geo::EnuOffset from,
                                                      streetstage::geo::EnuOffset to, double start,
                                                      double end) {
  return {{streetstage::geo::offset_to_geo(origin, from), streetstage::geo::offset_to_geo(origin, to)},
          start,
          end};
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("streetstage_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace test_support

#pragma once

// Equirectangular panorama lookup and perspective view synthesis.
//
// Raster coordinates (u_e, v_e) are continuous with pixel centers on integer
// values: column 0 is sampled exactly at u_e = 0 and u_e = W_e - 0.5 sits
// halfway between the last column and column 0.

#include "streetstage/geo.hpp"
#include "streetstage/image.hpp"

namespace streetstage::panorama {

class Panorama {
 public:
  /// Takes an RGB raster with width == 2 * height. Throws InvalidArgument.
  Panorama(Image pixels, double north_offset);

  const Image& pixels() const noexcept { return pixels_; }
  int width() const noexcept { return pixels_.width(); }
  int height() const noexcept { return pixels_.height(); }
  double north_offset() const noexcept { return north_offset_; }

 private:
  Image pixels_;
  double north_offset_;
};

struct ViewDirection {
  double yaw = 0.0;    // clockwise from north, [0, 2pi)
  double pitch = 0.0;  // positive up, [-pi/2, pi/2]
};

struct RasterPoint {
  double u = 0.0;
  double v = 0.0;
};

RasterPoint dir_to_equirect(const ViewDirection& dir, const Panorama& pano);

/// Throws OutOfRaster outside [0, W_e) x [0, H_e).
ViewDirection equirect_to_dir(double u, double v, const Panorama& pano);

/// Bilinear sample, wrapping horizontally and clamping vertically. Writes 3 bytes.
void sample_bilinear(const Panorama& pano, RasterPoint at, std::uint8_t* rgb);

/// Renders the pinhole view seen from the panorama node. The ray through each
/// output pixel center inverts the per-axis screen mapping used by
/// geo::project_point, so projected masks line up with the rendered frame.
Image render_view(const Panorama& pano, const geo::CameraPose& camera, geo::ScreenSize screen);

}  // namespace streetstage::panorama

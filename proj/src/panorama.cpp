#include "streetstage/panorama.hpp"

#include <cmath>
#include <vector>

#include "parallel.hpp"
#include "streetstage/error.hpp"

namespace streetstage::panorama {

using geo::kPi;
using geo::kTwoPi;

Panorama::Panorama(Image pixels, double north_offset)
    : pixels_(std::move(pixels)), north_offset_(geo::normalize_heading(north_offset)) {
  if (pixels_.empty() || pixels_.layout() != ChannelLayout::rgb) {
    throw Error(ErrorCode::InvalidArgument, "panorama must be a non-empty RGB raster");
  }
  if (pixels_.width() != 2 * pixels_.height()) {
    throw Error(ErrorCode::InvalidArgument, "equirectangular panorama must be 2:1");
  }
}

namespace {

// Column coordinate for a yaw already expressed relative to the panorama's north.
double column_for(double relative_yaw, int width) {
  double t = geo::wrap_angle(relative_yaw) / kTwoPi;
  t -= std::floor(t);
  if (t >= 1.0) t = 0.0;
  return t * width;
}

double row_for(double pitch, int height) { return (0.5 - pitch / kPi) * height; }

}  // namespace

RasterPoint dir_to_equirect(const ViewDirection& dir, const Panorama& pano) {
  return {column_for(dir.yaw - pano.north_offset(), pano.width()),
          row_for(dir.pitch, pano.height())};
}

ViewDirection equirect_to_dir(double u, double v, const Panorama& pano) {
  if (!(u >= 0.0 && u < pano.width() && v >= 0.0 && v < pano.height())) {
    throw Error(ErrorCode::OutOfRaster, "raster coordinate outside the panorama");
  }
  return {geo::normalize_heading(pano.north_offset() + u / pano.width() * kTwoPi),
          (0.5 - v / pano.height()) * kPi};
}

void sample_bilinear(const Panorama& pano, RasterPoint at, std::uint8_t* rgb) {
  const Image& img = pano.pixels();
  const int w = img.width();
  const int h = img.height();

  const double fx0 = std::floor(at.u);
  const double fx = at.u - fx0;
  int x0 = static_cast<int>(fx0) % w;
  if (x0 < 0) x0 += w;
  const int x1 = (x0 + 1) % w;

  double v = at.v;
  if (v < 0.0) v = 0.0;
  if (v > h - 1) v = h - 1;
  const double fy0 = std::floor(v);
  const double fy = v - fy0;
  const int y0 = static_cast<int>(fy0);
  const int y1 = y0 + 1 < h ? y0 + 1 : h - 1;

  const std::uint8_t* a = img.pixel(x0, y0);
  const std::uint8_t* b = img.pixel(x1, y0);
  const std::uint8_t* c = img.pixel(x0, y1);
  const std::uint8_t* d = img.pixel(x1, y1);
  const double wa = (1.0 - fx) * (1.0 - fy);
  const double wb = fx * (1.0 - fy);
  const double wc = (1.0 - fx) * fy;
  const double wd = fx * fy;
  for (int k = 0; k < 3; ++k) {
    const double value = wa * a[k] + wb * b[k] + wc * c[k] + wd * d[k];
    rgb[k] = static_cast<std::uint8_t>(value + 0.5);
  }
}

Image render_view(const Panorama& pano, const geo::CameraPose& camera, geo::ScreenSize screen) {
  geo::check_camera(camera);
  Image out(screen.width, screen.height, ChannelLayout::rgb);

  // The per-axis model is separable: azimuth depends on the column only and
  // elevation on the row only.
  std::vector<double> azimuth(static_cast<std::size_t>(screen.width));
  for (int x = 0; x < screen.width; ++x) {
    azimuth[x] = geo::pixel_to_angles(x + 0.5, 0.5, camera, screen).azimuth;
  }
  const double yaw_offset = camera.heading - pano.north_offset();

  detail::parallel_for(static_cast<std::size_t>(screen.height), [&](std::size_t row) {
    const int y = static_cast<int>(row);
    double pitch =
        camera.pitch + geo::pixel_to_angles(0.5, y + 0.5, camera, screen).elevation;
    double flip = 0.0;
    if (pitch > kPi / 2.0) {
      pitch = kPi - pitch;
      flip = kPi;
    } else if (pitch < -kPi / 2.0) {
      pitch = -kPi - pitch;
      flip = kPi;
    }
    const double v = row_for(pitch, pano.height());
    for (int x = 0; x < screen.width; ++x) {
      const double u = column_for(yaw_offset + azimuth[x] + flip, pano.width());
      sample_bilinear(pano, {u, v}, out.pixel(x, y));
    }
  });
  return out;
}

}  // namespace streetstage::panorama

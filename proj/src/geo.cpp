#include "streetstage/geo.hpp"

#include <cmath>
#include <string>

#include "streetstage/error.hpp"

namespace streetstage::geo {

double wrap_angle(double radians) {
  // remainder() is exact and lands in [-pi, pi]; fold -pi onto +pi.
  const double r = std::remainder(radians, kTwoPi);
  return r == -kPi ? kPi : r;
}

double normalize_heading(double radians) {
  double r = wrap_angle(radians);
  if (r < 0.0) {
    r += kTwoPi;
    if (r >= kTwoPi) r = 0.0;
  }
  return r;
}

GeoPoint GeoPoint::from_radians(double latitude, double longitude) {
  if (!std::isfinite(latitude) || !std::isfinite(longitude)) {
    throw Error(ErrorCode::InvalidArgument, "non-finite geodetic coordinate");
  }
  if (std::abs(latitude) > kPi / 2.0) {
    throw Error(ErrorCode::InvalidArgument,
                "latitude out of range: " + std::to_string(rad_to_deg(latitude)) + " deg");
  }
  return GeoPoint{latitude, wrap_angle(longitude)};
}

GeoPoint GeoPoint::from_degrees(double latitude_deg, double longitude_deg) {
  return from_radians(deg_to_rad(latitude_deg), deg_to_rad(longitude_deg));
}

double vertical_fov_for(double horizontal_fov, ScreenSize screen) {
  if (screen.width <= 0 || screen.height <= 0) {
    throw Error(ErrorCode::InvalidArgument, "screen size must be positive");
  }
  return 2.0 * std::atan(std::tan(horizontal_fov / 2.0) * screen.height / screen.width);
}

void check_camera(const CameraPose& camera) {
  const auto in_open_range = [](double fov) { return fov > 0.0 && fov < kPi; };
  if (!in_open_range(camera.horizontal_fov) || !in_open_range(camera.vertical_fov)) {
    throw Error(ErrorCode::InvalidArgument, "field of view must lie in (0, 180) degrees");
  }
  if (!(camera.height_above_ground >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "camera height must be non-negative");
  }
  if (!std::isfinite(camera.heading) || !std::isfinite(camera.pitch)) {
    throw Error(ErrorCode::InvalidArgument, "camera orientation must be finite");
  }
}

EnuOffset enu_offset(const GeoPoint& actor, const GeoPoint& camera) {
  if (std::abs(camera.latitude) >= kPoleGuard) {
    throw Error(ErrorCode::PoleProximity, "camera latitude within 1 degree of a pole");
  }
  const EnuOffset offset{
      kEarthRadius * std::cos(camera.latitude) * wrap_angle(actor.longitude - camera.longitude),
      kEarthRadius * (actor.latitude - camera.latitude)};
  if (!(std::hypot(offset.east, offset.north) < kMaxEnuRange)) {
    throw Error(ErrorCode::OutOfRange, "point lies 10 km or more from the camera");
  }
  return offset;
}

GeoPoint offset_to_geo(const GeoPoint& origin, const EnuOffset& offset) {
  if (std::abs(origin.latitude) >= kPoleGuard) {
    throw Error(ErrorCode::PoleProximity, "origin latitude within 1 degree of a pole");
  }
  return GeoPoint::from_radians(
      origin.latitude + offset.north / kEarthRadius,
      origin.longitude + offset.east / (kEarthRadius * std::cos(origin.latitude)));
}

RangeBearing range_bearing(const EnuOffset& offset) {
  const double d = std::hypot(offset.east, offset.north);
  if (d == 0.0) return {0.0, 0.0};
  return {d, std::atan2(offset.east, offset.north)};
}

RelativeAngles camera_relative_angles(double distance, double bearing, const CameraPose& camera,
                                      double subject_height) {
  if (!(distance >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "distance must be non-negative");
  }
  return {wrap_angle(bearing - camera.heading),
          wrap_angle(std::atan2(subject_height - camera.height_above_ground, distance) -
                     camera.pitch)};
}

ScreenPoint project_point(const RelativeAngles& angles, const CameraPose& camera,
                          ScreenSize screen) {
  if (screen.width <= 0 || screen.height <= 0) {
    throw Error(ErrorCode::InvalidArgument, "screen size must be positive");
  }
  ScreenPoint p;
  if (std::abs(angles.azimuth) >= kPi / 2.0 || std::abs(angles.elevation) >= kPi / 2.0) {
    p.visibility = Visibility::behind_camera;
    return p;
  }
  const double sx = std::tan(angles.azimuth) / std::tan(camera.horizontal_fov / 2.0);
  const double sy = -std::tan(angles.elevation) / std::tan(camera.vertical_fov / 2.0);
  // (s + 1) / 2 * W, arranged so mirrored azimuths sum to W within one ulp.
  const double half_w = 0.5 * screen.width;
  const double half_h = 0.5 * screen.height;
  p.u = half_w + half_w * sx;
  p.v = half_h + half_h * sy;
  const bool inside = p.u >= 0.0 && p.u < screen.width && p.v >= 0.0 && p.v < screen.height;
  p.visibility = inside ? Visibility::on_screen : Visibility::off_screen;
  return p;
}

ScreenPoint project_actor_point(const GeoPoint& actor, double subject_height,
                                const CameraPose& camera, ScreenSize screen) {
  const RangeBearing rb = range_bearing(enu_offset(actor, camera.position));
  return project_point(camera_relative_angles(rb.distance, rb.bearing, camera, subject_height),
                       camera, screen);
}

RelativeAngles pixel_to_angles(double u, double v, const CameraPose& camera, ScreenSize screen) {
  if (screen.width <= 0 || screen.height <= 0) {
    throw Error(ErrorCode::InvalidArgument, "screen size must be positive");
  }
  const double sx = 2.0 * u / screen.width - 1.0;
  const double sy = 2.0 * v / screen.height - 1.0;
  return {std::atan(sx * std::tan(camera.horizontal_fov / 2.0)),
          std::atan(-sy * std::tan(camera.vertical_fov / 2.0))};
}

GeoPoint unproject_to_ground(double u, double v, const CameraPose& camera, ScreenSize screen) {
  const RelativeAngles rel = pixel_to_angles(u, v, camera, screen);
  const double elevation = rel.elevation + camera.pitch;
  if (!(camera.height_above_ground > 0.0) || !(elevation < 0.0) || elevation <= -kPi / 2.0) {
    throw Error(ErrorCode::NoGroundIntersection, "ray does not meet the ground ahead");
  }
  const double d = camera.height_above_ground / std::tan(-elevation);
  if (!(d < kMaxEnuRange)) {
    throw Error(ErrorCode::OutOfRange, "ground hit lies 10 km or more from the camera");
  }
  const double bearing = camera.heading + rel.azimuth;
  return offset_to_geo(camera.position, {d * std::sin(bearing), d * std::cos(bearing)});
}

}  // namespace streetstage::geo

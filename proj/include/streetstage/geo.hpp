#pragma once

// Geodetic anchors, camera poses and the ground-to-screen projection chain
// used to place actor masks on street-view imagery.
//
// Conventions: angles in radians, distances in meters. Heading is measured
// clockwise from true north, pitch is positive upward. Screen coordinates have
// u growing rightward from the left edge and v growing downward from the top.

#include <numbers>

namespace streetstage::geo {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// WGS-84 mean radius.
inline constexpr double kEarthRadius = 6'371'008.8;

// Latitudes at or beyond this magnitude are rejected as camera positions.
inline constexpr double kPoleGuard = 89.0 * kPi / 180.0;

// Local tangent-plane offsets are only trusted below this magnitude.
inline constexpr double kMaxEnuRange = 10'000.0;

constexpr double deg_to_rad(double deg) { return deg * (kPi / 180.0); }
constexpr double rad_to_deg(double rad) { return rad * (180.0 / kPi); }

/// Maps any finite angle into (-pi, pi]. Idempotent.
double wrap_angle(double radians);

/// Maps any finite angle into [0, 2pi).
double normalize_heading(double radians);

struct GeoPoint {
  double latitude = 0.0;   // radians, [-pi/2, pi/2]
  double longitude = 0.0;  // radians, (-pi, pi]

  /// Validates latitude and normalizes longitude. Throws InvalidArgument.
  static GeoPoint from_radians(double latitude, double longitude);
  static GeoPoint from_degrees(double latitude_deg, double longitude_deg);

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

struct EnuOffset {
  double east = 0.0;
  double north = 0.0;
};

struct RangeBearing {
  double distance = 0.0;
  double bearing = 0.0;  // radians clockwise from north
};

struct CameraPose {
  GeoPoint position;
  double heading = 0.0;  // [0, 2pi)
  double pitch = 0.0;
  double horizontal_fov = kPi / 2.0;
  double vertical_fov = kPi / 2.0;
  double height_above_ground = 2.5;
};

struct RelativeAngles {
  double azimuth = 0.0;
  double elevation = 0.0;
};

struct ScreenSize {
  int width = 1280;
  int height = 720;

  friend bool operator==(const ScreenSize&, const ScreenSize&) = default;
};

enum class Visibility { on_screen, off_screen, behind_camera };

struct ScreenPoint {
  double u = 0.0;
  double v = 0.0;
  Visibility visibility = Visibility::behind_camera;
};

/// Vertical FOV that keeps pixels square: tan(av/2) = tan(ah/2) * H / W.
double vertical_fov_for(double horizontal_fov, ScreenSize screen);

/// Throws InvalidArgument when a pose violates its invariants.
void check_camera(const CameraPose& camera);

/// Equirectangular tangent-plane offset of `actor` relative to `camera`.
/// Throws PoleProximity when the camera is within 1 degree of a pole and
/// OutOfRange when the offset reaches 10 km.
EnuOffset enu_offset(const GeoPoint& actor, const GeoPoint& camera);

/// Inverse of enu_offset around `origin`.
GeoPoint offset_to_geo(const GeoPoint& origin, const EnuOffset& offset);

/// Ground distance and bearing; bearing is 0 for a zero offset.
RangeBearing range_bearing(const EnuOffset& offset);

/// Azimuth relative to the camera heading (wrapped) and elevation of a point
/// `subject_height` meters above ground relative to the camera pitch.
RelativeAngles camera_relative_angles(double distance, double bearing, const CameraPose& camera,
                                      double subject_height);

/// Per-axis pinhole mapping of relative angles to pixels.
ScreenPoint project_point(const RelativeAngles& angles, const CameraPose& camera,
                          ScreenSize screen);

/// Full chain: geodetic point -> ENU -> range/bearing -> relative angles -> pixels.
ScreenPoint project_actor_point(const GeoPoint& actor, double subject_height,
                                const CameraPose& camera, ScreenSize screen);

/// Relative angles of the ray through continuous pixel coordinate (u, v).
RelativeAngles pixel_to_angles(double u, double v, const CameraPose& camera, ScreenSize screen);

/// Ground point seen through pixel (u, v). Throws NoGroundIntersection when
/// the ray does not point below the horizon or the camera sits on the ground,
/// and OutOfRange when the hit lies beyond the tangent-plane range.
GeoPoint unproject_to_ground(double u, double v, const CameraPose& camera, ScreenSize screen);

}  // namespace streetstage::geo

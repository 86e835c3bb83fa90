#include "streetstage/geo.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "streetstage/error.hpp"

using namespace streetstage;
using namespace streetstage::geo;

namespace {

constexpr ScreenSize k720p{1280, 720};

CameraPose camera_at(GeoPoint position, double heading, double pitch, double hfov, double h) {
  CameraPose c;
  c.position = position;
  c.heading = heading;
  c.pitch = pitch;
  c.horizontal_fov = hfov;
  c.vertical_fov = vertical_fov_for(hfov, k720p);
  c.height_above_ground = h;
  return c;
}

}  // namespace

TEST(WrapAngle, MapsIntoHalfOpenInterval) {
  EXPECT_EQ(wrap_angle(kPi), kPi);
  EXPECT_EQ(wrap_angle(-kPi), kPi);
  EXPECT_EQ(wrap_angle(0.0), 0.0);
  EXPECT_NEAR(wrap_angle(3 * kPi / 2), -kPi / 2, 1e-15);
  EXPECT_NEAR(wrap_angle(-3 * kPi / 2), kPi / 2, 1e-15);
}

TEST(WrapAngle, IdempotentOverRandomInputs) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> any(-1e6, 1e6);
  for (int i = 0; i < 100000; ++i) {
    const double x = any(rng);
    const double w = wrap_angle(x);
    ASSERT_GT(w, -kPi);
    ASSERT_LE(w, kPi);
    ASSERT_EQ(wrap_angle(w), w);
  }
}

TEST(NormalizeHeading, StaysInZeroTwoPi) {
  EXPECT_EQ(normalize_heading(0.0), 0.0);
  EXPECT_NEAR(normalize_heading(-kPi / 2), 3 * kPi / 2, 1e-15);
  EXPECT_EQ(normalize_heading(-1e-300) < kTwoPi, true);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> any(-100, 100);
  for (int i = 0; i < 10000; ++i) {
    const double h = normalize_heading(any(rng));
    ASSERT_GE(h, 0.0);
    ASSERT_LT(h, kTwoPi);
    ASSERT_EQ(normalize_heading(h), h);
  }
}

TEST(GeoPoint, NormalizesLongitudeAndRejectsBadLatitude) {
  const auto p = GeoPoint::from_degrees(10, 190);
  EXPECT_NEAR(rad_to_deg(p.longitude), -170, 1e-12);
  EXPECT_THROW(GeoPoint::from_degrees(91, 0), Error);
  EXPECT_THROW(GeoPoint::from_radians(std::nan(""), 0), Error);
}

TEST(EnuOffset, IdentityIsZero) {
  const auto p = GeoPoint::from_degrees(40.01, -105.27);
  const auto o = enu_offset(p, p);
  EXPECT_EQ(o.east, 0.0);
  EXPECT_EQ(o.north, 0.0);
}

TEST(EnuOffset, LinearAtEquator) {
  const GeoPoint cam{0.0, 0.3};
  const GeoPoint actor{0.0, 0.3 + 1e-5};
  const auto o = enu_offset(actor, cam);
  EXPECT_NEAR(o.east, kEarthRadius * 1e-5, 1e-9);
  EXPECT_EQ(o.north, 0.0);
}

TEST(EnuOffset, AgreesWithGeodesicOracleWithinTenthOfPercent) {
  const auto cam = GeoPoint::from_degrees(40.0100, -105.2700);
  const auto actor = GeoPoint::from_degrees(40.0105, -105.2690);
  const auto o = enu_offset(actor, cam);
  const double d = oracle::haversine(cam.latitude, cam.longitude, actor.latitude, actor.longitude);
  const double b =
      oracle::initial_bearing(cam.latitude, cam.longitude, actor.latitude, actor.longitude);
  const double east = d * std::sin(b);
  const double north = d * std::cos(b);
  EXPECT_NEAR(o.east, east, 1e-3 * std::abs(east));
  EXPECT_NEAR(o.north, north, 1e-3 * std::abs(north));
  // Frozen from the same oracle: (85.1673, 55.5980) m.
  EXPECT_NEAR(east, 85.16727, 1e-4);
  EXPECT_NEAR(north, 55.59802, 1e-4);
}

TEST(EnuOffset, BearingMatchesGeodesicIncludingAntimeridian) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lat(-80, 80);
  std::uniform_real_distribution<double> dist(1, 500);
  std::uniform_real_distribution<double> brg(-kPi, kPi);
  std::uniform_real_distribution<double> near_am(179.99, 180.0);
  for (int i = 0; i < 20000; ++i) {
    const double lon = (i % 2 == 0) ? near_am(rng) : -near_am(rng);
    const auto cam = GeoPoint::from_degrees(lat(rng), lon);
    const auto dst = oracle::destination(cam.latitude, cam.longitude, brg(rng), dist(rng));
    const auto actor = GeoPoint::from_radians(dst[0], dst[1]);
    const auto rb = range_bearing(enu_offset(actor, cam));
    const double truth =
        oracle::initial_bearing(cam.latitude, cam.longitude, actor.latitude, actor.longitude);
    ASSERT_LT(std::abs(rad_to_deg(wrap_angle(rb.bearing - truth))), 0.05) << "sample " << i;
  }
}

TEST(EnuOffset, GuardsPolesAndRange) {
  const auto polar = GeoPoint::from_degrees(89.5, 0);
  EXPECT_THROW(
      {
        try {
          enu_offset(polar, polar);
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), ErrorCode::PoleProximity);
          throw;
        }
      },
      Error);
  const auto cam = GeoPoint::from_degrees(0, 0);
  const auto far = GeoPoint::from_degrees(0.1, 0);  // ~11 km
  try {
    enu_offset(far, cam);
    FAIL() << "expected OutOfRange";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OutOfRange);
  }
}

TEST(RangeBearing, CardinalAndClosedForm) {
  auto rb = range_bearing({0, 10});
  EXPECT_EQ(rb.distance, 10);
  EXPECT_EQ(rb.bearing, 0);
  rb = range_bearing({10, 0});
  EXPECT_EQ(rb.distance, 10);
  EXPECT_EQ(rb.bearing, kPi / 2);
  rb = range_bearing({3, 4});
  EXPECT_EQ(rb.distance, 5);
  EXPECT_NEAR(rb.bearing, 0.64350110879328, 1e-12);
  rb = range_bearing({0, 0});
  EXPECT_EQ(rb.distance, 0);
  EXPECT_EQ(rb.bearing, 0);
}

TEST(CameraRelativeAngles, Examples) {
  CameraPose cam;
  cam.height_above_ground = 0;
  cam.heading = 1.0;
  auto a = camera_relative_angles(10, 1.0, cam, 0);
  EXPECT_EQ(a.azimuth, 0);
  EXPECT_EQ(a.elevation, 0);

  cam.height_above_ground = 2.5;
  a = camera_relative_angles(10, 1.0, cam, 0);
  EXPECT_NEAR(a.elevation, -0.24497866312686, 1e-12);

  cam.heading = 3 * kPi / 2;
  a = camera_relative_angles(10, 0.0, cam, 0);
  EXPECT_NEAR(a.azimuth, kPi / 2, 1e-15);

  // Zero distance follows the atan2 convention.
  cam.heading = 0;
  cam.pitch = 0.1;
  a = camera_relative_angles(0, 0.0, cam, 0);
  EXPECT_NEAR(a.elevation, -kPi / 2 - 0.1, 1e-15);
  EXPECT_THROW(camera_relative_angles(-1, 0, cam, 0), Error);
}

TEST(ProjectPoint, CenterAndEdges) {
  const auto cam = camera_at({}, 0, 0, deg_to_rad(90), 2.5);
  auto p = project_point({0, 0}, cam, k720p);
  EXPECT_EQ(p.u, 640.0);
  EXPECT_EQ(p.v, 360.0);
  EXPECT_EQ(p.visibility, Visibility::on_screen);

  p = project_point({-cam.horizontal_fov / 2, 0}, cam, k720p);
  EXPECT_EQ(p.u, 0.0);
  EXPECT_EQ(p.visibility, Visibility::on_screen);
  p = project_point({cam.horizontal_fov / 2, 0}, cam, k720p);
  EXPECT_EQ(p.u, 1280.0);
  EXPECT_EQ(p.visibility, Visibility::off_screen);

  p = project_point({deg_to_rad(22.5), 0}, cam, k720p);
  EXPECT_NEAR(p.u, 905.0966799187809, 1e-9);

  EXPECT_EQ(project_point({kPi / 2, 0}, cam, k720p).visibility, Visibility::behind_camera);
  EXPECT_EQ(project_point({0, -kPi / 2}, cam, k720p).visibility, Visibility::behind_camera);
}

TEST(ProjectPoint, MonotoneAndSymmetric) {
  const auto cam = camera_at({}, 0, 0, deg_to_rad(75), 2.5);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> az(-1.5, 1.5);
  std::uniform_real_distribution<double> el(-1.2, 1.2);
  for (int i = 0; i < 10000; ++i) {
    const double a = az(rng);
    const double e = el(rng);
    const double b = std::nextafter(a, 2.0) + 1e-9;
    ASSERT_LT(project_point({a, e}, cam, k720p).u, project_point({b, e}, cam, k720p).u);
  }
  // Mirror symmetry is exact to one ulp of W across the visible span.
  std::uniform_real_distribution<double> visible(-cam.horizontal_fov / 2, cam.horizontal_fov / 2);
  for (int i = 0; i < 100000; ++i) {
    const double a = visible(rng);
    const double e = el(rng);
    const double sum = project_point({a, e}, cam, k720p).u + project_point({-a, e}, cam, k720p).u;
    ASSERT_LE(std::abs(sum - 1280.0), std::nextafter(1280.0, 2000.0) - 1280.0);
  }
}

TEST(ProjectActorPoint, DueNorthAndBehind) {
  const auto cam_pos = GeoPoint::from_degrees(40.0, -105.0);
  const auto cam = camera_at(cam_pos, 0, 0, deg_to_rad(90), 0);
  const auto ahead = offset_to_geo(cam_pos, {0, 10});
  const auto p = project_actor_point(ahead, 0, cam, k720p);
  EXPECT_NEAR(p.u, 640, 1e-9);
  EXPECT_NEAR(p.v, 360, 1e-9);
  const auto behind = offset_to_geo(cam_pos, {0, -10});
  EXPECT_EQ(project_actor_point(behind, 0, cam, k720p).visibility, Visibility::behind_camera);
}

TEST(ProjectActorPoint, MatchesThreeDimensionalOracle) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> lat(-70, 70);
  std::uniform_real_distribution<double> lon(-180, 180);
  std::uniform_real_distribution<double> unit(0, 1);
  int compared = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto pos = GeoPoint::from_degrees(lat(rng), lon(rng));
    const double hfov = deg_to_rad(40 + 60 * unit(rng));
    const auto cam = camera_at(pos, kTwoPi * unit(rng), deg_to_rad(-15 + 20 * unit(rng)), hfov,
                               1 + 3 * unit(rng));
    const double bearing = cam.heading + (unit(rng) - 0.5) * hfov;
    const auto dst = oracle::destination(pos.latitude, pos.longitude, bearing, 5 + 495 * unit(rng));
    const auto actor = GeoPoint::from_radians(dst[0], dst[1]);
    const auto got = project_actor_point(actor, 0, cam, k720p);
    const auto want = oracle::camera_frame_project(
        pos.latitude, pos.longitude, cam.height_above_ground, cam.heading, cam.pitch,
        cam.horizontal_fov, cam.vertical_fov, actor.latitude, actor.longitude, 0, 1280, 720);
    if (got.visibility != Visibility::on_screen || !want.in_front) continue;
    ++compared;
    ASSERT_LT(std::abs(got.u - want.u), 2.0);
    ASSERT_LT(std::abs(got.v - want.v), 2.0);
  }
  EXPECT_GT(compared, 1000);
}

TEST(UnprojectToGround, TenMetersAhead) {
  const auto pos = GeoPoint::from_degrees(48.85, 2.35);
  const double h = 2.5;
  const auto cam = camera_at(pos, deg_to_rad(30), -std::atan2(h, 10), deg_to_rad(90), h);
  const auto hit = unproject_to_ground(640, 360, cam, k720p);
  const auto rb = range_bearing(enu_offset(hit, pos));
  EXPECT_NEAR(rb.distance, 10, 1e-6);
  EXPECT_NEAR(rb.bearing, deg_to_rad(30), 1e-9);
}

TEST(UnprojectToGround, RejectsRaysAboveHorizon) {
  const auto cam = camera_at(GeoPoint::from_degrees(10, 10), 0, 0, deg_to_rad(90), 2.5);
  try {
    unproject_to_ground(640, 100, cam, k720p);
    FAIL() << "expected NoGroundIntersection";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoGroundIntersection);
  }
  auto grounded = cam;
  grounded.height_above_ground = 0;
  EXPECT_THROW(unproject_to_ground(640, 700, grounded, k720p), Error);
}

TEST(UnprojectToGround, RoundTripWithinHalfPixel) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unit(0, 1);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto pos = GeoPoint::from_degrees(-60 + 120 * unit(rng), -180 + 360 * unit(rng));
    const auto cam = camera_at(pos, kTwoPi * unit(rng), deg_to_rad(-30 + 25 * unit(rng)),
                               deg_to_rad(30 + 80 * unit(rng)), 1 + 4 * unit(rng));
    const double u = 1280 * unit(rng);
    const double v = 720 * unit(rng);
    GeoPoint hit;
    try {
      hit = unproject_to_ground(u, v, cam, k720p);
    } catch (const Error&) {
      continue;  // above the horizon or beyond range
    }
    const auto p = project_actor_point(hit, 0, cam, k720p);
    worst = std::max({worst, std::abs(p.u - u), std::abs(p.v - v)});
  }
  EXPECT_LT(worst, 0.5);
}

TEST(HeadingEquivariance, BitwiseWhenRotationIsExact) {
  // Angles on a 2^-20 grid below 8 rad add without rounding.
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<long> grid(0, (1L << 22) - 1);
  const auto dyadic = [&] { return static_cast<double>(grid(rng)) * 0x1p-20; };
  auto cam = CameraPose{};
  cam.height_above_ground = 2.5;
  cam.vertical_fov = vertical_fov_for(cam.horizontal_fov, k720p);
  for (int i = 0; i < 10000; ++i) {
    const double bearing = dyadic();
    const double heading = dyadic();
    const double delta = dyadic();
    cam.heading = heading;
    const auto a = project_point(camera_relative_angles(20, bearing, cam, 0), cam, k720p);
    cam.heading = heading + delta;
    const auto b = project_point(camera_relative_angles(20, bearing + delta, cam, 0), cam, k720p);
    ASSERT_EQ(a.visibility, b.visibility);
    if (a.visibility == Visibility::behind_camera) continue;
    ASSERT_EQ(a.u, b.u);
    ASSERT_EQ(a.v, b.v);
  }
}

TEST(HeadingEquivariance, ArbitraryRotationWithinRoundoff) {
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> ang(0, kTwoPi);
  auto cam = CameraPose{};
  cam.vertical_fov = vertical_fov_for(cam.horizontal_fov, k720p);
  for (int i = 0; i < 10000; ++i) {
    const double bearing = ang(rng);
    const double heading = bearing + (ang(rng) - kPi) / 4;
    const double delta = ang(rng);
    cam.heading = heading;
    const auto a = project_point(camera_relative_angles(20, bearing, cam, 0), cam, k720p);
    cam.heading = heading + delta;
    const auto b = project_point(camera_relative_angles(20, bearing + delta, cam, 0), cam, k720p);
    ASSERT_NEAR(a.u, b.u, 1e-9);
    ASSERT_EQ(a.v, b.v);
  }
}

#include "streetstage/staging.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "trajectory_oracle.hpp"
#include "streetstage/scene_io.hpp"
#include "test_support.hpp"

using namespace streetstage;
using namespace streetstage::staging;
using geo::deg_to_rad;
using geo::kPi;

namespace {

using trajectory_oracle::dense_oracle;
using trajectory_oracle::ground_distance;

const geo::GeoPoint kNode = geo::GeoPoint::from_degrees(40.0100, -105.2700);

Scene scene_with(std::vector<Actor> actors, geo::ScreenSize res = {1280, 720}) {
  auto scene = test_support::small_scene(res);
  scene.actors = std::move(actors);
  return scene;
}

}  // namespace

TEST(ResampleTrajectory, MidpointAndHold) {
  const auto traj = test_support::straight_path(kNode, {0, 10}, {16, 10}, 0.0, 4.0);
  const auto mid = resample_trajectory(traj, 2.0, kNode);
  const auto o = geo::enu_offset(mid, kNode);
  EXPECT_NEAR(o.east, 8.0, 1e-9);
  EXPECT_NEAR(o.north, 10.0, 1e-9);
  EXPECT_EQ(resample_trajectory(traj, 5.0, kNode), traj.sketch.back());
  EXPECT_EQ(resample_trajectory(traj, 4.0, kNode), traj.sketch.back());
  EXPECT_EQ(resample_trajectory(traj, 0.0, kNode), traj.sketch.front());
}

TEST(ResampleTrajectory, HoldsBeforeDelayedStart) {
  const auto traj = test_support::straight_path(kNode, {0, 10}, {16, 10}, 1.0, 3.0);
  EXPECT_EQ(resample_trajectory(traj, 0.5, kNode), traj.sketch.front());
}

TEST(ResampleTrajectory, DegenerateSketches) {
  Trajectory single{{kNode}, 0, 5};
  Trajectory zero{{kNode, kNode}, 0, 5};
  for (const auto& t : {single, zero}) {
    try {
      resample_trajectory(t, 1.0, kNode);
      FAIL() << "expected DegenerateSketch";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::DegenerateSketch);
    }
  }
}

TEST(ResampleTrajectory, MatchesDenseArcLengthOracle) {
  Trajectory traj;
  for (auto [e, n] : {std::pair{5.0, 20.0}, {40.0, 35.0}, {42.0, 90.0}, {-30.0, 120.0}, {-60.0, 60.0}}) {
    traj.sketch.push_back(geo::offset_to_geo(kNode, {e, n}));
  }
  traj.start_time = 0.5;
  traj.end_time = 4.5;
  for (int q = 0; q < 20; ++q) {
    const double t = 0.25 * q;
    const auto got = resample_trajectory(traj, t, kNode);
    const auto want = dense_oracle(traj, t);
    EXPECT_LT(ground_distance(got, want), 0.01) << "t=" << t;
  }
}

TEST(ResampleTrajectory, ConstantSpeedOnStraightLine) {
  const auto traj = test_support::straight_path(kNode, {-30, 12}, {45, 40}, 0.0, 5.0);
  std::vector<double> steps;
  auto prev = resample_trajectory(traj, 0.0, kNode);
  for (int k = 1; k <= 80; ++k) {
    const auto cur = resample_trajectory(traj, k / 16.0, kNode);
    const auto a = geo::enu_offset(prev, kNode);
    const auto b = geo::enu_offset(cur, kNode);
    steps.push_back(std::hypot(b.east - a.east, b.north - a.north));
    prev = cur;
  }
  double mean = 0;
  for (double s : steps) mean += s;
  mean /= steps.size();
  double var = 0;
  for (double s : steps) var += (s - mean) * (s - mean);
  var /= steps.size();
  EXPECT_LT(var / (mean * mean), 1e-9);
}

TEST(CameraAt, SingleKeyframeIsConstant) {
  auto scene = test_support::small_scene();
  scene.keyframes = {{0.0, 1.0, -0.1, deg_to_rad(70)}};
  const auto a = camera_at(scene, 0.0);
  const auto b = camera_at(scene, 3.7);
  EXPECT_EQ(a.heading, b.heading);
  EXPECT_EQ(a.pitch, b.pitch);
  EXPECT_EQ(a.horizontal_fov, b.horizontal_fov);
  EXPECT_EQ(a.heading, 1.0);
}

TEST(CameraAt, ShortestArcThroughNorth) {
  auto scene = test_support::small_scene();
  scene.keyframes = {{0.0, deg_to_rad(350), 0, deg_to_rad(90)}, {2.0, deg_to_rad(10), 0, deg_to_rad(90)}};
  const auto c = camera_at(scene, 1.0);
  EXPECT_NEAR(std::abs(geo::wrap_angle(c.heading)), 0.0, 1e-12);
  EXPECT_GE(c.heading, 0.0);
  EXPECT_LT(c.heading, geo::kTwoPi);
}

TEST(CameraAt, LinearFovAndAspectDerivedVerticalFov) {
  auto scene = test_support::small_scene({1280, 720});
  scene.keyframes = {{0.0, 0, 0, deg_to_rad(60)}, {5.0, 0, 0, deg_to_rad(30)}};
  const auto c = camera_at(scene, 2.5);
  EXPECT_NEAR(geo::rad_to_deg(c.horizontal_fov), 45.0, 1e-12);
  EXPECT_NEAR(std::tan(c.vertical_fov / 2), std::tan(c.horizontal_fov / 2) * 720 / 1280, 1e-15);
}

TEST(CameraAt, ContinuousAndExactAtKeys) {
  auto scene = test_support::small_scene();
  scene.keyframes = {{0.0, 0.2, 0.0, 1.2}, {1.5, 1.7, -0.2, 0.9}, {3.0, 6.0, 0.1, 1.4}};
  for (const auto& k : scene.keyframes) {
    const auto c = camera_at(scene, k.time);
    EXPECT_EQ(c.heading, k.heading);
    EXPECT_EQ(c.pitch, k.pitch);
    EXPECT_EQ(c.horizontal_fov, k.horizontal_fov);
  }
  for (double t = 0; t < 5.0; t += 0.001) {
    const auto a = camera_at(scene, t);
    const auto b = camera_at(scene, t + 1e-7);
    ASSERT_LT(std::abs(geo::wrap_angle(a.heading - b.heading)), 1e-5);
    ASSERT_LT(std::abs(a.pitch - b.pitch), 1e-5);
  }
}

TEST(SampleScene, StaticActorAndCameraAreStable) {
  auto scene = scene_with({test_support::actor_at("a", kNode, 2, 12)});
  const auto first = sample_scene(scene, 0.0);
  ASSERT_EQ(first.quads.size(), 1u);
  for (double t : {0.7, 2.0, 4.99}) {
    const auto s = sample_scene(scene, t);
    ASSERT_EQ(s.quads.size(), 1u);
    EXPECT_EQ(s.quads[0].quad, first.quads[0].quad);
  }
}

TEST(SampleScene, ClosedFormCard) {
  auto actor = test_support::actor_at("a", kNode, 0, 10);
  actor.height = 1.7;
  actor.width = 0.6;
  auto scene = scene_with({actor});
  scene.camera_base.height_above_ground = 2.5;
  const auto s = sample_scene(scene, 0.0);
  ASSERT_EQ(s.quads.size(), 1u);
  const auto& q = s.quads[0].quad;
  // tan(av/2) = 720/1280; bottom: 360 + 360 * 0.25 / 0.5625, top: 360 + 360 * 0.08 / 0.5625.
  EXPECT_NEAR(q.bottom, 520.0, 1e-6);
  EXPECT_NEAR(q.top, 411.2, 1e-6);
  EXPECT_NEAR(q.left, 640.0 - 19.2, 1e-6);
  EXPECT_NEAR(q.right, 640.0 + 19.2, 1e-6);
  EXPECT_FALSE(q.clipped);
  EXPECT_GT(q.bottom, 360.0);
  EXPECT_LT(q.top, q.bottom);
}

TEST(SampleScene, CrossingTheOpticalAxis) {
  auto actor = test_support::actor_at("walker", kNode, -20, 30);
  actor.trajectory = test_support::straight_path(kNode, {-20, 30}, {20, 30}, 0.0, 4.0);
  auto scene = scene_with({actor});
  // Bearing equals the north heading when east == 0, i.e. halfway: t = 2 s.
  const auto at = sample_scene(scene, 2.0);
  ASSERT_EQ(at.quads.size(), 1u);
  EXPECT_NEAR(at.quads[0].quad.center_u(), 640.0, 1e-6);
  EXPECT_LT(sample_scene(scene, 1.9).quads[0].quad.center_u(), 640.0);
  EXPECT_GT(sample_scene(scene, 2.1).quads[0].quad.center_u(), 640.0);
}

TEST(SampleScene, OmitsBehindAndClipsOffscreen) {
  auto scene = scene_with({test_support::actor_at("behind", kNode, 0, -10),
                           test_support::actor_at("edge", kNode, 9.8, 10)});
  const auto s = sample_scene(scene, 0.0);
  ASSERT_EQ(s.quads.size(), 1u);
  EXPECT_EQ(s.quads[0].actor_id, "edge");
  EXPECT_TRUE(s.quads[0].quad.clipped);
  EXPECT_EQ(s.quads[0].quad.right, 1280.0);
}

TEST(SampleScene, FaultsAreIsolatedPerActor) {
  auto broken = test_support::actor_at("broken", kNode, 0, 10);
  broken.trajectory = Trajectory{{broken.anchor, broken.anchor}, 0, 5};
  auto scene = scene_with({broken, test_support::actor_at("ok", kNode, 1, 10)});
  const auto s = sample_scene(scene, 1.0);
  ASSERT_EQ(s.faults.size(), 1u);
  EXPECT_EQ(s.faults[0].actor_id, "broken");
  EXPECT_EQ(s.faults[0].code, ErrorCode::DegenerateSketch);
  ASSERT_EQ(s.quads.size(), 1u);
  EXPECT_EQ(s.quads[0].actor_id, "ok");
}

TEST(SampleScene, IndependentOfActorOrder) {
  std::vector<Actor> actors;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> off(-30, 30);
  for (int i = 0; i < 6; ++i) {
    auto a = test_support::actor_at("a" + std::to_string(i), kNode, off(rng), 5 + std::abs(off(rng)));
    if (i % 2 == 0) {
      const auto o = geo::enu_offset(a.anchor, kNode);
      a.trajectory = test_support::straight_path(kNode, o, {o.east + 8, o.north + 3}, 0.5, 4.0);
    }
    actors.push_back(a);
  }
  auto scene = scene_with(actors);
  auto shuffled = scene;
  std::shuffle(shuffled.actors.begin(), shuffled.actors.end(), rng);
  for (double t : {0.0, 1.3, 3.9}) {
    const auto a = sample_scene(scene, t);
    const auto b = sample_scene(shuffled, t);
    ASSERT_EQ(a.quads.size(), b.quads.size());
    for (const auto& q : a.quads) {
      auto it = std::find_if(b.quads.begin(), b.quads.end(),
                             [&](const ActorQuad& x) { return x.actor_id == q.actor_id; });
      ASSERT_NE(it, b.quads.end());
      EXPECT_EQ(it->quad, q.quad);
    }
  }
}

TEST(ValidateScene, AcceptsWellFormedScene) {
  auto actor = test_support::actor_at("a", kNode, 0, 10);
  actor.trajectory = test_support::straight_path(kNode, {0, 10}, {5, 12}, 0.0, 5.0);
  EXPECT_TRUE(validate_scene(scene_with({actor})).empty());
}

TEST(ValidateScene, FlagsInvariantViolations) {
  auto actor = test_support::actor_at("a", kNode, 0, 10);
  actor.trajectory = test_support::straight_path(kNode, {0, 10}, {5, 12}, 0.0, 6.0);
  auto d = validate_scene(scene_with({actor}));
  ASSERT_FALSE(d.empty());
  EXPECT_EQ(d[0].path, "actors[0].trajectory");

  auto far = test_support::actor_at("far", kNode, 0, 10);
  far.anchor = geo::GeoPoint::from_degrees(40.0100 + 0.18, -105.2700);  // ~20 km north
  d = validate_scene(scene_with({far}));
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].path, "actors[0]");

  auto scene = scene_with({});
  scene.keyframes.clear();
  scene.duration = 0;
  d = validate_scene(scene);
  EXPECT_EQ(d.size(), 2u);

  auto dup = scene_with({test_support::actor_at("x", kNode, 0, 10), test_support::actor_at("x", kNode, 1, 10)});
  EXPECT_EQ(validate_scene(dup).size(), 1u);

  auto detached = test_support::actor_at("d", kNode, 0, 10);
  detached.trajectory = test_support::straight_path(kNode, {3, 10}, {5, 12}, 0.0, 5.0);
  EXPECT_EQ(validate_scene(scene_with({detached})).size(), 1u);
}

TEST(SceneIo, DocumentRoundTripPreservesSampling) {
  auto actor = test_support::actor_at("a", kNode, 2, 14);
  actor.reference_image = "refs/a.png";
  actor.trajectory = test_support::straight_path(kNode, {2, 14}, {-4, 20}, 0.5, 4.0);
  auto scene = scene_with({actor});
  scene.keyframes.push_back({2.0, deg_to_rad(20), deg_to_rad(-5), deg_to_rad(60)});
  const auto doc = scene_io::to_json(scene);
  EXPECT_EQ(doc.at("schema_version"), 1);
  const auto back = scene_io::scene_from_json(doc);
  ASSERT_EQ(back.actors.size(), 1u);
  EXPECT_EQ(back.actors[0].reference_image, "refs/a.png");
  for (double t : {0.0, 1.0, 3.0}) {
    const auto a = sample_scene(scene, t);
    const auto b = sample_scene(back, t);
    ASSERT_EQ(a.quads.size(), b.quads.size());
    EXPECT_NEAR(a.quads[0].quad.left, b.quads[0].quad.left, 1e-6);
    EXPECT_NEAR(a.quads[0].quad.bottom, b.quads[0].quad.bottom, 1e-6);
  }
}

TEST(SceneIo, RejectsMissingSchemaVersionAndBadTypes) {
  auto doc = scene_io::to_json(test_support::small_scene());
  doc.erase("schema_version");
  EXPECT_THROW(scene_io::scene_from_json(doc), Error);
  doc = scene_io::to_json(test_support::small_scene());
  doc["fps"] = "sixteen";
  try {
    scene_io::scene_from_json(doc);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidScene);
    EXPECT_NE(std::string(e.what()).find("fps"), std::string::npos);
  }
}

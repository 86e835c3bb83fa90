#pragma once

// Scene model: actors with sketched trajectories and camera keyframes on a
// shared timeline, sampled into screen-space mask quads.

#include <optional>
#include <string>
#include <vector>

#include "streetstage/error.hpp"
#include "streetstage/geo.hpp"

namespace streetstage::staging {

inline constexpr double kDefaultDuration = 5.0;
inline constexpr double kDefaultFps = 16.0;
inline constexpr geo::ScreenSize kDefaultResolution{1280, 720};
inline constexpr double kDefaultCameraHeight = 2.5;
inline constexpr double kDefaultActorWidth = 0.6;
inline constexpr double kDefaultActorHeight = 1.7;

struct Trajectory {
  std::vector<geo::GeoPoint> sketch;
  double start_time = 0.0;
  double end_time = kDefaultDuration;
};

struct Actor {
  std::string id;
  geo::GeoPoint anchor;
  double width = kDefaultActorWidth;
  double height = kDefaultActorHeight;
  std::optional<Trajectory> trajectory;
  std::string prompt_fragment;
  std::optional<std::string> reference_image;
};

struct CameraKeyframe {
  double time = 0.0;
  double heading = 0.0;
  double pitch = 0.0;
  double horizontal_fov = geo::kPi / 2.0;
};

struct Scene {
  std::string node_id;
  geo::CameraPose camera_base;
  std::vector<CameraKeyframe> keyframes;  // sorted by time
  std::vector<Actor> actors;
  double duration = kDefaultDuration;
  double fps = kDefaultFps;
  geo::ScreenSize resolution = kDefaultResolution;
  std::string scene_prompt;
};

/// Axis-aligned mask card in pixels; covers [left, right) x [top, bottom).
struct ScreenQuad {
  double left = 0.0;
  double top = 0.0;
  double right = 0.0;
  double bottom = 0.0;
  bool clipped = false;

  double center_u() const { return 0.5 * (left + right); }
  bool empty() const { return !(right > left) || !(bottom > top); }

  friend bool operator==(const ScreenQuad&, const ScreenQuad&) = default;
};

struct ActorQuad {
  std::string actor_id;
  ScreenQuad quad;
};

struct ActorFault {
  std::string actor_id;
  ErrorCode code;
  std::string message;
};

struct SceneSample {
  std::vector<ActorQuad> quads;   // actor order; behind-camera actors omitted
  std::vector<ActorFault> faults;
};

struct Diagnostic {
  std::string path;
  std::string message;
};

/// Number of frames on the timeline: round(duration * fps).
int frame_count(const Scene& scene);

/// Constant-speed position along the sketch. Holds the first point before
/// start_time and the last point after end_time. Arc length is measured in
/// the tangent plane centred on `origin`. Throws DegenerateSketch.
geo::GeoPoint resample_trajectory(const Trajectory& trajectory, double t,
                                  const geo::GeoPoint& origin);

geo::GeoPoint actor_position(const Actor& actor, double t, const geo::GeoPoint& origin);

/// Interpolated camera; heading along the shortest arc, held outside the
/// keyframe span. Vertical FOV follows the scene aspect ratio.
geo::CameraPose camera_at(const Scene& scene, double t);

/// Projects every actor card at time t. Per-actor failures are reported in
/// `faults` and never abort the other actors.
SceneSample sample_scene(const Scene& scene, double t);

/// Empty iff every invariant holds and all actors stay within 10 km of the node.
std::vector<Diagnostic> validate_scene(const Scene& scene);

/// Sorts keyframes by time and normalizes headings. Does not validate.
void normalize(Scene& scene);

/// A ready-to-render scene at the given node with one keyframe at t = 0.
Scene make_default_scene(std::string node_id, const geo::GeoPoint& position);

}  // namespace streetstage::staging

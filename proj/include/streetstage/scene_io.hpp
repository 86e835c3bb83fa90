#pragma once

// Scene documents: JSON with angles in degrees and distances in meters.
//
//   {
//     "schema_version": 1,
//     "node_id": "...",
//     "camera_base": {"lat_deg", "lon_deg", "heading_deg", "pitch_deg", "hfov_deg", "height_m"},
//     "keyframes": [{"t", "heading_deg", "pitch_deg", "hfov_deg"}],
//     "actors": [{"id", "lat_deg", "lon_deg", "width_m", "height_m", "prompt",
//                 "reference_image"?, "trajectory"?: {"points": [[lat, lon], ...],
//                                                      "start_s", "end_s"}}],
//     "duration_s": 5, "fps": 16, "resolution": [1280, 720],
//     "scene_prompt": "..."
//   }

#include <filesystem>

#include <nlohmann/json.hpp>

#include "streetstage/staging.hpp"

namespace streetstage::scene_io {

inline constexpr int kSchemaVersion = 1;

using nlohmann::json;

json to_json(const staging::Scene& scene);
json to_json(const staging::Actor& actor);
json to_json(const staging::Trajectory& trajectory);
json to_json(const staging::CameraKeyframe& keyframe);
json to_json(const staging::ScreenQuad& quad);
json to_json(const geo::GeoPoint& point);

/// Throws InvalidScene naming the offending key.
staging::Scene scene_from_json(const json& doc);
staging::Actor actor_from_json(const json& doc);
staging::Trajectory trajectory_from_json(const json& doc);
staging::CameraKeyframe keyframe_from_json(const json& doc);

staging::Scene load_scene(const std::filesystem::path& path);
void save_scene(const staging::Scene& scene, const std::filesystem::path& path);

}  // namespace streetstage::scene_io

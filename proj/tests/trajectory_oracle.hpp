#pragma once

#include <algorithm>
#include <vector>

#include "oracles.hpp"
#include "streetstage/staging.hpp"

namespace trajectory_oracle {

using streetstage::staging::Trajectory;
namespace geo = streetstage::geo;

inline double ground_distance(const geo::GeoPoint& a, const geo::GeoPoint& b) {
  return oracle::haversine(a.latitude, a.longitude, b.latitude, b.longitude);
}

// Dense-sampling arc-length reference: subdivide each segment linearly in
// latitude/longitude, accumulate great-circle chord lengths, then walk to the
// requested fraction of the total.
inline geo::GeoPoint dense_oracle(const Trajectory& traj, double t) {
  const auto& pts = traj.sketch;
  const int per_segment = 100000 / static_cast<int>(pts.size() - 1);
  std::vector<geo::GeoPoint> samples;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    for (int k = 0; k < per_segment; ++k) {
      const double f = static_cast<double>(k) / per_segment;
      samples.push_back({pts[i].latitude + (pts[i + 1].latitude - pts[i].latitude) * f,
                         pts[i].longitude + (pts[i + 1].longitude - pts[i].longitude) * f});
    }
  }
  samples.push_back(pts.back());
  std::vector<double> cum(samples.size(), 0.0);
  for (std::size_t i = 1; i < samples.size(); ++i) {
    cum[i] = cum[i - 1] + ground_distance(samples[i - 1], samples[i]);
  }
  const double frac = std::clamp((t - traj.start_time) / (traj.end_time - traj.start_time), 0.0, 1.0);
  const double s = frac * cum.back();
  const auto it = std::lower_bound(cum.begin(), cum.end(), s);
  if (it == cum.begin()) return samples.front();
  const auto i = static_cast<std::size_t>(it - cum.begin());
  const double f = (s - cum[i - 1]) / (cum[i] - cum[i - 1]);
  return {samples[i - 1].latitude + (samples[i].latitude - samples[i - 1].latitude) * f,
          samples[i - 1].longitude + (samples[i].longitude - samples[i - 1].longitude) * f};
}

}  // namespace trajectory_oracle

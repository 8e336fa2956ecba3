#pragma once

#include "gridwall/track.hpp"

namespace gridwall {

/// Signed gaps of both cars; positive means behind.
struct DuelState {
  double gap_1 = 0.0;
  double gap_i = 0.0;

  static DuelState antisymmetric(double gap_1) { return DuelState{gap_1, -gap_1}; }
  bool operator==(const DuelState&) const = default;
};

/// Extra lap time from running in the wake: affine inside the closed window, zero elsewhere.
inline double interaction_penalty(double t_gap, const TrackConfig& cfg) {
  const auto& m = cfg.interaction;
  if (t_gap >= m.gap_lo && t_gap <= m.gap_hi) return m.a * t_gap + m.b;
  return 0.0;
}

inline DuelState update_gaps(DuelState d, double t_lap_1, double t_lap_i) {
  d.gap_1 += (t_lap_1 - t_lap_i);
  d.gap_i += (t_lap_i - t_lap_1);
  return d;
}

}  // namespace gridwall

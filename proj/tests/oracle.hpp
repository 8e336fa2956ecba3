#pragma once

// Independent reference simulator for tests. Written directly from the lap-time
// formulas; shares only the TrackConfig constants with the library.

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "gridwall/track.hpp"

namespace oracle {

struct Car {
  double eb, ef, m, t;
  bool cpd;
  int tc;  // 1 soft, 2 medium, 3 hard
  double tw;
  bool outlap;
  int ta;
};

inline Car start(const gridwall::TrackConfig& k) {
  return Car{k.e_b_max, k.e_f0, k.m_dry + k.fuel_unit_mass * k.e_f0, 0.0, false, 2, 0.0, false, 0};
}

inline double wake(double gap, const gridwall::TrackConfig& k) {
  if (gap < k.interaction.gap_lo || gap > k.interaction.gap_hi) return 0.0;
  return k.interaction.a * gap + k.interaction.b;
}

/// One lap; returns the lap time.
inline double lap(Car& c, double d_ef, double d_eb, int ps, double dt_int, const gridwall::TrackConfig& k) {
  d_ef = std::min(std::clamp(d_ef, k.fuel_alloc_range.lo, k.fuel_alloc_range.hi), c.ef);
  d_eb = std::clamp(std::clamp(d_eb, k.batt_alloc_range.lo, k.batt_alloc_range.hi), c.eb - k.e_b_max, c.eb);
  const auto& tm = k.compounds[c.tc - 1];
  double t = k.t0 + k.k_mass * (c.m - k.m_dry) - k.k_batt * d_eb - k.k_fuel * (d_ef - 1.0);
  if (ps != 0) t += k.t_pit_in;
  if (c.outlap) t += k.t_pit_out;
  t += tm.base_offset + tm.alpha * c.tw + tm.beta * c.tw * c.tw;
  t += dt_int;
  c.ef -= d_ef;
  c.m = k.m_dry + k.fuel_unit_mass * c.ef;
  c.eb = std::clamp(c.eb - d_eb, 0.0, k.e_b_max);
  c.t += t;
  if (ps != 0) {
    if (ps != c.tc) c.cpd = true;
    c.tc = ps;
    c.tw = 0.0;
    c.ta = 0;
    c.outlap = true;
  } else {
    c.tw = std::min(c.tw + tm.wear_rate, k.wear_cap);
    c.ta += 1;
    c.outlap = false;
  }
  return t;
}

/// Solo race at constant allocations with stops keyed by 1-based lap.
inline Car solo(const std::map<int, int>& stops, double d_ef, double d_eb, const gridwall::TrackConfig& k) {
  Car c = start(k);
  for (int l = 1; l <= k.n_laps; ++l) {
    const auto it = stops.find(l);
    lap(c, d_ef, d_eb, it == stops.end() ? 0 : it->second, 0.0, k);
  }
  return c;
}

struct Baseline {
  int lap = 0;
  int compound = 0;
  double race_time = 1e300;
};

/// Constant (1.0, 0.0) with exactly one legal stop, brute-forced over lap and compound.
inline Baseline nominal_baseline(const gridwall::TrackConfig& k) {
  Baseline best;
  for (int c = 1; c <= 3; ++c) {
    for (int l = 1; l <= k.n_laps; ++l) {
      const Car r = solo({{l, c}}, 1.0, 0.0, k);
      if (r.cpd && r.t < best.race_time) best = {l, c, r.t};
    }
  }
  return best;
}

/// Two cars with fixed plans; returns car A's gap after every lap (index 0 = start).
inline std::vector<double> duel(const std::map<int, int>& plan_a, const std::map<int, int>& plan_b, double gap_a,
                                const gridwall::TrackConfig& k) {
  Car a = start(k), b = start(k);
  std::vector<double> gaps{gap_a};
  double g = gap_a;
  for (int l = 1; l <= k.n_laps; ++l) {
    const auto pa = plan_a.find(l);
    const auto pb = plan_b.find(l);
    const double ta = lap(a, 1.0, 0.0, pa == plan_a.end() ? 0 : pa->second, wake(g, k), k);
    const double tb = lap(b, 1.0, 0.0, pb == plan_b.end() ? 0 : pb->second, wake(-g, k), k);
    g += ta - tb;
    gaps.push_back(g);
  }
  return gaps;
}

}  // namespace oracle

#pragma once

// Scripted drivers: fixed energy allocation plus a lap-indexed pit plan.

#include <limits>
#include <map>

#include "gridwall/env.hpp"

namespace gridwall {

/// Laps are 1-based; the pit decision for lap k is applied on lap k.
struct PitPlan {
  std::map<int, PitDecision> stops;
  double d_ef = 1.0;
  double d_eb = 0.0;
};

inline int current_lap(const EgoObservation& o, const TrackConfig& track) {
  return track.n_laps - static_cast<int>(o[9]) + 1;
}

inline Driver plan_driver(PitPlan plan, const TrackConfig& track) {
  return [plan = std::move(plan), n = track.n_laps](const EgoObservation& o, const OpponentObservation&) {
    const int lap = n - static_cast<int>(o[9]) + 1;
    const auto it = plan.stops.find(lap);
    return Action{plan.d_ef, plan.d_eb, it == plan.stops.end() ? 0.0 : static_cast<double>(static_cast<int>(it->second))};
  };
}

/// Never pits: breaks the two-compound rule by construction.
inline Driver never_pit_driver(double d_ef = 1.0, double d_eb = 0.0) {
  return [d_ef, d_eb](const EgoObservation&, const OpponentObservation&) { return Action{d_ef, d_eb, 0.0}; };
}

struct BaselineResult {
  PitPlan plan;
  double race_time = std::numeric_limits<double>::infinity();
};

/// Fastest legal single-stop plan at constant allocations, by exhaustive search
/// over the stop lap and the fitted compound.
inline BaselineResult best_one_stop(const TrackConfig& track, double d_ef = 1.0, double d_eb = 0.0) {
  BaselineResult best;
  for (Compound c : kCompounds) {
    for (int lap = 1; lap <= track.n_laps; ++lap) {
      PitPlan plan{{{lap, static_cast<PitDecision>(static_cast<int>(c))}}, d_ef, d_eb};
      const Driver d = plan_driver(plan, track);
      RaceState rs = initial_race_state(track, 0.0);
      while (rs.k < track.n_laps) {
        const Observation o = observe(rs, Side::car_1, track);
        advance_solo(rs, d(o.ego, o.opponent), track);
      }
      if (rs.car_1.b_cpd && rs.car_1.t_race < best.race_time) best = {plan, rs.car_1.t_race};
    }
  }
  return best;
}

}  // namespace gridwall

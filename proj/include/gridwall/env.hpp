#pragma once

// Episodic two-car race environment. One step is one lap for both cars;
// the opponent is an embedded, fixed driver.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gridwall/duel.hpp"
#include "gridwall/track.hpp"

namespace gridwall {

inline constexpr std::size_t kCarStateDim = 8;
inline constexpr std::size_t kEgoDim = 10;
inline constexpr std::size_t kOpponentDim = 4;
inline constexpr std::size_t kObservationDim = kEgoDim + kOpponentDim;
inline constexpr std::size_t kStateDim = 2 * (kCarStateDim + 1);
inline constexpr std::size_t kActionDim = 3;

/// (e_b, e_f, m_car, t_race, b_cpd, tc, tw, b_outlap, t_lap, laps_remaining)
struct EgoObservation {
  std::array<double, kEgoDim> values{};

  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  bool operator==(const EgoObservation&) const = default;
};

/// (ta, ps, b_cpd, t_gap) of the other car; nothing hidden.
struct OpponentObservation {
  std::array<double, kOpponentDim> values{};

  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  bool operator==(const OpponentObservation&) const = default;
};

struct Observation {
  EgoObservation ego;
  OpponentObservation opponent;
};

inline EgoObservation make_ego_observation(const CarState& s, double last_lap, int laps_remaining) {
  return EgoObservation{{s.e_b, s.e_f, s.m_car, s.t_race, s.b_cpd ? 1.0 : 0.0,
                         static_cast<double>(static_cast<int>(s.tc)), s.tw, s.b_outlap ? 1.0 : 0.0, last_lap,
                         static_cast<double>(laps_remaining)}};
}

inline OpponentObservation make_opponent_observation(const CarState& other, PitDecision last_ps, double other_gap) {
  return OpponentObservation{{static_cast<double>(other.ta), static_cast<double>(static_cast<int>(last_ps)),
                              other.b_cpd ? 1.0 : 0.0, other_gap}};
}

/// Inverse of make_ego_observation for the fields it carries. Tire age is not observed and comes back 0.
inline CarState car_state_from_observation(const EgoObservation& o) {
  CarState s;
  s.e_b = o[0];
  s.e_f = o[1];
  s.m_car = o[2];
  s.t_race = o[3];
  s.b_cpd = o[4] != 0.0;
  const int tc = static_cast<int>(std::lround(o[5]));
  if (tc < 1 || tc > 3) throw ContractError("ego observation: tire compound code must be 1, 2 or 3");
  s.tc = static_cast<Compound>(tc);
  s.tw = o[6];
  s.b_outlap = o[7] != 0.0;
  return s;
}

struct RewardConfig {
  double t_c = 100.0;
  double c_win = 30.0;
  double c_reg = 50.0;
  double gamma = 1.0;

  void validate() const {
    if (!(c_win > 0.0)) throw ConfigError("reward: c_win must be positive");
    if (gamma != 1.0) throw ConfigError("reward: the race is undiscounted, gamma must be 1");
    if (c_reg < 0.0) throw ConfigError("reward: c_reg must be non-negative");
  }
};

inline double step_reward(double t_lap, const RewardConfig& rc) { return rc.t_c - t_lap; }

inline double final_reward(double final_gap_1, bool b_cpd, const RewardConfig& rc) {
  double r = final_gap_1 < 0.0 ? rc.c_win : 0.0;
  if (!b_cpd) r -= rc.c_reg;
  return r;
}

/// Terminal term without an opponent: only the compound rule applies.
inline double final_reward_solo(bool b_cpd, const RewardConfig& rc) { return b_cpd ? 0.0 : -rc.c_reg; }

// ---------------------------------------------------------------------------
// One car, one lap.

enum ClipFlag : unsigned {
  kClipFuelRange = 1u << 0,
  kClipFuelEmpty = 1u << 1,
  kClipBatteryRange = 1u << 2,
  kClipBatteryState = 1u << 3,
  kClipPit = 1u << 4,
};

struct LapOutcome {
  CarState next;
  double t_lap = 0.0;
  double t_nom = 0.0;
  double tire_penalty = 0.0;
  double dt_int = 0.0;
  Action realized;  // clipped, ps decoded
  PitDecision ps = PitDecision::none;
  unsigned clipped = 0;
};

/// Sanitize an action against the car's current state. Non-finite components are rejected.
inline Action clip_action(const CarState& s, const Action& raw, const TrackConfig& cfg, unsigned* flags = nullptr) {
  if (!std::isfinite(raw.d_ef) || !std::isfinite(raw.d_eb)) {
    throw InvalidActionError("action: non-finite energy allocation");
  }
  unsigned f = 0;
  Action a;
  a.d_ef = cfg.fuel_alloc_range.clamp(raw.d_ef);
  if (a.d_ef != raw.d_ef) f |= kClipFuelRange;
  if (a.d_ef > s.e_f) {
    a.d_ef = s.e_f;
    f |= kClipFuelEmpty;
  }
  a.d_eb = cfg.batt_alloc_range.clamp(raw.d_eb);
  if (a.d_eb != raw.d_eb) f |= kClipBatteryRange;
  const Range state_window{s.e_b - cfg.e_b_max, s.e_b};
  const double eb_clipped = state_window.clamp(a.d_eb);
  if (eb_clipped != a.d_eb) {
    a.d_eb = eb_clipped;
    f |= kClipBatteryState;
  }
  const PitDecision ps = decode_pit(raw.ps);
  a.ps = static_cast<double>(static_cast<int>(ps));
  if (a.ps != raw.ps) f |= kClipPit;
  if (flags) *flags = f;
  return a;
}

inline LapOutcome advance_car(const CarState& state, const Action& action, double dt_int, const TrackConfig& cfg) {
  LapOutcome out;
  out.realized = clip_action(state, action, cfg, &out.clipped);
  out.ps = decode_pit(out.realized.ps);
  out.t_nom = nominal_lap_time(state, out.realized, cfg);
  // The outgoing set is still on the car for the in-lap.
  out.tire_penalty = tire_time_penalty(state.tc, state.tw, cfg);
  out.dt_int = dt_int;
  out.t_lap = out.t_nom + out.tire_penalty + out.dt_int;

  CarState n = state;
  n.e_f = state.e_f - out.realized.d_ef;
  n.m_car = cfg.m_dry + cfg.fuel_unit_mass * n.e_f;
  n.e_b = Range{0.0, cfg.e_b_max}.clamp(state.e_b - out.realized.d_eb);
  n.t_race = state.t_race + out.t_lap;
  if (out.ps != PitDecision::none) {
    const Compound fitted = fitted_compound(out.ps);
    n.b_cpd = state.b_cpd || fitted != state.tc;
    n.tc = fitted;
    n.tw = 0.0;
    n.ta = 0;
    n.b_outlap = true;
  } else {
    n.tw = std::min(state.tw + wear_increment(state.tc, cfg), cfg.wear_cap);
    n.ta = state.ta + 1;
    n.b_outlap = false;
  }
  out.next = n;
  return out;
}

// ---------------------------------------------------------------------------
// Both cars.

struct RaceState {
  int k = 0;
  CarState car_1;
  CarState car_i;
  DuelState duel;
  double last_lap_1 = 0.0;
  double last_lap_i = 0.0;
  PitDecision last_ps_1 = PitDecision::none;
  PitDecision last_ps_i = PitDecision::none;

  bool operator==(const RaceState&) const = default;
};

enum class Side { car_1, car_i };

inline RaceState initial_race_state(const TrackConfig& cfg, double init_gap_1) {
  RaceState rs;
  rs.car_1 = initial_car_state(cfg);
  rs.car_i = initial_car_state(cfg);
  rs.duel = DuelState::antisymmetric(init_gap_1);
  rs.last_lap_1 = cfg.t0;
  rs.last_lap_i = cfg.t0;
  return rs;
}

/// What `side` is allowed to see: its own full state and the other car's public data.
inline Observation observe(const RaceState& rs, Side side, const TrackConfig& cfg) {
  const int remaining = cfg.n_laps - rs.k;
  if (side == Side::car_1) {
    return {make_ego_observation(rs.car_1, rs.last_lap_1, remaining),
            make_opponent_observation(rs.car_i, rs.last_ps_i, rs.duel.gap_i)};
  }
  return {make_ego_observation(rs.car_i, rs.last_lap_i, remaining),
          make_opponent_observation(rs.car_1, rs.last_ps_1, rs.duel.gap_1)};
}

/// S in R^18: (s_1, gap_1, s_i, gap_i).
inline std::array<double, kStateDim> flatten_state(const RaceState& rs) {
  std::array<double, kStateDim> out{};
  auto put = [&](std::size_t at, const CarState& s, double gap) {
    const auto o = make_ego_observation(s, 0.0, 0);
    for (std::size_t i = 0; i < kCarStateDim; ++i) out[at + i] = o[i];
    out[at + kCarStateDim] = gap;
  };
  put(0, rs.car_1, rs.duel.gap_1);
  put(kCarStateDim + 1, rs.car_i, rs.duel.gap_i);
  return out;
}

struct LapPair {
  LapOutcome car_1;
  LapOutcome car_i;
};

/// Simultaneous move: both lap times use the pre-lap gaps, then gaps update once.
inline LapPair advance_race(RaceState& rs, const Action& a1, const Action& ai, const TrackConfig& cfg) {
  if (rs.k >= cfg.n_laps) throw ProtocolError("advance_race: race already finished");
  LapPair lp;
  lp.car_1 = advance_car(rs.car_1, a1, interaction_penalty(rs.duel.gap_1, cfg), cfg);
  lp.car_i = advance_car(rs.car_i, ai, interaction_penalty(rs.duel.gap_i, cfg), cfg);
  rs.duel = update_gaps(rs.duel, lp.car_1.t_lap, lp.car_i.t_lap);
  rs.car_1 = lp.car_1.next;
  rs.car_i = lp.car_i.next;
  rs.last_lap_1 = lp.car_1.t_lap;
  rs.last_lap_i = lp.car_i.t_lap;
  rs.last_ps_1 = lp.car_1.ps;
  rs.last_ps_i = lp.car_i.ps;
  ++rs.k;
  return lp;
}

/// Single car on an empty track: no wake, gaps untouched.
inline LapOutcome advance_solo(RaceState& rs, const Action& a1, const TrackConfig& cfg) {
  if (rs.k >= cfg.n_laps) throw ProtocolError("advance_solo: race already finished");
  LapOutcome out = advance_car(rs.car_1, a1, 0.0, cfg);
  rs.car_1 = out.next;
  rs.last_lap_1 = out.t_lap;
  rs.last_ps_1 = out.ps;
  ++rs.k;
  return out;
}

// ---------------------------------------------------------------------------
// Trace records.

struct TraceRow {
  int lap = 0;  // 1-based lap just completed
  int car = 1;  // 1 = car 1, 2 = car i
  CarState state;  // after the lap
  PitDecision ps = PitDecision::none;
  double d_ef = 0.0;
  double d_eb = 0.0;
  double t_lap = 0.0;
  double t_gap = 0.0;  // after the lap
  double dt_int = 0.0;
  unsigned clipped = 0;
};

inline TraceRow make_trace_row(int lap, int car, const LapOutcome& lo, double gap_after) {
  return TraceRow{lap, car, lo.next, lo.ps, lo.realized.d_ef, lo.realized.d_eb, lo.t_lap, gap_after, lo.dt_int,
                  lo.clipped};
}

inline constexpr const char* kTraceHeader =
    "lap,car,e_b,e_f,m_car,tc,tw,ta,ps,d_ef_realized,d_eb_realized,t_lap,t_race,t_gap,dt_int,clipped_flags";

inline std::string format_g9(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

inline void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& rows) {
  os << kTraceHeader << '\n';
  for (const auto& r : rows) {
    os << r.lap << ',' << r.car << ',' << format_g9(r.state.e_b) << ',' << format_g9(r.state.e_f) << ','
       << format_g9(r.state.m_car) << ',' << static_cast<int>(r.state.tc) << ',' << format_g9(r.state.tw) << ','
       << r.state.ta << ',' << static_cast<int>(r.ps) << ',' << format_g9(r.d_ef) << ',' << format_g9(r.d_eb)
       << ',' << format_g9(r.t_lap) << ',' << format_g9(r.state.t_race) << ',' << format_g9(r.t_gap) << ','
       << format_g9(r.dt_int) << ',' << r.clipped << '\n';
  }
}

inline std::string trace_csv(const std::vector<TraceRow>& rows) {
  std::ostringstream os;
  write_trace_csv(os, rows);
  return os.str();
}

// ---------------------------------------------------------------------------
// Episode: car 1 is driven from outside, car i by the embedded opponent.

/// Anything that can race a car: maps its own view to an action.
using Driver = std::function<Action(const EgoObservation&, const OpponentObservation&)>;

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  LapOutcome ego_lap;
  std::optional<LapOutcome> opponent_lap;
};

class Episode {
 public:
  /// An empty `opponent` makes a single-car episode.
  Episode(TrackConfig track, RewardConfig reward, Driver opponent = {}, Range gap_sampler = {-2.0, 2.0})
      : track_(std::move(track)),
        reward_(reward),
        opponent_(std::move(opponent)),
        gap_sampler_(gap_sampler) {
    track_.validate();
    reward_.validate();
  }

  /// `init_gap` is car 1's gap; nullopt samples it uniformly from the configured interval.
  Observation reset(std::uint64_t seed, std::optional<double> init_gap = std::nullopt) {
    rng_.seed(seed);
    double gap = 0.0;
    if (init_gap) {
      gap = *init_gap;
    } else if (!solo()) {
      gap = std::uniform_real_distribution<double>(gap_sampler_.lo, gap_sampler_.hi)(rng_);
    }
    state_ = initial_race_state(track_, solo() ? 0.0 : gap);
    trace_.clear();
    started_ = true;
    return observation();
  }

  StepResult step(const Action& a1) {
    if (!started_) throw ProtocolError("step: episode not reset");
    if (done()) throw ProtocolError("step: episode is terminal");
    StepResult r;
    if (solo()) {
      r.ego_lap = advance_solo(state_, a1, track_);
      if (record_) trace_.push_back(make_trace_row(state_.k, 1, r.ego_lap, 0.0));
    } else {
      const Observation theirs = observe(state_, Side::car_i, track_);
      const Action ai = opponent_(theirs.ego, theirs.opponent);
      const LapPair lp = advance_race(state_, a1, ai, track_);
      r.ego_lap = lp.car_1;
      r.opponent_lap = lp.car_i;
      if (record_) {
        trace_.push_back(make_trace_row(state_.k, 1, lp.car_1, state_.duel.gap_1));
        trace_.push_back(make_trace_row(state_.k, 2, lp.car_i, state_.duel.gap_i));
      }
    }
    r.done = done();
    r.reward = step_reward(r.ego_lap.t_lap, reward_);
    if (r.done) {
      r.reward += solo() ? final_reward_solo(state_.car_1.b_cpd, reward_)
                         : final_reward(state_.duel.gap_1, state_.car_1.b_cpd, reward_);
    }
    r.observation = observation();
    return r;
  }

  Observation observation() const {
    if (solo()) {
      return {make_ego_observation(state_.car_1, state_.last_lap_1, track_.n_laps - state_.k), {}};
    }
    return observe(state_, Side::car_1, track_);
  }

  bool solo() const { return !static_cast<bool>(opponent_); }
  bool done() const { return state_.k >= track_.n_laps; }
  const RaceState& state() const { return state_; }
  std::array<double, kStateDim> flat_state() const { return flatten_state(state_); }
  const TrackConfig& track() const { return track_; }
  const RewardConfig& reward_config() const { return reward_; }

  void set_opponent(Driver d) { opponent_ = std::move(d); }
  void record_trace(bool on) { record_ = on; }
  const std::vector<TraceRow>& trace() const { return trace_; }

 private:
  TrackConfig track_;
  RewardConfig reward_;
  Driver opponent_;
  Range gap_sampler_;
  std::mt19937_64 rng_{0};
  RaceState state_{};
  std::vector<TraceRow> trace_;
  bool started_ = false;
  bool record_ = false;
};

}  // namespace gridwall

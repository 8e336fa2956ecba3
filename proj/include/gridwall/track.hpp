#pragma once

// Single-car physical model: lap-time map, tire degradation, fuel/battery
// bookkeeping and pit decoding. Everything here is a pure function of an
// immutable TrackConfig.

#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"

#include "gridwall/errors.hpp"
#include "gridwall/hash.hpp"

namespace gridwall {

using json = nlohmann::json;

// Codes match the pit decision that fits the compound.
enum class Compound : int { soft = 1, medium = 2, hard = 3 };

enum class PitDecision : int { none = 0, soft = 1, medium = 2, hard = 3 };

inline constexpr std::array<Compound, 3> kCompounds{Compound::soft, Compound::medium, Compound::hard};

inline const char* to_string(Compound c) {
  switch (c) {
    case Compound::soft: return "soft";
    case Compound::medium: return "medium";
    case Compound::hard: return "hard";
  }
  return "?";
}

inline const char* to_string(PitDecision ps) {
  return ps == PitDecision::none ? "none" : to_string(static_cast<Compound>(static_cast<int>(ps)));
}

inline Compound fitted_compound(PitDecision ps) {
  if (ps == PitDecision::none) throw ContractError("fitted_compound: no-pit decision fits nothing");
  return static_cast<Compound>(static_cast<int>(ps));
}

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  double clamp(double x) const { return x < lo ? lo : (x > hi ? hi : x); }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

struct CompoundModel {
  double base_offset = 0.0;  // s, fresh-tire offset relative to fresh soft
  double alpha = 0.0;        // s per unit wear
  double beta = 0.0;         // s per unit wear squared
  double wear_rate = 0.0;    // wear per lap
};

struct InteractionModel {
  double a = -0.4;  // s per s of gap
  double b = 0.6;   // s
  double gap_lo = 0.2;
  double gap_hi = 1.5;
};

struct TrackConfig {
  int n_laps = 57;
  double t0 = 95.0;
  double k_mass = 0.033;
  double k_batt = 0.4;
  double k_fuel = 1.2;
  double m_dry = 800.0;
  double fuel_unit_mass = 1.754;
  double e_f0 = 57.0;
  Range fuel_alloc_range{0.85, 1.15};
  double e_b_max = 1.0;
  Range batt_alloc_range{-1.0, 1.0};
  std::array<CompoundModel, 3> compounds{{
      {0.0, 2.5, 3.0, 0.045},
      {0.4, 2.0, 2.5, 0.032},
      {0.8, 2.8, 3.5, 0.022},
  }};
  double t_pit_in = 18.0;
  double t_pit_out = 4.0;
  InteractionModel interaction{};
  double wear_cap = 1.5;

  const CompoundModel& compound(Compound c) const {
    return compounds.at(static_cast<std::size_t>(static_cast<int>(c) - 1));
  }

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(std::string("invalid track config: ") + what);
    };
    require(n_laps > 0, "n_laps must be positive");
    require(t0 > 0.0, "t0 must be positive");
    require(interaction.a < 0.0, "interaction.a must be negative");
    require(interaction.gap_lo < interaction.gap_hi, "interaction window must satisfy gap_lo < gap_hi");
    require(fuel_alloc_range.lo <= fuel_alloc_range.hi, "fuel_alloc_range is empty");
    require(batt_alloc_range.lo <= batt_alloc_range.hi, "batt_alloc_range is empty");
    require(e_b_max > 0.0 && e_f0 >= 0.0 && m_dry > 0.0 && fuel_unit_mass >= 0.0, "non-physical capacities");
    require(wear_cap > 0.0, "wear_cap must be positive");
    const auto& s = compound(Compound::soft);
    const auto& m = compound(Compound::medium);
    const auto& h = compound(Compound::hard);
    require(s.wear_rate > m.wear_rate && m.wear_rate > h.wear_rate && h.wear_rate > 0.0,
            "wear rates must satisfy soft > medium > hard > 0");
    require(s.base_offset < m.base_offset && m.base_offset < h.base_offset,
            "base offsets must satisfy soft < medium < hard");
    for (const auto& c : compounds) {
      // Strictly increasing penalty on [0, wear_cap].
      require(c.alpha > 0.0 && c.beta >= 0.0, "tire penalty coefficients must be alpha > 0, beta >= 0");
    }
  }
};

/// Per-car race state. Field order of the first eight matches the observation layout.
struct CarState {
  double e_b = 0.0;
  double e_f = 0.0;
  double m_car = 0.0;
  double t_race = 0.0;
  bool b_cpd = false;
  Compound tc = Compound::medium;
  double tw = 0.0;
  bool b_outlap = false;
  int ta = 0;

  bool operator==(const CarState&) const = default;
};

/// Raw pit-wall decision for one lap. `ps` is decoded with decode_pit.
struct Action {
  double d_ef = 1.0;
  double d_eb = 0.0;
  double ps = 0.0;

  bool operator==(const Action&) const = default;
};

inline CarState initial_car_state(const TrackConfig& cfg, Compound start = Compound::medium) {
  CarState s;
  s.e_b = cfg.e_b_max;
  s.e_f = cfg.e_f0;
  s.m_car = cfg.m_dry + cfg.fuel_unit_mass * cfg.e_f0;
  s.tc = start;
  return s;
}

/// Clip to [0, 3], then round half up.
inline PitDecision decode_pit(double ps_raw) {
  if (!std::isfinite(ps_raw)) throw InvalidActionError("decode_pit: non-finite pit decision");
  const double clipped = ps_raw < 0.0 ? 0.0 : (ps_raw > 3.0 ? 3.0 : ps_raw);
  return static_cast<PitDecision>(static_cast<int>(std::floor(clipped + 0.5)));
}

inline double tire_time_penalty(Compound c, double tw, const TrackConfig& cfg) {
  if (!(tw >= 0.0 && tw <= cfg.wear_cap)) {
    throw DomainError("tire_time_penalty: wear " + std::to_string(tw) + " outside [0, wear_cap]");
  }
  const auto& m = cfg.compound(c);
  return m.base_offset + m.alpha * tw + m.beta * tw * tw;
}

inline double wear_increment(Compound c, const TrackConfig& cfg) { return cfg.compound(c).wear_rate; }

/// Affine nominal lap-time map. `action` must already be clipped to the feasible set.
inline double nominal_lap_time(const CarState& state, const Action& action, const TrackConfig& cfg) {
  double t = cfg.t0 + cfg.k_mass * (state.m_car - cfg.m_dry) - cfg.k_batt * action.d_eb -
             cfg.k_fuel * (action.d_ef - 1.0);
  if (decode_pit(action.ps) != PitDecision::none) t += cfg.t_pit_in;
  if (state.b_outlap) t += cfg.t_pit_out;
  return t;
}

// ---------------------------------------------------------------------------
// JSON mirror of TrackConfig. Unknown keys are rejected; missing keys keep defaults.

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, _] : j.items()) {
    if (!allowed.contains(k)) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline void read_range(const json& j, const char* key, Range& out, const std::string& where) {
  if (!j.contains(key)) return;
  const auto& r = j.at(key);
  if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number()) {
    throw ConfigError(where + "." + key + ": expected [min, max]");
  }
  out = Range{r[0].get<double>(), r[1].get<double>()};
}

}  // namespace detail

inline json to_json(const TrackConfig& c) {
  json compounds = json::object();
  for (Compound k : kCompounds) {
    const auto& m = c.compound(k);
    compounds[to_string(k)] = {
        {"base_offset", m.base_offset}, {"alpha", m.alpha}, {"beta", m.beta}, {"wear_rate", m.wear_rate}};
  }
  return json{
      {"n_laps", c.n_laps},
      {"t0", c.t0},
      {"k_mass", c.k_mass},
      {"k_batt", c.k_batt},
      {"k_fuel", c.k_fuel},
      {"m_dry", c.m_dry},
      {"fuel_unit_mass", c.fuel_unit_mass},
      {"e_f0", c.e_f0},
      {"fuel_alloc_range", {c.fuel_alloc_range.lo, c.fuel_alloc_range.hi}},
      {"e_b_max", c.e_b_max},
      {"batt_alloc_range", {c.batt_alloc_range.lo, c.batt_alloc_range.hi}},
      {"compounds", compounds},
      {"t_pit_in", c.t_pit_in},
      {"t_pit_out", c.t_pit_out},
      {"interaction",
       {{"a", c.interaction.a}, {"b", c.interaction.b}, {"gap_lo", c.interaction.gap_lo},
        {"gap_hi", c.interaction.gap_hi}}},
      {"wear_cap", c.wear_cap},
  };
}

inline TrackConfig track_config_from_json(const json& j) {
  using detail::read_opt;
  const std::string where = "track";
  detail::reject_unknown(j,
                         {"n_laps", "t0", "k_mass", "k_batt", "k_fuel", "m_dry", "fuel_unit_mass", "e_f0",
                          "fuel_alloc_range", "e_b_max", "batt_alloc_range", "compounds", "t_pit_in",
                          "t_pit_out", "interaction", "wear_cap"},
                         where);
  TrackConfig c;
  read_opt(j, "n_laps", c.n_laps, where);
  read_opt(j, "t0", c.t0, where);
  read_opt(j, "k_mass", c.k_mass, where);
  read_opt(j, "k_batt", c.k_batt, where);
  read_opt(j, "k_fuel", c.k_fuel, where);
  read_opt(j, "m_dry", c.m_dry, where);
  read_opt(j, "fuel_unit_mass", c.fuel_unit_mass, where);
  read_opt(j, "e_f0", c.e_f0, where);
  detail::read_range(j, "fuel_alloc_range", c.fuel_alloc_range, where);
  read_opt(j, "e_b_max", c.e_b_max, where);
  detail::read_range(j, "batt_alloc_range", c.batt_alloc_range, where);
  read_opt(j, "t_pit_in", c.t_pit_in, where);
  read_opt(j, "t_pit_out", c.t_pit_out, where);
  read_opt(j, "wear_cap", c.wear_cap, where);
  if (j.contains("compounds")) {
    const auto& cj = j.at("compounds");
    detail::reject_unknown(cj, {"soft", "medium", "hard"}, "track.compounds");
    for (Compound k : kCompounds) {
      if (!cj.contains(to_string(k))) continue;
      const std::string w = std::string("track.compounds.") + to_string(k);
      const auto& mj = cj.at(to_string(k));
      detail::reject_unknown(mj, {"base_offset", "alpha", "beta", "wear_rate"}, w);
      auto& m = c.compounds[static_cast<std::size_t>(static_cast<int>(k) - 1)];
      read_opt(mj, "base_offset", m.base_offset, w);
      read_opt(mj, "alpha", m.alpha, w);
      read_opt(mj, "beta", m.beta, w);
      read_opt(mj, "wear_rate", m.wear_rate, w);
    }
  }
  if (j.contains("interaction")) {
    const auto& ij = j.at("interaction");
    detail::reject_unknown(ij, {"a", "b", "gap_lo", "gap_hi"}, "track.interaction");
    read_opt(ij, "a", c.interaction.a, "track.interaction");
    read_opt(ij, "b", c.interaction.b, "track.interaction");
    read_opt(ij, "gap_lo", c.interaction.gap_lo, "track.interaction");
    read_opt(ij, "gap_hi", c.interaction.gap_hi, "track.interaction");
  }
  c.validate();
  return c;
}

inline TrackConfig load_track_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open track config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("track config '" + path + "' is not valid JSON: " + e.what());
  }
  return track_config_from_json(j);
}

/// Identity of a track model; checkpoints and matches refuse to mix configs.
inline std::string config_hash(const TrackConfig& c) { return sha256_hex(to_json(c).dump()); }

}  // namespace gridwall

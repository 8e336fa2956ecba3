#pragma once

// Battle arena: deterministic head-to-head races, Elo bookkeeping, and the
// round-robin loop that runs until ratings settle.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "gridwall/elo.hpp"
#include "gridwall/env.hpp"
#include "gridwall/policy.hpp"

namespace gridwall {

/// A named driver bound to one track model.
struct Contestant {
  std::string id;
  std::string track_hash;
  Driver driver;
};

inline Contestant policy_contestant(std::string id, std::shared_ptr<const Policy> p, const TrackConfig& track) {
  std::string hash = p->track_hash();
  return Contestant{std::move(id), std::move(hash), policy_driver(std::move(p), track)};
}

inline Contestant scripted_contestant(std::string id, Driver d, const TrackConfig& track) {
  return Contestant{std::move(id), config_hash(track), std::move(d)};
}

/// Raised when a contestant's driver throws during a match.
class AgentFailure : public Error {
 public:
  AgentFailure(std::string agent, const std::string& what) : Error(what), agent_(std::move(agent)) {}
  const std::string& agent() const noexcept { return agent_; }

 private:
  std::string agent_;
};

enum class Winner { a, b, draw };

inline const char* to_string(Winner w) {
  switch (w) {
    case Winner::a: return "a";
    case Winner::b: return "b";
    case Winner::draw: return "draw";
  }
  return "?";
}

struct MatchResult {
  std::string agent_a;
  std::string agent_b;
  std::uint64_t seed = 0;
  double init_gap = 0.0;  // A's starting gap; positive means A starts behind
  Winner winner = Winner::draw;
  double final_gap = 0.0;  // A's gap at the flag
  double race_time_a = 0.0;
  double race_time_b = 0.0;
  bool b_cpd_a = false;
  bool b_cpd_b = false;
  bool forfeit = false;
  std::vector<TraceRow> trace;

  double score_a() const { return winner == Winner::a ? 1.0 : (winner == Winner::b ? 0.0 : 0.5); }
};

/// Compound-rule violators lose regardless of gap; two violators are scored on gap; a zero gap is a draw.
inline Winner decide_winner(double final_gap_a, bool b_cpd_a, bool b_cpd_b) {
  if (b_cpd_a != b_cpd_b) return b_cpd_a ? Winner::a : Winner::b;
  if (final_gap_a < 0.0) return Winner::a;
  if (final_gap_a > 0.0) return Winner::b;
  return Winner::draw;
}

inline json to_json(const MatchResult& m) {
  return json{{"agent_a", m.agent_a},
              {"agent_b", m.agent_b},
              {"seed", m.seed},
              {"init_gap", m.init_gap},
              {"winner", to_string(m.winner)},
              {"score_a", m.score_a()},
              {"final_gap", m.final_gap},
              {"race_time_a", m.race_time_a},
              {"race_time_b", m.race_time_b},
              {"b_cpd_a", m.b_cpd_a},
              {"b_cpd_b", m.b_cpd_b},
              {"forfeit", m.forfeit},
              {"laps", m.trace.size() / 2}};
}

/// One full race with A as car 1 starting at `init_gap`.
inline MatchResult play_match(const Contestant& a, const Contestant& b, std::uint64_t seed, double init_gap,
                              const TrackConfig& track, const RewardConfig& rc) {
  const std::string hash = config_hash(track);
  if (a.track_hash != hash || b.track_hash != hash) {
    throw ConfigError("play_match: contestant '" + (a.track_hash != hash ? a.id : b.id) +
                      "' was built for a different track config");
  }
  auto guarded = [](const Contestant& c) -> Driver {
    return [&c](const EgoObservation& o, const OpponentObservation& op) {
      try {
        return c.driver(o, op);
      } catch (const std::exception& e) {
        throw AgentFailure(c.id, c.id + ": " + e.what());
      }
    };
  };
  Episode env(track, rc, guarded(b));
  env.record_trace(true);
  Observation obs = env.reset(seed, init_gap);
  const Driver drive_a = guarded(a);
  while (!env.done()) obs = env.step(drive_a(obs.ego, obs.opponent)).observation;

  const RaceState& s = env.state();
  MatchResult m;
  m.agent_a = a.id;
  m.agent_b = b.id;
  m.seed = seed;
  m.init_gap = init_gap;
  m.final_gap = s.duel.gap_1;
  m.race_time_a = s.car_1.t_race;
  m.race_time_b = s.car_i.t_race;
  m.b_cpd_a = s.car_1.b_cpd;
  m.b_cpd_b = s.car_i.b_cpd;
  m.winner = decide_winner(m.final_gap, m.b_cpd_a, m.b_cpd_b);
  m.trace = env.trace();
  return m;
}

// ---------------------------------------------------------------------------

struct AgentRecord {
  double rating = kInitialRating;
  int matches = 0;
  int wins = 0;
  int draws = 0;
  int losses = 0;
};

struct HistoryEntry {
  int round = 0;
  std::string a;
  std::string b;
  double init_gap = 0.0;
  std::uint64_t seed = 0;
  double score_a = 0.0;
  double rating_a = 0.0;  // after the update
  double rating_b = 0.0;
  bool forfeit = false;
  std::string trace_file;
};

class EloTable {
 public:
  explicit EloTable(double k = kDefaultK) : k_(k) {}

  void add_agent(const std::string& id) { agents_.try_emplace(id); }
  bool contains(const std::string& id) const { return agents_.contains(id); }
  double rating(const std::string& id) const { return agents_.at(id).rating; }
  const AgentRecord& record(const std::string& id) const { return agents_.at(id); }
  const std::map<std::string, AgentRecord>& agents() const { return agents_; }
  const std::vector<HistoryEntry>& history() const { return history_; }
  double k() const { return k_; }
  int rounds_played() const { return rounds_; }
  void finish_round() { ++rounds_; }

  /// Apply one result; returns the rating delta for A.
  double apply(const std::string& a, const std::string& b, double score_a, HistoryEntry entry = {}) {
    add_agent(a);
    add_agent(b);
    auto& ra = agents_.at(a);
    auto& rb = agents_.at(b);
    const double d = elo_delta(ra.rating, rb.rating, score_a, k_);
    ra.rating += d;
    rb.rating -= d;
    for (auto [rec, s] : {std::pair{&ra, score_a}, std::pair{&rb, 1.0 - score_a}}) {
      ++rec->matches;
      if (s == 1.0) ++rec->wins;
      else if (s == 0.0) ++rec->losses;
      else ++rec->draws;
    }
    entry.a = a;
    entry.b = b;
    entry.score_a = score_a;
    entry.rating_a = ra.rating;
    entry.rating_b = rb.rating;
    history_.push_back(std::move(entry));
    return d;
  }

  double total() const {
    double s = 0.0;
    for (const auto& [_, r] : agents_) s += r.rating;
    return s;
  }

  /// Best first; ties broken by id.
  std::vector<std::pair<std::string, double>> ranking() const {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& [id, r] : agents_) out.emplace_back(id, r.rating);
    std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
      return x.second != y.second ? x.second > y.second : x.first < y.first;
    });
    return out;
  }

  json to_json() const {
    json agents = json::object();
    for (const auto& [id, r] : agents_) {
      agents[id] = {{"rating", r.rating}, {"matches", r.matches}, {"wins", r.wins}, {"draws", r.draws},
                    {"losses", r.losses}};
    }
    json hist = json::array();
    for (const auto& h : history_) {
      hist.push_back({{"round", h.round}, {"a", h.a}, {"b", h.b}, {"init_gap", h.init_gap}, {"seed", h.seed},
                      {"score_a", h.score_a}, {"rating_a", h.rating_a}, {"rating_b", h.rating_b},
                      {"forfeit", h.forfeit}, {"trace", h.trace_file}});
    }
    json ranking = json::array();
    int pos = 1;
    for (const auto& [id, r] : this->ranking()) ranking.push_back({{"rank", pos++}, {"agent", id}, {"rating", r}});
    return json{{"k", k_}, {"rounds", rounds_}, {"agents", agents}, {"ranking", ranking}, {"history", hist}};
  }

  static EloTable from_json(const json& j) {
    try {
      EloTable t(j.at("k").get<double>());
      t.rounds_ = j.at("rounds").get<int>();
      for (const auto& [id, r] : j.at("agents").items()) {
        AgentRecord rec;
        rec.rating = r.at("rating").get<double>();
        rec.matches = r.at("matches").get<int>();
        rec.wins = r.at("wins").get<int>();
        rec.draws = r.at("draws").get<int>();
        rec.losses = r.at("losses").get<int>();
        t.agents_[id] = rec;
      }
      for (const auto& h : j.at("history")) {
        t.history_.push_back(HistoryEntry{h.at("round").get<int>(), h.at("a").get<std::string>(),
                                          h.at("b").get<std::string>(), h.at("init_gap").get<double>(),
                                          h.at("seed").get<std::uint64_t>(), h.at("score_a").get<double>(),
                                          h.at("rating_a").get<double>(), h.at("rating_b").get<double>(),
                                          h.at("forfeit").get<bool>(), h.at("trace").get<std::string>()});
      }
      return t;
    } catch (const json::exception& e) {
      throw ConfigError(std::string("arena state: ") + e.what());
    }
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("arena: cannot write state file " + path.string());
    out << to_json().dump(2) << '\n';
  }

  static EloTable load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("arena: cannot read state file " + path.string());
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError("arena state '" + path.string() + "': " + e.what());
    }
    return from_json(j);
  }

 private:
  double k_;
  int rounds_ = 0;
  std::map<std::string, AgentRecord> agents_;
  std::vector<HistoryEntry> history_;
};

// ---------------------------------------------------------------------------

/// Draws the starting gap magnitude for one pairing in one round.
using GapSampler = std::function<double(std::mt19937_64&)>;

inline GapSampler fixed_gap(double g) {
  return [g](std::mt19937_64&) { return g; };
}

inline GapSampler uniform_gap(Range r) {
  return [r](std::mt19937_64& rng) { return std::uniform_real_distribution<double>(r.lo, r.hi)(rng); };
}

struct ArenaConfig {
  int rounds = 100;
  double epsilon = 1.0;  // stop once no rating moves more than this over a round
  GapSampler gaps = fixed_gap(0.5);
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> trace_dir;
  std::optional<std::filesystem::path> state_file;
  unsigned threads = 1;
};

inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Round-robin until `rounds` or convergence. Each pairing races once with each side starting behind.
inline EloTable run_arena(const std::vector<Contestant>& agents, const ArenaConfig& cfg, const TrackConfig& track,
                          const RewardConfig& rc, EloTable table = EloTable{}) {
  if (agents.size() < 2) throw ContractError("run_arena: need at least two agents");
  std::set<std::string> ids;
  for (const auto& a : agents) {
    if (!ids.insert(a.id).second) throw ContractError("run_arena: duplicate agent id " + a.id);
    table.add_agent(a.id);
  }
  if (cfg.trace_dir) std::filesystem::create_directories(*cfg.trace_dir);
  std::mt19937_64 rng(mix_seed(cfg.seed ^ static_cast<std::uint64_t>(table.rounds_played())));

  struct Fixture {
    std::size_t a, b;
    double gap;
    std::uint64_t seed;
  };

  for (int r = 0; r < cfg.rounds; ++r) {
    const int round = table.rounds_played() + 1;
    std::vector<Fixture> fixtures;
    for (std::size_t i = 0; i < agents.size(); ++i) {
      for (std::size_t j = i + 1; j < agents.size(); ++j) {
        const double g = cfg.gaps(rng);
        const std::uint64_t s = mix_seed(cfg.seed + 1000003ull * static_cast<std::uint64_t>(round) + 7919ull * i + j);
        fixtures.push_back({i, j, g, s});
        fixtures.push_back({j, i, g, mix_seed(s)});
      }
    }

    struct Outcome {
      std::optional<MatchResult> result;
      std::optional<std::string> failed;
    };
    auto play = [&](const Fixture& f) {
      Outcome o;
      try {
        o.result = play_match(agents[f.a], agents[f.b], f.seed, f.gap, track, rc);
      } catch (const AgentFailure& e) {
        o.failed = e.agent();
      }
      return o;
    };
    std::vector<Outcome> outcomes(fixtures.size());
    if (cfg.threads > 1) {
      for (std::size_t start = 0; start < fixtures.size(); start += cfg.threads) {
        std::vector<std::future<Outcome>> jobs;
        for (std::size_t i = start; i < std::min(fixtures.size(), start + cfg.threads); ++i) {
          jobs.push_back(std::async(std::launch::async, play, fixtures[i]));
        }
        for (std::size_t i = 0; i < jobs.size(); ++i) outcomes[start + i] = jobs[i].get();
      }
    } else {
      for (std::size_t i = 0; i < fixtures.size(); ++i) outcomes[i] = play(fixtures[i]);
    }

    // Canonical application order: fixture index.
    std::map<std::string, double> before;
    for (const auto& a : agents) before[a.id] = table.rating(a.id);
    std::set<std::string> forfeited;
    for (std::size_t i = 0; i < fixtures.size(); ++i) {
      const Fixture& f = fixtures[i];
      const std::string& ida = agents[f.a].id;
      const std::string& idb = agents[f.b].id;
      HistoryEntry h;
      h.round = round;
      h.init_gap = f.gap;
      h.seed = f.seed;
      double score = 0.5;
      const bool a_out = forfeited.contains(ida) || (outcomes[i].failed && *outcomes[i].failed == ida);
      const bool b_out = forfeited.contains(idb) || (outcomes[i].failed && *outcomes[i].failed == idb);
      if (a_out || b_out) {
        if (outcomes[i].failed) forfeited.insert(*outcomes[i].failed);
        h.forfeit = true;
        score = a_out && b_out ? 0.5 : (a_out ? 0.0 : 1.0);
      } else {
        const MatchResult& m = *outcomes[i].result;
        score = m.score_a();
        if (cfg.trace_dir) {
          const std::string name = "r" + std::to_string(round) + "_" + ida + "_vs_" + idb + "_" + std::to_string(i) + ".csv";
          std::ofstream out(*cfg.trace_dir / name, std::ios::trunc);
          write_trace_csv(out, m.trace);
          h.trace_file = name;
        }
      }
      table.apply(ida, idb, score, std::move(h));
    }
    table.finish_round();
    if (cfg.state_file) table.save(*cfg.state_file);

    double max_change = 0.0;
    for (const auto& a : agents) max_change = std::max(max_change, std::abs(table.rating(a.id) - before[a.id]));
    if (max_change < cfg.epsilon) break;
  }
  return table;
}

}  // namespace gridwall

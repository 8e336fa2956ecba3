#pragma once

// Console service logic, transport-free: agents, matches, human duels,
// recommendations and the leaderboard. The HTTP/WebSocket layer in
// server.hpp only routes into Console::handle.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "gridwall/arena.hpp"
#include "gridwall/checkpoint.hpp"

namespace gridwall {

inline constexpr const char* kCheckpointExt = ".gwc";
inline constexpr const char* kArenaStateFile = "arena.json";

struct AgentEntry {
  std::string id;
  std::filesystem::path path;
  std::shared_ptr<const Policy> policy;
};

/// Every `*.gwc` file in a directory, keyed by file stem.
class AgentRegistry {
 public:
  AgentRegistry() = default;
  explicit AgentRegistry(const std::filesystem::path& dir) : dir_(dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) throw ConfigError("agents directory not readable: " + dir.string());
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      if (e.path().extension() != kCheckpointExt) continue;
      agents_.emplace(e.path().stem().string(),
                      AgentEntry{e.path().stem().string(), e.path(), std::make_shared<const Policy>(load_checkpoint(e.path()))});
    }
  }

  void add(std::string id, std::shared_ptr<const Policy> p) {
    agents_.insert_or_assign(id, AgentEntry{id, {}, std::move(p)});
  }

  const AgentEntry& get(const std::string& id) const {
    const auto it = agents_.find(id);
    if (it == agents_.end()) throw NotFoundError("unknown agent '" + id + "'");
    return it->second;
  }

  const std::map<std::string, AgentEntry>& all() const { return agents_; }
  const std::filesystem::path& dir() const { return dir_; }

  std::vector<Contestant> contestants(const TrackConfig& track) const {
    std::vector<Contestant> out;
    for (const auto& [id, e] : agents_) out.push_back(policy_contestant(id, e.policy, track));
    return out;
  }

 private:
  std::filesystem::path dir_;
  std::map<std::string, AgentEntry> agents_;
};

// ---------------------------------------------------------------------------
// JSON views.

inline json to_json(const TraceRow& r) {
  return json{{"lap", r.lap},         {"car", r.car},         {"e_b", r.state.e_b},       {"e_f", r.state.e_f},
              {"m_car", r.state.m_car}, {"tc", static_cast<int>(r.state.tc)}, {"tw", r.state.tw},
              {"ta", r.state.ta},     {"b_cpd", r.state.b_cpd}, {"ps", static_cast<int>(r.ps)}, {"d_ef", r.d_ef},
              {"d_eb", r.d_eb},       {"t_lap", r.t_lap},     {"t_race", r.state.t_race}, {"t_gap", r.t_gap},
              {"dt_int", r.dt_int},   {"clipped", r.clipped}};
}

inline json to_json(const Observation& o) {
  return json{{"ego", o.ego.values}, {"opponent", o.opponent.values}};
}

inline json to_json(const Action& a) { return json{{"d_ef", a.d_ef}, {"d_eb", a.d_eb}, {"ps", a.ps}}; }

// ---------------------------------------------------------------------------
// Request parsing.

namespace detail {

inline double require_number(const json& body, const char* field) {
  if (!body.is_object() || !body.contains(field)) throw ValidationError(field, std::string("missing field '") + field + "'");
  const json& v = body.at(field);
  if (!v.is_number()) throw ValidationError(field, std::string("field '") + field + "' must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ValidationError(field, std::string("field '") + field + "' must be finite");
  return x;
}

inline std::string require_string(const json& body, const char* field) {
  if (!body.is_object() || !body.contains(field) || !body.at(field).is_string()) {
    throw ValidationError(field, std::string("field '") + field + "' must be a string");
  }
  return body.at(field).get<std::string>();
}

inline std::uint64_t optional_seed(const json& body) {
  if (!body.contains("seed")) return 0;
  if (!body.at("seed").is_number_unsigned()) throw ValidationError("seed", "field 'seed' must be a non-negative integer");
  return body.at("seed").get<std::uint64_t>();
}

template <std::size_t N>
std::array<double, N> require_vector(const json& body, const char* field) {
  if (!body.is_object() || !body.contains(field) || !body.at(field).is_array() || body.at(field).size() != N) {
    throw ValidationError(field, std::string("field '") + field + "' must be an array of " + std::to_string(N) + " numbers");
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    const json& v = body.at(field)[i];
    if (!v.is_number() || !std::isfinite(v.get<double>())) {
      throw ValidationError(field, std::string("field '") + field + "[" + std::to_string(i) + "]' must be a finite number");
    }
    out[i] = v.get<double>();
  }
  return out;
}

}  // namespace detail

/// Physical-unit action from a request body. Values outside the ranges are
/// clipped later by the environment, exactly as for a policy.
inline Action parse_action(const json& body) {
  if (!body.is_object()) throw ValidationError("body", "action must be a JSON object");
  Action a;
  a.d_ef = detail::require_number(body, "d_ef");
  a.d_eb = detail::require_number(body, "d_eb");
  a.ps = detail::require_number(body, "ps");
  return a;
}

// ---------------------------------------------------------------------------
// Recommendation: one forward pass plus a one-lap what-if of the ego car.

struct Recommendation {
  PolicyDecision decision;
  PitDecision pit = PitDecision::none;
  LapOutcome predicted;
};

inline Recommendation recommend(const Policy& p, const EgoObservation& ego, const OpponentObservation& opp,
                                const TrackConfig& track) {
  Recommendation r;
  r.decision = p.decide(ego, opp, track);
  const CarState s = car_state_from_observation(ego);
  // The opponent reports its own gap; ours is its negation.
  r.predicted = advance_car(s, r.decision.action, interaction_penalty(-opp[3], track), track);
  r.pit = r.predicted.ps;
  return r;
}

inline json to_json(const Recommendation& r) {
  return json{{"a_nom", r.decision.a_nom},
              {"delta_a", r.decision.delta_a},
              {"action", to_json(r.decision.action)},
              {"realized", to_json(r.predicted.realized)},
              {"pit", to_string(r.pit)},
              {"predicted", json{{"t_nom", r.predicted.t_nom},
                                 {"tire_penalty", r.predicted.tire_penalty},
                                 {"dt_int", r.predicted.dt_int},
                                 {"t_lap", r.predicted.t_lap}}}};
}

// ---------------------------------------------------------------------------
// Human-vs-agent duel.

class DuelSession {
 public:
  DuelSession(std::string id, std::string agent_id, std::shared_ptr<const Policy> agent, Side human, double human_gap,
              std::uint64_t seed, TrackConfig track, RewardConfig rc)
      : id_(std::move(id)),
        agent_id_(std::move(agent_id)),
        agent_(std::move(agent)),
        human_(human),
        seed_(seed),
        track_(std::move(track)),
        rc_(rc),
        state_(initial_race_state(track_, human == Side::car_1 ? human_gap : -human_gap)) {}

  const std::string& id() const { return id_; }
  bool done() const {
    std::lock_guard lk(mu_);
    return state_.k >= track_.n_laps;
  }

  /// Advance one lap with the human's action. Concurrent or out-of-turn submits are conflicts.
  json submit(const Action& human_action, std::optional<int> lap) {
    std::unique_lock submit_lock(submit_mu_, std::try_to_lock);
    if (!submit_lock.owns_lock()) throw ConflictError("duel " + id_ + ": another action is being processed");
    std::lock_guard lk(mu_);
    if (state_.k >= track_.n_laps) throw ConflictError("duel " + id_ + ": race is finished");
    if (lap && *lap != state_.k + 1) {
      throw ConflictError("duel " + id_ + ": lap " + std::to_string(*lap) + " is not pending (pending lap " +
                          std::to_string(state_.k + 1) + ")");
    }
    const Side agent_side = human_ == Side::car_1 ? Side::car_i : Side::car_1;
    const Observation ao = observe(state_, agent_side, track_);
    const Action agent_action = agent_->act(ao.ego, ao.opponent, track_);
    const Action& a1 = human_ == Side::car_1 ? human_action : agent_action;
    const Action& ai = human_ == Side::car_1 ? agent_action : human_action;
    const LapPair lp = advance_race(state_, a1, ai, track_);
    trace_.push_back(make_trace_row(state_.k, 1, lp.car_1, state_.duel.gap_1));
    trace_.push_back(make_trace_row(state_.k, 2, lp.car_i, state_.duel.gap_i));
    actions_.push_back(human_action);

    json frame{{"type", "lap"},
               {"session", id_},
               {"lap", state_.k},
               {"rows", {to_json(trace_[trace_.size() - 2]), to_json(trace_.back())}},
               {"gap", human_gap()},
               {"done", state_.k >= track_.n_laps},
               {"observation", to_json(observe(state_, human_, track_))}};
    if (state_.k >= track_.n_laps) frame["result"] = result_json();
    frames_.push_back(frame.dump());
    cv_.notify_all();
    return frame;
  }

  json view() const {
    std::lock_guard lk(mu_);
    json j{{"id", id_},
           {"agent", agent_id_},
           {"human_side", human_ == Side::car_1 ? 1 : 2},
           {"seed", seed_},
           {"lap", state_.k},
           {"pending_lap", state_.k < track_.n_laps ? json(state_.k + 1) : json(nullptr)},
           {"awaiting_action", state_.k < track_.n_laps},
           {"gap", human_gap()},
           {"done", state_.k >= track_.n_laps},
           {"observation", to_json(observe(state_, human_, track_))}};
    json hist = json::array();
    for (const auto& a : actions_) hist.push_back(to_json(a));
    j["actions"] = hist;
    if (state_.k >= track_.n_laps) j["result"] = result_json();
    return j;
  }

  std::string trace() const {
    std::lock_guard lk(mu_);
    return trace_csv(trace_);
  }

  /// Frames from `cursor` on; waits up to `timeout` when none are new yet.
  std::vector<std::string> frames_since(std::size_t cursor, std::chrono::milliseconds timeout) const {
    std::unique_lock lk(mu_);
    cv_.wait_for(lk, timeout, [&] { return frames_.size() > cursor; });
    return {frames_.begin() + static_cast<std::ptrdiff_t>(std::min(cursor, frames_.size())), frames_.end()};
  }

 private:
  double human_gap() const { return human_ == Side::car_1 ? state_.duel.gap_1 : state_.duel.gap_i; }

  json result_json() const {
    const bool h1 = human_ == Side::car_1;
    const CarState& hc = h1 ? state_.car_1 : state_.car_i;
    const CarState& ac = h1 ? state_.car_i : state_.car_1;
    const Winner w = decide_winner(human_gap(), hc.b_cpd, ac.b_cpd);
    return json{{"winner", w == Winner::a ? "human" : (w == Winner::b ? "agent" : "draw")},
                {"final_gap", human_gap()},
                {"race_time_human", hc.t_race},
                {"race_time_agent", ac.t_race},
                {"b_cpd_human", hc.b_cpd},
                {"b_cpd_agent", ac.b_cpd}};
  }

  std::string id_;
  std::string agent_id_;
  std::shared_ptr<const Policy> agent_;
  Side human_;
  std::uint64_t seed_;
  TrackConfig track_;
  RewardConfig rc_;
  RaceState state_;
  std::vector<TraceRow> trace_;
  std::vector<Action> actions_;
  std::vector<std::string> frames_;
  mutable std::mutex mu_;
  std::mutex submit_mu_;
  mutable std::condition_variable cv_;
};

// ---------------------------------------------------------------------------

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

inline Response json_response(const json& j, int status = 200) { return Response{status, "application/json", j.dump()}; }

inline Response error_response(int status, const std::string& kind, const std::string& message,
                               std::optional<std::string> field = std::nullopt) {
  json j{{"error", kind}, {"message", message}};
  if (field) j["field"] = *field;
  return json_response(j, status);
}

class Console {
 public:
  Console(AgentRegistry agents, TrackConfig track, RewardConfig rc = {})
      : agents_(std::move(agents)), track_(std::move(track)), rc_(rc) {}

  const AgentRegistry& agents() const { return agents_; }

  std::shared_ptr<DuelSession> session(const std::string& id) const {
    std::lock_guard lk(mu_);
    const auto it = duels_.find(id);
    if (it == duels_.end()) throw NotFoundError("unknown duel '" + id + "'");
    return it->second;
  }

  /// Routes one request. Errors map to status codes; nothing escapes.
  Response handle(const std::string& method, const std::string& target, const std::string& body) {
    try {
      return route(method, target, body);
    } catch (const NotFoundError& e) {
      return error_response(404, "not_found", e.what());
    } catch (const ConflictError& e) {
      return error_response(409, "conflict", e.what());
    } catch (const ValidationError& e) {
      return error_response(422, "validation", e.what(), e.field());
    } catch (const ConfigError& e) {
      return error_response(400, "config", e.what());
    } catch (const std::exception& e) {
      return error_response(500, "internal", e.what());
    }
  }

  json list_agents() const {
    json out = json::array();
    const EloTable table = leaderboard_table();
    for (const auto& [id, e] : agents_.all()) {
      out.push_back({{"id", id},
                     {"file", e.path.filename().string()},
                     {"metadata", e.policy->metadata},
                     {"elo", table.contains(id) ? table.rating(id) : e.policy->elo},
                     {"backbone_hash", e.policy->backbone_hash()},
                     {"interaction_hash", e.policy->interaction_hash()},
                     {"track_hash", e.policy->track_hash()}});
    }
    return out;
  }

  /// Persisted arena table if one sits next to the agents, else everyone at the initial rating.
  EloTable leaderboard_table() const {
    const auto state = agents_.dir() / kArenaStateFile;
    if (!agents_.dir().empty() && std::filesystem::exists(state)) return EloTable::load(state);
    EloTable t;
    for (const auto& [id, _] : agents_.all()) t.add_agent(id);
    return t;
  }

 private:
  static std::vector<std::string> split_path(const std::string& target) {
    std::string path = target.substr(0, target.find('?'));
    std::vector<std::string> parts;
    std::size_t i = 0;
    while (i < path.size()) {
      const std::size_t j = path.find('/', i);
      const std::string part = path.substr(i, j == std::string::npos ? std::string::npos : j - i);
      if (!part.empty()) parts.push_back(part);
      if (j == std::string::npos) break;
      i = j + 1;
    }
    return parts;
  }

  static json parse_body(const std::string& body) {
    if (body.empty()) return json::object();
    try {
      return json::parse(body);
    } catch (const json::exception& e) {
      throw ValidationError("body", std::string("malformed JSON: ") + e.what());
    }
  }

  Response route(const std::string& method, const std::string& target, const std::string& body) {
    const auto p = split_path(target);
    const bool get = method == "GET";
    const bool post = method == "POST";
    if (get && p.size() == 1 && p[0] == "agents") return json_response(list_agents());
    if (get && p.size() == 2 && p[0] == "arena" && p[1] == "leaderboard") return json_response(leaderboard_table().to_json());
    if (p.size() >= 1 && p[0] == "matches") {
      if (post && p.size() == 1) return create_match(parse_body(body));
      if (get && p.size() == 2) return json_response(to_json(match(p[1])));
      if (get && p.size() == 3 && p[2] == "trace") return Response{200, "text/csv", trace_csv(match(p[1]).trace)};
    }
    if (p.size() >= 1 && p[0] == "duels") {
      if (post && p.size() == 1) return create_duel(parse_body(body));
      if (get && p.size() == 2) return json_response(session(p[1])->view());
      if (get && p.size() == 3 && p[2] == "trace") return Response{200, "text/csv", session(p[1])->trace()};
      if (post && p.size() == 3 && p[2] == "action") {
        const json b = parse_body(body);
        const auto s = session(p[1]);
        std::optional<int> lap;
        if (b.is_object() && b.contains("lap")) {
          if (!b.at("lap").is_number_integer()) throw ValidationError("lap", "field 'lap' must be an integer");
          lap = b.at("lap").get<int>();
        }
        return json_response(s->submit(parse_action(b), lap));
      }
    }
    if (post && p.size() == 1 && p[0] == "recommend") {
      const json b = parse_body(body);
      const auto& agent = agents_.get(detail::require_string(b, "agent"));
      const EgoObservation ego{detail::require_vector<kEgoDim>(b, "ego")};
      const OpponentObservation opp{detail::require_vector<kOpponentDim>(b, "opponent")};
      return json_response(to_json(recommend(*agent.policy, ego, opp, track_)));
    }
    throw NotFoundError("no route for " + method + " " + target);
  }

  Response create_match(const json& b) {
    const auto& a = agents_.get(detail::require_string(b, "agentA"));
    const auto& c = agents_.get(detail::require_string(b, "agentB"));
    const double gap = b.contains("gap") ? detail::require_number(b, "gap") : 0.5;
    const std::uint64_t seed = detail::optional_seed(b);
    MatchResult m = play_match(policy_contestant(a.id, a.policy, track_), policy_contestant(c.id, c.policy, track_), seed,
                               gap, track_, rc_);
    std::lock_guard lk(mu_);
    const std::string id = "m" + std::to_string(++match_counter_);
    matches_.emplace(id, std::move(m));
    return json_response(json{{"id", id}}, 201);
  }

  const MatchResult& match(const std::string& id) const {
    std::lock_guard lk(mu_);
    const auto it = matches_.find(id);
    if (it == matches_.end()) throw NotFoundError("unknown match '" + id + "'");
    return it->second;
  }

  Response create_duel(const json& b) {
    const auto& agent = agents_.get(detail::require_string(b, "agent"));
    Side side = Side::car_1;
    if (b.contains("human_side")) {
      const json& hs = b.at("human_side");
      if (!hs.is_number_integer() || (hs.get<int>() != 1 && hs.get<int>() != 2)) {
        throw ValidationError("human_side", "field 'human_side' must be 1 or 2");
      }
      side = hs.get<int>() == 1 ? Side::car_1 : Side::car_i;
    }
    const std::uint64_t seed = detail::optional_seed(b);
    double gap = 0.0;
    if (b.contains("gap")) {
      gap = detail::require_number(b, "gap");
    } else {
      std::mt19937_64 rng(seed);
      gap = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
    }
    std::shared_ptr<DuelSession> s;
    {
      std::lock_guard lk(mu_);
      const std::string id = "d" + std::to_string(++duel_counter_);
      s = std::make_shared<DuelSession>(id, agent.id, agent.policy, side, gap, seed, track_, rc_);
      duels_.emplace(id, s);
    }
    return json_response(s->view(), 201);
  }

  AgentRegistry agents_;
  TrackConfig track_;
  RewardConfig rc_;
  mutable std::mutex mu_;
  std::map<std::string, MatchResult> matches_;
  std::map<std::string, std::shared_ptr<DuelSession>> duels_;
  std::uint64_t match_counter_ = 0;
  std::uint64_t duel_counter_ = 0;
};

}  // namespace gridwall

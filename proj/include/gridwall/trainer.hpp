#pragma once

// Policy production: single-car pretraining of the backbone, then self-play
// training of the interaction module against a pool of frozen opponents.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "gridwall/arena.hpp"
#include "gridwall/checkpoint.hpp"
#include "gridwall/learner.hpp"
#include "gridwall/policy.hpp"

namespace gridwall {

struct TrainConfig {
  long env_steps = 150'000;        // per self-play iteration
  long pretrain_steps = 60'000;
  long pretrain_eval_every = 2'000;
  std::size_t replay_capacity = 200'000;
  std::size_t batch = 256;
  float lr_actor = 3e-4f;
  float lr_critic = 3e-4f;
  float lr_alpha = 3e-4f;
  float tau = 5e-3f;
  float target_entropy = -3.0f;
  float initial_alpha = 0.1f;
  float log_std_shift = 0.0f;     // backbone pretraining
  float interaction_log_std_shift = 0.0f;
  float reward_scale = 1.0f;
  long warmup_steps = 5'000;     // pretraining only: uniform random actions before the actor takes over
  long update_after = 1'000;     // first gradient step
  int opponent_resample_episodes = 20;
  double p_latest = 0.5;
  int iterations = 4;
  long eval_every = 15'000;      // evaluation and snapshot cadence, in env steps
  int hidden = 64;
  std::uint64_t seed = 1;
  Range init_gap{-2.0, 2.0};
  double eval_gap = 0.5;
  int mini_arena_matches = 50;   // per agent pairing
  float divergence_threshold = 1e6f;
  long divergence_window = 2'000;
  std::string trainer = "sac";   // "sac", or "cem" for the gradient-free fallback
  int cem_population = 16;
  int cem_elites = 4;
  float cem_sigma = 0.05f;       // initial parameter noise

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(std::string("invalid train config: ") + what);
    };
    require(env_steps > 0 && pretrain_steps > 0 && replay_capacity > 0 && batch > 0 && iterations > 0 &&
                eval_every > 0 && pretrain_eval_every > 0,
            "budgets must be positive");
    require(p_latest >= 0.0 && p_latest <= 1.0, "p_latest must be a probability");
    require(opponent_resample_episodes > 0 && mini_arena_matches > 0, "counts must be positive");
    require(warmup_steps >= 0 && update_after >= 0, "warm-up lengths must be non-negative");
    require(trainer == "sac" || trainer == "cem", "trainer must be \"sac\" or \"cem\"");
    require(cem_population > 0 && cem_elites > 0 && cem_elites <= cem_population && cem_sigma > 0.0f,
            "cem needs 0 < elites <= population and a positive sigma");
  }

  SacConfig sac() const {
    SacConfig s;
    s.hidden = hidden;
    s.batch = batch;
    s.lr_actor = lr_actor;
    s.lr_critic = lr_critic;
    s.lr_alpha = lr_alpha;
    s.tau = tau;
    s.target_entropy = target_entropy;
    s.initial_alpha = initial_alpha;
    s.gamma = 1.0f;
    s.log_std_shift = log_std_shift;
    return s;
  }
};

inline json to_json(const TrainConfig& c) {
  return json{{"env_steps", c.env_steps},
              {"pretrain_steps", c.pretrain_steps},
              {"pretrain_eval_every", c.pretrain_eval_every},
              {"replay_capacity", c.replay_capacity},
              {"batch", c.batch},
              {"lr_actor", c.lr_actor},
              {"lr_critic", c.lr_critic},
              {"lr_alpha", c.lr_alpha},
              {"tau", c.tau},
              {"target_entropy", c.target_entropy},
              {"initial_alpha", c.initial_alpha},
              {"log_std_shift", c.log_std_shift},
              {"interaction_log_std_shift", c.interaction_log_std_shift},
              {"reward_scale", c.reward_scale},
              {"warmup_steps", c.warmup_steps},
              {"update_after", c.update_after},
              {"opponent_resample_episodes", c.opponent_resample_episodes},
              {"p_latest", c.p_latest},
              {"iterations", c.iterations},
              {"eval_every", c.eval_every},
              {"hidden", c.hidden},
              {"seed", c.seed},
              {"init_gap", {c.init_gap.lo, c.init_gap.hi}},
              {"eval_gap", c.eval_gap},
              {"mini_arena_matches", c.mini_arena_matches},
              {"divergence_threshold", c.divergence_threshold},
              {"divergence_window", c.divergence_window},
              {"trainer", c.trainer},
              {"cem_population", c.cem_population},
              {"cem_elites", c.cem_elites},
              {"cem_sigma", c.cem_sigma}};
}

inline TrainConfig train_config_from_json(const json& j) {
  using detail::read_opt;
  const std::string w = "train";
  detail::reject_unknown(j,
                         {"env_steps", "pretrain_steps", "pretrain_eval_every", "replay_capacity", "batch", "lr_actor", "lr_critic", "lr_alpha", "tau",
                          "target_entropy", "initial_alpha", "log_std_shift", "interaction_log_std_shift", "reward_scale", "warmup_steps",
                          "update_after", "opponent_resample_episodes", "p_latest", "iterations", "eval_every",
                          "hidden", "seed", "init_gap", "eval_gap", "mini_arena_matches", "divergence_threshold",
                          "divergence_window", "trainer", "cem_population", "cem_elites", "cem_sigma"},
                         w);
  TrainConfig c;
  read_opt(j, "env_steps", c.env_steps, w);
  read_opt(j, "pretrain_steps", c.pretrain_steps, w);
  read_opt(j, "pretrain_eval_every", c.pretrain_eval_every, w);
  read_opt(j, "replay_capacity", c.replay_capacity, w);
  read_opt(j, "batch", c.batch, w);
  read_opt(j, "lr_actor", c.lr_actor, w);
  read_opt(j, "lr_critic", c.lr_critic, w);
  read_opt(j, "lr_alpha", c.lr_alpha, w);
  read_opt(j, "tau", c.tau, w);
  read_opt(j, "target_entropy", c.target_entropy, w);
  read_opt(j, "initial_alpha", c.initial_alpha, w);
  read_opt(j, "log_std_shift", c.log_std_shift, w);
  read_opt(j, "interaction_log_std_shift", c.interaction_log_std_shift, w);
  read_opt(j, "reward_scale", c.reward_scale, w);
  read_opt(j, "warmup_steps", c.warmup_steps, w);
  read_opt(j, "update_after", c.update_after, w);
  read_opt(j, "opponent_resample_episodes", c.opponent_resample_episodes, w);
  read_opt(j, "p_latest", c.p_latest, w);
  read_opt(j, "iterations", c.iterations, w);
  read_opt(j, "eval_every", c.eval_every, w);
  read_opt(j, "hidden", c.hidden, w);
  read_opt(j, "seed", c.seed, w);
  detail::read_range(j, "init_gap", c.init_gap, w);
  read_opt(j, "eval_gap", c.eval_gap, w);
  read_opt(j, "mini_arena_matches", c.mini_arena_matches, w);
  read_opt(j, "divergence_threshold", c.divergence_threshold, w);
  read_opt(j, "divergence_window", c.divergence_window, w);
  read_opt(j, "trainer", c.trainer, w);
  read_opt(j, "cem_population", c.cem_population, w);
  read_opt(j, "cem_elites", c.cem_elites, w);
  read_opt(j, "cem_sigma", c.cem_sigma, w);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Training log: one CSV row per finished episode.

struct EpisodeLog {
  long step = 0;
  long episode = 0;
  std::string opponent;
  double ret = 0.0;
  bool win = false;
  float critic_loss = 0;
  float actor_loss = 0;
  float temperature = 0;
};

inline constexpr const char* kTrainLogHeader = "step,episode,opponent,return,win,critic_loss,actor_loss,temperature";

inline void write_log_row(std::ostream& os, const EpisodeLog& r) {
  os << r.step << ',' << r.episode << ',' << r.opponent << ',' << format_g9(r.ret) << ',' << (r.win ? 1 : 0) << ','
     << format_g9(r.critic_loss) << ',' << format_g9(r.actor_loss) << ',' << format_g9(r.temperature) << '\n';
}

/// Optional sink for episode rows; training works without one.
using LogSink = std::function<void(const EpisodeLog&)>;

inline LogSink csv_log_sink(std::shared_ptr<std::ostream> os) {
  *os << kTrainLogHeader << '\n';
  return [os](const EpisodeLog& r) {
    write_log_row(*os, r);
    os->flush();
  };
}

// ---------------------------------------------------------------------------
// Shared helpers.

namespace detail {

inline void normalized_ego(const Policy& p, const EgoObservation& o, float* out) {
  p.ego_norm().normalize(std::span(o.values), out);
}

inline void normalized_full(const Policy& p, const Observation& o, float* out) {
  p.ego_norm().normalize(std::span(o.ego.values), out);
  p.opp_norm().normalize(std::span(o.opponent.values), out + kEgoDim);
}

inline NormalizedAction widen(const std::array<float, sac::kAct>& a) {
  return {static_cast<double>(a[0]), static_cast<double>(a[1]), static_cast<double>(a[2])};
}

inline void check_finite(const UpdateStats& st, long step, const std::string& phase) {
  if (std::isfinite(st.critic_loss) && std::isfinite(st.actor_loss) && std::isfinite(st.alpha)) return;
  const json diag{{"phase", phase},         {"step", step},         {"critic_loss", st.critic_loss},
                  {"actor_loss", st.actor_loss}, {"alpha", st.alpha}, {"mean_log_prob", st.mean_log_prob}};
  throw TrainingError(phase + ": non-finite loss at step " + std::to_string(step), diag.dump());
}

}  // namespace detail

/// Deterministic single-car rollout of the backbone alone.
struct SoloRollout {
  double race_time = 0.0;
  double ret = 0.0;
  bool b_cpd = false;
  std::vector<TraceRow> trace;
};

inline SoloRollout rollout_solo(const Driver& driver, const TrackConfig& track, const RewardConfig& rc) {
  Episode env(track, rc);
  env.record_trace(true);
  Observation obs = env.reset(0);
  SoloRollout out;
  while (!env.done()) {
    const StepResult r = env.step(driver(obs.ego, obs.opponent));
    out.ret += r.reward;
    obs = r.observation;
  }
  out.race_time = env.state().car_1.t_race;
  out.b_cpd = env.state().car_1.b_cpd;
  out.trace = env.trace();
  return out;
}

// ---------------------------------------------------------------------------
// Backbone pretraining: one car, no wake, no opponent.

struct PretrainPoint {
  long step = 0;
  double race_time = 0.0;
  double ret = 0.0;
  bool b_cpd = false;
};

struct PretrainResult {
  Policy policy;
  std::vector<PretrainPoint> evaluations;
  PretrainPoint best;
};

inline PretrainResult pretrain_backbone(const TrainConfig& cfg, const TrackConfig& track, const RewardConfig& rc,
                                        std::uint64_t seed, const LogSink& log = {}) {
  cfg.validate();
  Policy policy = Policy::create(track, seed, cfg.hidden);
  SacLearner learner(policy.backbone(), static_cast<int>(kEgoDim), cfg.sac(), seed ^ 0x9e3779b97f4a7c15ull);
  ReplayBuffer replay(static_cast<int>(kEgoDim), cfg.replay_capacity);
  Episode env(track, rc);

  PretrainResult result;
  result.best.ret = -std::numeric_limits<double>::infinity();
  Mlp<float> best_actor = learner.actor();

  auto evaluate = [&](long step) {
    policy.backbone() = learner.actor();
    const auto r = rollout_solo(backbone_driver(std::make_shared<const Policy>(policy), track), track, rc);
    PretrainPoint pt{step, r.race_time, r.ret, r.b_cpd};
    result.evaluations.push_back(pt);
    if (pt.ret > result.best.ret) {
      result.best = pt;
      best_actor = learner.actor();
    }
  };

  std::array<float, kEgoDim> obs{}, next{};
  Observation o = env.reset(seed);
  detail::normalized_ego(policy, o.ego, obs.data());
  long episode = 0;
  double ep_return = 0.0;
  UpdateStats last{};
  for (long step = 1; step <= cfg.pretrain_steps; ++step) {
    const auto a = step <= cfg.warmup_steps ? learner.random_action() : learner.act(obs, true);
    const StepResult r = env.step(compose(detail::widen(a), NormalizedAction{}, track));
    detail::normalized_ego(policy, r.observation.ego, next.data());
    replay.add(obs, a, static_cast<float>(r.reward) * cfg.reward_scale, next, r.done,
               TransitionTag{episode, env.state().k - 1});
    ep_return += r.reward;
    obs = next;
    if (step >= cfg.update_after) {
      last = learner.update(replay);
      detail::check_finite(last, step, "pretrain");
    }
    if (r.done) {
      if (log) log(EpisodeLog{step, episode, "none", ep_return, false, last.critic_loss, last.actor_loss, last.alpha});
      ++episode;
      ep_return = 0.0;
      o = env.reset(seed + static_cast<std::uint64_t>(episode));
      detail::normalized_ego(policy, o.ego, obs.data());
    }
    if (step % cfg.pretrain_eval_every == 0 || step == cfg.pretrain_steps) evaluate(step);
  }
  policy.backbone() = best_actor;
  policy.interaction().zero_output_layer();
  policy.metadata = json{{"stage", "pretrain"}, {"seed", seed}, {"env_steps", cfg.pretrain_steps},
                         {"best_step", result.best.step}, {"race_time", result.best.race_time}};
  result.policy = std::move(policy);
  return result;
}

// ---------------------------------------------------------------------------
// Self-play: pool of frozen opponents, interaction-module training, mini-arena.

struct PoolEntry {
  std::string id;
  std::shared_ptr<const Policy> policy;
  double elo = kInitialRating;
  bool backbone_only = false;  // drives with a_nom alone
};

struct OpponentPool {
  std::vector<PoolEntry> entries;
  int iteration = 1;

  Driver driver(const PoolEntry& e, const TrackConfig& track) const {
    return e.backbone_only ? backbone_driver(e.policy, track) : policy_driver(e.policy, track);
  }
};

/// The iteration-1 pool: just the pretrained policy driving on its backbone.
inline OpponentPool initial_pool(std::shared_ptr<const Policy> pretrained) {
  OpponentPool pool;
  pool.entries.push_back(PoolEntry{"backbone", std::move(pretrained), kInitialRating, true});
  return pool;
}

/// Latest entry with probability p_latest, otherwise uniform over the whole pool.
template <typename Rng>
const PoolEntry& sample_opponent(const OpponentPool& pool, double p_latest, Rng& rng) {
  if (pool.entries.empty()) throw ContractError("sample_opponent: pool is empty");
  if (std::bernoulli_distribution(p_latest)(rng)) return pool.entries.back();
  return pool.entries[std::uniform_int_distribution<std::size_t>(0, pool.entries.size() - 1)(rng)];
}

struct Snapshot {
  long step = 0;
  std::string id;
  std::shared_ptr<const Policy> policy;
  double eval_win_rate = 0.0;  // vs the backbone at +-eval_gap
};

struct InteractionResult {
  Policy policy;
  std::vector<Snapshot> snapshots;
  bool diverged = false;
  long steps = 0;
};

/// Deterministic head-to-head at +gap and -gap; share of races won by `p`.
inline double win_rate_vs_backbone(std::shared_ptr<const Policy> p, std::shared_ptr<const Policy> backbone, double gap,
                                   const TrackConfig& track, const RewardConfig& rc) {
  const Contestant a = policy_contestant("candidate", std::move(p), track);
  const Contestant b{"backbone", backbone->track_hash(), backbone_driver(std::move(backbone), track)};
  double score = 0.0;
  for (double g : {gap, -gap}) score += play_match(a, b, 0, g, track, rc).score_a();
  return score / 2.0;
}

namespace detail {

inline Snapshot make_snapshot(const Policy& start, const Mlp<float>& interaction, std::shared_ptr<const Policy> backbone,
                              int iteration, long step, std::uint64_t seed, const TrainConfig& cfg, const TrackConfig& track,
                              const RewardConfig& rc) {
  Policy p = start;
  p.interaction() = interaction;
  p.metadata = json{{"stage", "selfplay"}, {"iteration", iteration}, {"step", step}, {"seed", seed}, {"trainer", cfg.trainer}};
  auto shared = std::make_shared<const Policy>(std::move(p));
  const double wr = win_rate_vs_backbone(shared, std::move(backbone), cfg.eval_gap, track, rc);
  return Snapshot{step, "it" + std::to_string(iteration) + "_s" + std::to_string(step), shared, wr};
}

}  // namespace detail

/// Trains only the interaction module; the backbone is read, never written.
inline InteractionResult train_interaction(const Policy& start, const OpponentPool& pool, const TrainConfig& cfg,
                                           const TrackConfig& track, const RewardConfig& rc, std::uint64_t seed,
                                           const LogSink& log = {}) {
  cfg.validate();
  if (start.track_hash() != config_hash(track)) throw ConfigError("train_interaction: policy built for another track");
  const std::string backbone_hash = start.backbone_hash();
  auto frozen = std::make_shared<const Policy>(start);

  SacConfig sc = cfg.sac();
  sc.log_std_shift = cfg.interaction_log_std_shift;
  sc.action_bound = static_cast<float>(start.delta());
  SacLearner learner(start.interaction(), static_cast<int>(kObservationDim), sc, seed ^ 0x5851f42d4c957f2dull);
  ReplayBuffer replay(static_cast<int>(kObservationDim), cfg.replay_capacity);
  std::mt19937_64 pool_rng(seed);

  InteractionResult result;
  auto snapshot = [&](long step) {
    result.snapshots.push_back(detail::make_snapshot(start, learner.actor(), frozen, pool.iteration, step, seed, cfg, track, rc));
  };

  const PoolEntry* opponent = &sample_opponent(pool, cfg.p_latest, pool_rng);
  Episode env(track, rc, pool.driver(*opponent, track), cfg.init_gap);
  std::array<float, kObservationDim> obs{}, next{};
  Observation o = env.reset(seed);
  detail::normalized_full(start, o, obs.data());
  long episode = 0;
  long over_threshold = 0;
  double ep_return = 0.0;
  UpdateStats last{};
  for (long step = 1; step <= cfg.env_steps; ++step) {
    const NormalizedAction a_nom = start.backbone_forward(o.ego);
    const auto delta = learner.act(obs, true);
    const StepResult r = env.step(compose(a_nom, detail::widen(delta), track));
    detail::normalized_full(start, r.observation, next.data());
    replay.add(obs, delta, static_cast<float>(r.reward) * cfg.reward_scale, next, r.done,
               TransitionTag{episode, env.state().k - 1});
    ep_return += r.reward;
    obs = next;
    o = r.observation;
    result.steps = step;
    if (step >= cfg.update_after) {
      last = learner.update(replay);
      detail::check_finite(last, step, "selfplay");
      over_threshold = last.critic_loss > cfg.divergence_threshold ? over_threshold + 1 : 0;
    }
    if (r.done) {
      const RaceState& s = env.state();
      const bool win = decide_winner(s.duel.gap_1, s.car_1.b_cpd, s.car_i.b_cpd) == Winner::a;
      if (log) log(EpisodeLog{step, episode, opponent->id, ep_return, win, last.critic_loss, last.actor_loss, last.alpha});
      ++episode;
      ep_return = 0.0;
      if (episode % cfg.opponent_resample_episodes == 0) {
        opponent = &sample_opponent(pool, cfg.p_latest, pool_rng);
        env.set_opponent(pool.driver(*opponent, track));
      }
      o = env.reset(seed + static_cast<std::uint64_t>(episode));
      detail::normalized_full(start, o, obs.data());
    }
    if (over_threshold >= cfg.divergence_window) {
      result.diverged = true;
      break;
    }
    if (step % cfg.eval_every == 0) snapshot(step);
  }
  if (result.snapshots.empty() || result.snapshots.back().step != result.steps) snapshot(result.steps);

  result.policy = start;
  result.policy.interaction() = learner.actor();
  result.policy.metadata = result.snapshots.back().policy->metadata;
  if (result.policy.backbone_hash() != backbone_hash) throw ContractError("train_interaction: backbone changed");
  return result;
}

/// Gradient-free fallback with the same contract: cross-entropy search over the
/// interaction parameters, candidates scored on shared +-gap races per generation.
inline InteractionResult train_interaction_cem(const Policy& start, const OpponentPool& pool, const TrainConfig& cfg,
                                               const TrackConfig& track, const RewardConfig& rc, std::uint64_t seed,
                                               const LogSink& log = {}) {
  cfg.validate();
  if (start.track_hash() != config_hash(track)) throw ConfigError("train_interaction: policy built for another track");
  const std::string backbone_hash = start.backbone_hash();
  auto frozen = std::make_shared<const Policy>(start);

  std::vector<float> mean = start.interaction().flat();
  std::vector<float> sigma(mean.size(), cfg.cem_sigma);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise;
  Mlp<float> net = start.interaction();

  InteractionResult result;
  long step = 0, episode = 0, last_resample = 0, next_eval = cfg.eval_every;
  const PoolEntry* opponent = &sample_opponent(pool, cfg.p_latest, rng);
  while (step < cfg.env_steps) {
    const double g = std::uniform_real_distribution<double>(0.0, std::max(std::abs(cfg.init_gap.lo), std::abs(cfg.init_gap.hi)))(rng);
    const std::uint64_t race_seed = rng();
    std::vector<std::pair<double, std::vector<float>>> scored;
    for (int c = 0; c < cfg.cem_population; ++c) {
      std::vector<float> theta(mean.size());
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = mean[i] + sigma[i] * noise(rng);
      net.assign_flat(theta);
      Policy cand = start;
      cand.interaction() = net;
      double fitness = 0.0;
      for (double gap : {g, -g}) {
        Episode env(track, rc, pool.driver(*opponent, track));
        Observation o = env.reset(race_seed, gap);
        double ret = 0.0;
        while (!env.done()) {
          const StepResult r = env.step(cand.act(o.ego, o.opponent, track));
          ret += r.reward;
          o = r.observation;
          ++step;
        }
        const RaceState& s = env.state();
        const bool win = decide_winner(s.duel.gap_1, s.car_1.b_cpd, s.car_i.b_cpd) == Winner::a;
        if (log) log(EpisodeLog{step, episode, opponent->id, ret, win, 0.0, 0.0, sigma.empty() ? 0.0f : sigma[0]});
        ++episode;
        fitness += ret;
      }
      if (!std::isfinite(fitness)) {
        throw TrainingError("selfplay (cem): non-finite return at step " + std::to_string(step),
                            json{{"phase", "selfplay-cem"}, {"step", step}}.dump());
      }
      scored.emplace_back(fitness, std::move(theta));
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; i < mean.size(); ++i) {
      double m = 0.0, v = 0.0;
      for (int e = 0; e < cfg.cem_elites; ++e) m += scored[e].second[i];
      m /= cfg.cem_elites;
      for (int e = 0; e < cfg.cem_elites; ++e) v += (scored[e].second[i] - m) * (scored[e].second[i] - m);
      mean[i] = static_cast<float>(m);
      sigma[i] = static_cast<float>(std::sqrt(v / cfg.cem_elites)) + 1e-3f * cfg.cem_sigma;  // floor keeps search alive
    }
    // Opponents change only between generations so every candidate faces the same one.
    if (episode - last_resample >= cfg.opponent_resample_episodes) {
      opponent = &sample_opponent(pool, cfg.p_latest, rng);
      last_resample = episode;
    }
    net.assign_flat(mean);
    result.steps = step;
    while (step >= next_eval) {
      result.snapshots.push_back(detail::make_snapshot(start, net, frozen, pool.iteration, step, seed, cfg, track, rc));
      next_eval += cfg.eval_every;
    }
  }
  if (result.snapshots.empty() || result.snapshots.back().step != result.steps) {
    result.snapshots.push_back(detail::make_snapshot(start, net, frozen, pool.iteration, result.steps, seed, cfg, track, rc));
  }
  result.policy = start;
  result.policy.interaction() = net;
  result.policy.metadata = result.snapshots.back().policy->metadata;
  if (result.policy.backbone_hash() != backbone_hash) throw ContractError("train_interaction: backbone changed");
  return result;
}

struct IterationReport {
  int iteration = 0;
  std::string best_id;
  double best_elo = 0.0;
  double best_win_rate = 0.0;  // vs the backbone at +-eval_gap
  bool diverged = false;
  bool below_floor = false;    // best scored under 40% against the pool in the mini-arena
  std::vector<std::pair<std::string, double>> ranking;
};

/// Elo-ranks the snapshots of one iteration together with the pool.
inline EloTable mini_arena(const std::vector<Snapshot>& snapshots, const OpponentPool& pool, const TrainConfig& cfg,
                           const TrackConfig& track, const RewardConfig& rc, std::uint64_t seed) {
  std::vector<Contestant> agents;
  for (const auto& e : pool.entries) agents.push_back(Contestant{e.id, e.policy->track_hash(), pool.driver(e, track)});
  for (const auto& s : snapshots) agents.push_back(policy_contestant(s.id, s.policy, track));
  ArenaConfig ac;
  ac.rounds = std::max(1, cfg.mini_arena_matches / 2);  // two matches per pairing per round
  ac.epsilon = 0.0;
  ac.gaps = uniform_gap(cfg.init_gap);
  ac.seed = seed;
  return run_arena(agents, ac, track, rc);
}

/// The loop of pool -> train -> mini-arena -> append best.
inline OpponentPool self_play(const Policy& pretrained, const TrainConfig& cfg, const TrackConfig& track,
                              const RewardConfig& rc, std::uint64_t seed, const LogSink& log = {},
                              std::vector<IterationReport>* reports = nullptr, OpponentPool pool = {}) {
  cfg.validate();
  auto backbone = std::make_shared<const Policy>(pretrained);
  if (pool.entries.empty()) pool = initial_pool(backbone);
  Policy current = pool.entries.back().backbone_only ? pretrained : *pool.entries.back().policy;
  for (int it = 0; it < cfg.iterations; ++it) {
    const std::uint64_t it_seed = mix_seed(seed + static_cast<std::uint64_t>(pool.iteration));
    InteractionResult trained = cfg.trainer == "cem" ? train_interaction_cem(current, pool, cfg, track, rc, it_seed, log)
                                                     : train_interaction(current, pool, cfg, track, rc, it_seed, log);
    const EloTable table = mini_arena(trained.snapshots, pool, cfg, track, rc, it_seed);

    const Snapshot* best = nullptr;
    for (const auto& [id, rating] : table.ranking()) {
      auto it_snap = std::find_if(trained.snapshots.begin(), trained.snapshots.end(),
                                  [&](const Snapshot& s) { return s.id == id; });
      if (it_snap != trained.snapshots.end()) {
        best = &*it_snap;
        break;
      }
    }
    Policy chosen = *best->policy;
    chosen.elo = table.rating(best->id);
    chosen.metadata["elo"] = chosen.elo;
    chosen.metadata["eval_win_rate"] = best->eval_win_rate;

    int pool_games = 0;
    double pool_score = 0.0;
    for (const auto& h : table.history()) {
      const bool a_pool = std::any_of(pool.entries.begin(), pool.entries.end(), [&](const PoolEntry& e) { return e.id == h.a; });
      const bool b_pool = std::any_of(pool.entries.begin(), pool.entries.end(), [&](const PoolEntry& e) { return e.id == h.b; });
      if (h.a == best->id && b_pool) pool_score += h.score_a, ++pool_games;
      if (h.b == best->id && a_pool) pool_score += 1.0 - h.score_a, ++pool_games;
    }
    for (auto& e : pool.entries) e.elo = table.rating(e.id);

    if (reports) {
      reports->push_back(IterationReport{pool.iteration, best->id, chosen.elo, best->eval_win_rate, trained.diverged,
                                         pool_games > 0 && pool_score / pool_games < 0.4, table.ranking()});
    }
    auto shared = std::make_shared<const Policy>(chosen);
    pool.entries.push_back(PoolEntry{"best" + std::to_string(pool.iteration), shared, chosen.elo, false});
    current = chosen;  // warm start for the next iteration
    ++pool.iteration;
  }
  return pool;
}

}  // namespace gridwall

#include <gtest/gtest.h>

#include <sstream>

#include "gridwall/baselines.hpp"
#include "gridwall/config.hpp"
#include "oracle.hpp"

using namespace gridwall;

namespace {

TrainConfig tiny() {
  TrainConfig c;
  c.env_steps = 600;
  c.pretrain_steps = 600;
  c.pretrain_eval_every = 300;
  c.replay_capacity = 2000;
  c.batch = 32;
  c.hidden = 16;
  c.warmup_steps = 200;
  c.update_after = 100;
  c.eval_every = 300;
  c.iterations = 2;
  c.mini_arena_matches = 4;
  c.opponent_resample_episodes = 2;
  return c;
}

}  // namespace

TEST(TrainConfig, JsonRoundTripAndValidation) {
  TrainConfig c = tiny();
  c.p_latest = 0.25;
  const TrainConfig back = train_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_THROW(train_config_from_json(json{{"p_latest", 1.5}}), ConfigError);
  EXPECT_THROW(train_config_from_json(json{{"env_steps", 0}}), ConfigError);
  EXPECT_THROW(train_config_from_json(json{{"gamma", 0.99}}), ConfigError);
  EXPECT_EQ(c.sac().gamma, 1.0f);
}

TEST(RunConfig, JsonRoundTrip) {
  RunConfig c;
  c.track.t0 = 93.0;
  c.reward.c_win = 40.0;
  c.train.iterations = 2;
  EXPECT_EQ(to_json(run_config_from_json(to_json(c))), to_json(c));
  EXPECT_THROW(run_config_from_json(json{{"trak", json::object()}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"reward", {{"gamma", 0.9}}}}), ConfigError);
}

TEST(Baseline, LibrarySearchMatchesIndependentOracle) {
  const TrackConfig c;
  const oracle::Baseline ref = oracle::nominal_baseline(c);
  const BaselineResult got = best_one_stop(c);
  EXPECT_NEAR(got.race_time, ref.race_time, 1e-9);
  ASSERT_EQ(got.plan.stops.size(), 1u);
  EXPECT_EQ(got.plan.stops.begin()->first, ref.lap);
  EXPECT_EQ(static_cast<int>(got.plan.stops.begin()->second), ref.compound);
}

TEST(SampleOpponent, IterationOneIsAlwaysBackbone) {
  const auto p = std::make_shared<const Policy>(Policy::create(TrackConfig{}, 1, 8));
  const OpponentPool pool = initial_pool(p);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_opponent(pool, 0.5, rng).id, "backbone");
  EXPECT_THROW(sample_opponent(OpponentPool{}, 0.5, rng), ContractError);
}

TEST(SampleOpponent, MixtureFrequencies) {
  const auto p = std::make_shared<const Policy>(Policy::create(TrackConfig{}, 1, 8));
  OpponentPool pool = initial_pool(p);
  pool.entries.push_back(PoolEntry{"best1", p});
  pool.entries.push_back(PoolEntry{"best2", p});
  pool.entries.push_back(PoolEntry{"best3", p});
  const double p_latest = 0.5;
  const int n = 10000;
  std::map<std::string, int> counts;
  std::mt19937_64 rng(7);
  for (int i = 0; i < n; ++i) ++counts[sample_opponent(pool, p_latest, rng).id];
  for (const auto& e : pool.entries) {
    const double prob = (e.id == "best3" ? p_latest : 0.0) + (1.0 - p_latest) / 4.0;
    const double sigma = std::sqrt(n * prob * (1.0 - prob));
    EXPECT_NEAR(counts[e.id], n * prob, 3.0 * sigma) << e.id;
  }
}

TEST(Pretrain, ReturnsZeroInteractionAndLogsEpisodes) {
  const TrackConfig track;
  std::ostringstream log;
  int rows = 0;
  const auto r = pretrain_backbone(tiny(), track, RewardConfig{}, 3, [&](const EpisodeLog& e) {
    write_log_row(log, e);
    ++rows;
  });
  EXPECT_EQ(rows, 600 / 57);
  EXPECT_EQ(r.evaluations.size(), 2u);
  for (const auto& layer : {r.policy.interaction().layers().back()}) {
    EXPECT_TRUE(layer.weight.isZero(0));
    EXPECT_TRUE(layer.bias.isZero(0));
  }
  EXPECT_EQ(r.policy.track_hash(), config_hash(track));
}

TEST(Pretrain, NonFiniteLossAbortsWithDiagnostics) {
  TrainConfig c = tiny();
  c.lr_critic = 1e30f;
  c.lr_actor = 1e30f;
  try {
    pretrain_backbone(c, TrackConfig{}, RewardConfig{}, 1);
    FAIL() << "expected divergence";
  } catch (const TrainingError& e) {
    const json d = json::parse(e.diagnostics());
    EXPECT_EQ(d.at("phase"), "pretrain");
    EXPECT_TRUE(d.contains("step"));
  }
}

TEST(TrainInteraction, FrozenBackboneAndSnapshots) {
  const TrackConfig track;
  const Policy start = Policy::create(track, 4, 16);
  const OpponentPool pool = initial_pool(std::make_shared<const Policy>(start));
  int episodes = 0;
  const auto r = train_interaction(start, pool, tiny(), track, RewardConfig{}, 9, [&](const EpisodeLog& e) {
    EXPECT_EQ(e.opponent, "backbone");
    ++episodes;
  });
  EXPECT_EQ(r.policy.backbone_hash(), start.backbone_hash());
  EXPECT_NE(r.policy.interaction_hash(), start.interaction_hash());
  ASSERT_EQ(r.snapshots.size(), 2u);
  EXPECT_EQ(r.snapshots[0].step, 300);
  for (const auto& s : r.snapshots) {
    EXPECT_EQ(s.policy->backbone_hash(), start.backbone_hash());
    EXPECT_TRUE(s.eval_win_rate == 0.0 || s.eval_win_rate == 0.5 || s.eval_win_rate == 1.0);
  }
  EXPECT_EQ(episodes, 600 / 57);
  EXPECT_FALSE(r.diverged);
}

TEST(TrainInteraction, ReproducibleGivenSeed) {
  const TrackConfig track;
  const Policy start = Policy::create(track, 4, 16);
  const OpponentPool pool = initial_pool(std::make_shared<const Policy>(start));
  const auto a = train_interaction(start, pool, tiny(), track, RewardConfig{}, 5);
  const auto b = train_interaction(start, pool, tiny(), track, RewardConfig{}, 5);
  const auto c = train_interaction(start, pool, tiny(), track, RewardConfig{}, 6);
  EXPECT_EQ(a.policy.interaction_hash(), b.policy.interaction_hash());
  EXPECT_NE(a.policy.interaction_hash(), c.policy.interaction_hash());
}

TEST(TrainInteraction, DivergenceStopsEarly) {
  const TrackConfig track;
  const Policy start = Policy::create(track, 4, 16);
  TrainConfig c = tiny();
  c.divergence_threshold = 0.0f;  // every loss counts as divergent
  c.divergence_window = 50;
  const auto r = train_interaction(start, initial_pool(std::make_shared<const Policy>(start)), c, track, RewardConfig{}, 1);
  EXPECT_TRUE(r.diverged);
  EXPECT_EQ(r.steps, c.update_after + c.divergence_window - 1);
  EXPECT_EQ(r.snapshots.size(), 1u);  // the partial result is still evaluated
}

TEST(TrainInteraction, RefusesForeignTrack) {
  TrackConfig other;
  other.n_laps = 50;
  const Policy start = Policy::create(other, 4, 16);
  EXPECT_THROW(train_interaction(start, initial_pool(std::make_shared<const Policy>(start)), tiny(), TrackConfig{},
                                 RewardConfig{}, 1),
               ConfigError);
}

TEST(SelfPlay, PoolGrowsByOnePerIterationWithElo) {
  const TrackConfig track;
  const Policy start = Policy::create(track, 4, 16);
  std::vector<IterationReport> reports;
  const OpponentPool pool = self_play(start, tiny(), track, RewardConfig{}, 2, {}, &reports);
  ASSERT_EQ(pool.entries.size(), 3u);
  EXPECT_EQ(pool.entries[0].id, "backbone");
  EXPECT_EQ(pool.entries[1].id, "best1");
  EXPECT_EQ(pool.entries[2].id, "best2");
  EXPECT_EQ(pool.iteration, 3);
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_EQ(pool.entries.back().elo, pool.entries.back().policy->elo);  // fresh from its own mini-arena
  for (std::size_t i = 1; i < pool.entries.size(); ++i) {
    const auto& e = pool.entries[i];
    EXPECT_EQ(e.policy->backbone_hash(), start.backbone_hash());
    EXPECT_EQ(e.policy->metadata.at("elo").get<double>(), e.policy->elo);
    EXPECT_EQ(reports[i - 1].best_elo, e.policy->elo);
  }
}

TEST(TrainInteractionCem, SameContractAsSac) {
  const TrackConfig track;
  TrainConfig c = tiny();
  c.trainer = "cem";
  c.cem_population = 4;
  c.cem_elites = 2;
  c.env_steps = 4 * 2 * 57 * 3;  // three generations
  c.eval_every = 4 * 2 * 57;
  const Policy start = Policy::create(track, 3, 16);
  const OpponentPool pool = initial_pool(std::make_shared<const Policy>(start));
  std::vector<EpisodeLog> rows;
  const InteractionResult r = train_interaction_cem(start, pool, c, track, RewardConfig{}, 5,
                                                    [&](const EpisodeLog& e) { rows.push_back(e); });
  EXPECT_EQ(r.policy.backbone_hash(), start.backbone_hash());
  EXPECT_NE(r.policy.interaction_hash(), start.interaction_hash());
  EXPECT_EQ(r.steps, c.env_steps);
  ASSERT_EQ(r.snapshots.size(), 3u);
  EXPECT_EQ(r.snapshots[0].id, "it1_s456");
  EXPECT_EQ(rows.size(), 24u);
  for (const auto& e : rows) EXPECT_EQ(e.opponent, "backbone");
  const InteractionResult again = train_interaction_cem(start, pool, c, track, RewardConfig{}, 5);
  EXPECT_EQ(again.policy.interaction_hash(), r.policy.interaction_hash());

  c.iterations = 1;
  c.mini_arena_matches = 2;
  const OpponentPool grown = self_play(start, c, track, RewardConfig{}, 2);
  ASSERT_EQ(grown.entries.size(), 2u);
  EXPECT_EQ(grown.entries.back().policy->metadata["trainer"], "cem");
}

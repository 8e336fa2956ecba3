#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "gridwall/baselines.hpp"
#include "gridwall/env.hpp"
#include "oracle.hpp"

using namespace gridwall;

namespace {

Driver random_driver(std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [rng](const EgoObservation&, const OpponentObservation&) {
    std::uniform_real_distribution<double> u(-1.5, 1.5), p(-0.5, 3.5);
    std::bernoulli_distribution pit(0.05);
    return Action{1.0 + 0.2 * u(*rng), u(*rng), pit(*rng) ? p(*rng) : 0.0};
  };
}

}  // namespace

TEST(Dimensions, Contract) {
  EXPECT_EQ(kStateDim, 18u);
  EXPECT_EQ(kObservationDim, 14u);
  EXPECT_EQ(kActionDim, 3u);
  Episode env(TrackConfig{}, RewardConfig{}, random_driver(1));
  const Observation o = env.reset(1, 0.5);
  EXPECT_EQ(o.ego.values.size() + o.opponent.values.size(), 14u);
  EXPECT_EQ(env.flat_state().size(), 18u);
}

TEST(Episode, ProtocolErrors) {
  Episode env(TrackConfig{}, RewardConfig{});
  EXPECT_THROW(env.step(Action{}), ProtocolError);
  env.reset(0);
  for (int i = 0; i < 57; ++i) env.step(Action{});
  EXPECT_TRUE(env.done());
  EXPECT_THROW(env.step(Action{}), ProtocolError);
}

TEST(Episode, ObservationContents) {
  const TrackConfig c;
  Episode env(c, RewardConfig{}, random_driver(2));
  const Observation o = env.reset(5, 1.25);
  EXPECT_EQ(o.ego[0], c.e_b_max);
  EXPECT_EQ(o.ego[1], c.e_f0);
  EXPECT_EQ(o.ego[3], 0.0);
  EXPECT_EQ(o.ego[5], 2.0);  // starts on mediums
  EXPECT_EQ(o.ego[8], c.t0);
  EXPECT_EQ(o.ego[9], 57.0);
  EXPECT_EQ(o.opponent[0], 0.0);
  EXPECT_EQ(o.opponent[3], -1.25);  // the other car's own gap
}

TEST(Episode, GapSamplingIsSeeded) {
  Episode env(TrackConfig{}, RewardConfig{}, random_driver(3), Range{-2.0, 2.0});
  const double g1 = env.reset(17).opponent[3];
  const double g2 = env.reset(17).opponent[3];
  const double g3 = env.reset(18).opponent[3];
  EXPECT_EQ(g1, g2);
  EXPECT_NE(g1, g3);
  EXPECT_LE(std::abs(g1), 2.0);
}

TEST(Episode, GapAntisymmetryOverRandomEpisodes) {
  for (std::uint64_t ep = 0; ep < 200; ++ep) {
    Episode env(TrackConfig{}, RewardConfig{}, random_driver(ep + 1000));
    env.reset(ep);
    const Driver me = random_driver(ep);
    Observation o = env.observation();
    while (!env.done()) {
      o = env.step(me(o.ego, o.opponent)).observation;
      ASSERT_LE(std::abs(env.state().duel.gap_1 + env.state().duel.gap_i), 1e-9);
    }
  }
}

TEST(Episode, BookkeepingIdentities) {
  const TrackConfig c;
  const RewardConfig rc;
  for (std::uint64_t ep = 0; ep < 50; ++ep) {
    Episode env(c, rc, random_driver(ep + 77));
    Observation o = env.reset(ep);
    const Driver me = random_driver(ep);
    double ret = 0.0;
    bool cpd_seen = false;
    while (!env.done()) {
      const StepResult r = env.step(me(o.ego, o.opponent));
      ret += r.reward;
      o = r.observation;
      for (const CarState* s : {&env.state().car_1, &env.state().car_i}) {
        ASSERT_EQ(s->m_car, c.m_dry + c.fuel_unit_mass * s->e_f);
        ASSERT_GE(s->e_b, 0.0);
        ASSERT_LE(s->e_b, c.e_b_max);
        ASSERT_GE(s->e_f, 0.0);
      }
      ASSERT_TRUE(!cpd_seen || env.state().car_1.b_cpd);  // monotone flag
      cpd_seen = env.state().car_1.b_cpd;
    }
    const auto& s = env.state();
    const double expected = c.n_laps * rc.t_c - s.car_1.t_race + final_reward(s.duel.gap_1, s.car_1.b_cpd, rc);
    EXPECT_NEAR(ret, expected, 1e-9);
  }
}

TEST(Episode, MatchesIndependentOracleSolo) {
  const TrackConfig c;
  const std::map<int, int> stops{{14, 1}, {33, 3}};
  PitPlan plan;
  for (auto [l, k] : stops) plan.stops[l] = static_cast<PitDecision>(k);
  plan.d_ef = 1.05;
  plan.d_eb = 0.3;
  Episode env(c, RewardConfig{});
  Observation o = env.reset(0);
  const Driver d = plan_driver(plan, c);
  while (!env.done()) o = env.step(d(o.ego, o.opponent)).observation;
  const oracle::Car ref = oracle::solo(stops, 1.05, 0.3, c);
  EXPECT_NEAR(env.state().car_1.t_race, ref.t, 1e-9);
  EXPECT_NEAR(env.state().car_1.e_f, ref.ef, 1e-9);
  EXPECT_EQ(env.state().car_1.b_cpd, ref.cpd);
  EXPECT_EQ(static_cast<int>(env.state().car_1.tc), ref.tc);
  EXPECT_EQ(env.state().car_1.ta, ref.ta);
}

TEST(Episode, MatchesIndependentOracleDuel) {
  const TrackConfig c;
  const std::map<int, int> pa{{12, 1}, {30, 1}}, pb{{16, 3}};
  auto to_plan = [](const std::map<int, int>& m) {
    PitPlan p;
    for (auto [l, k] : m) p.stops[l] = static_cast<PitDecision>(k);
    return p;
  };
  Episode env(c, RewardConfig{}, plan_driver(to_plan(pb), c));
  Observation o = env.reset(0, 0.7);
  const Driver d = plan_driver(to_plan(pa), c);
  const std::vector<double> ref = oracle::duel(pa, pb, 0.7, c);
  int lap = 0;
  while (!env.done()) {
    o = env.step(d(o.ego, o.opponent)).observation;
    ++lap;
    ASSERT_NEAR(env.state().duel.gap_1, ref[lap], 1e-9) << "lap " << lap;
  }
}

TEST(AdvanceCar, ClippingFlags) {
  const TrackConfig c;
  CarState s = initial_car_state(c);
  LapOutcome lo = advance_car(s, Action{2.0, 0.0, 0.0}, 0.0, c);
  EXPECT_EQ(lo.realized.d_ef, 1.15);
  EXPECT_EQ(lo.clipped, kClipFuelRange);
  s.e_f = 0.5;
  lo = advance_car(s, Action{1.0, 0.0, 0.0}, 0.0, c);
  EXPECT_EQ(lo.realized.d_ef, 0.5);
  EXPECT_EQ(lo.clipped, kClipFuelEmpty);
  s = initial_car_state(c);
  lo = advance_car(s, Action{1.0, -0.5, 0.0}, 0.0, c);  // battery already full: cannot harvest
  EXPECT_EQ(lo.realized.d_eb, 0.0);
  EXPECT_EQ(lo.clipped, kClipBatteryState);
  lo = advance_car(s, Action{1.0, 3.0, 1.2}, 0.0, c);
  EXPECT_EQ(lo.realized.d_eb, 1.0);
  EXPECT_EQ(lo.ps, PitDecision::soft);
  EXPECT_EQ(lo.clipped, kClipBatteryRange | kClipPit);
  EXPECT_THROW(advance_car(s, Action{NAN, 0.0, 0.0}, 0.0, c), InvalidActionError);
}

TEST(AdvanceCar, PitLapUsesOutgoingSet) {
  const TrackConfig c;
  CarState s = initial_car_state(c);
  s.tw = 0.5;
  const LapOutcome pit = advance_car(s, Action{1.0, 0.0, 1.0}, 0.0, c);
  EXPECT_DOUBLE_EQ(pit.tire_penalty, tire_time_penalty(Compound::medium, 0.5, c));
  EXPECT_EQ(pit.next.tc, Compound::soft);
  EXPECT_EQ(pit.next.tw, 0.0);
  EXPECT_EQ(pit.next.ta, 0);
  EXPECT_TRUE(pit.next.b_outlap);
  EXPECT_TRUE(pit.next.b_cpd);
  const LapOutcome out = advance_car(pit.next, Action{1.0, 0.0, 0.0}, 0.0, c);
  EXPECT_EQ(out.tire_penalty, 0.0);
  EXPECT_NEAR(out.t_nom - advance_car(out.next, Action{1.0, 0.0, 0.0}, 0.0, c).t_nom,
              c.t_pit_out + c.k_mass * c.fuel_unit_mass * 1.0, 1e-9);
  // Re-fitting the same compound does not satisfy the rule.
  const LapOutcome same = advance_car(initial_car_state(c), Action{1.0, 0.0, 2.0}, 0.0, c);
  EXPECT_FALSE(same.next.b_cpd);
}

TEST(AdvanceCar, BreakdownSumsToLapTime) {
  const TrackConfig c;
  const LapOutcome lo = advance_car(initial_car_state(c), Action{0.9, 0.7, 0.0}, 0.33, c);
  EXPECT_EQ(lo.t_lap, lo.t_nom + lo.tire_penalty + lo.dt_int);
}

TEST(Episode, TransitionDeterminismGivenStateActionOpponent) {
  // Markov within an episode: the same state, action and opponent give the same successor.
  const TrackConfig c;
  const Driver opp = [](const EgoObservation& o, const OpponentObservation&) {
    return Action{1.0, 0.0, o[9] == 30.0 ? 1.0 : 0.0};
  };
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    RaceState rs = initial_race_state(c, 0.4);
    const Driver me = random_driver(trial);
    for (int l = 0; l < 40; ++l) {
      const Observation o = observe(rs, Side::car_1, c);
      const Observation oi = observe(rs, Side::car_i, c);
      advance_race(rs, me(o.ego, o.opponent), opp(oi.ego, oi.opponent), c);
    }
    const Action a{1.1, 0.2, 2.0};
    RaceState x = rs, y = rs;
    const Observation oi = observe(rs, Side::car_i, c);
    advance_race(x, a, opp(oi.ego, oi.opponent), c);
    advance_race(y, a, opp(oi.ego, oi.opponent), c);
    EXPECT_EQ(x, y);
  }
}

TEST(Trace, FormatAndHeader) {
  Episode env(TrackConfig{}, RewardConfig{}, random_driver(9));
  env.record_trace(true);
  env.reset(1, 0.5);
  const Driver me = random_driver(10);
  Observation o = env.observation();
  while (!env.done()) o = env.step(me(o.ego, o.opponent)).observation;
  ASSERT_EQ(env.trace().size(), 114u);
  std::istringstream in(trace_csv(env.trace()));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kTraceHeader);
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 4), "1,1,");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 4), "1,2,");
  EXPECT_EQ(std::count(line.begin(), line.end(), ','), 15);
  EXPECT_EQ(format_g9(0.1), "0.1");
  EXPECT_EQ(format_g9(5647.0912345678), "5647.09123");
}

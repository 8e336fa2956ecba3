#include <gtest/gtest.h>

#include <random>

#include "gridwall/duel.hpp"

using namespace gridwall;

TEST(DecodePit, TableValues) {
  EXPECT_EQ(decode_pit(0.0), PitDecision::none);
  EXPECT_EQ(decode_pit(1.0), PitDecision::soft);
  EXPECT_EQ(decode_pit(2.4), PitDecision::medium);
  EXPECT_EQ(decode_pit(2.5), PitDecision::hard);  // ties round up
  EXPECT_EQ(decode_pit(0.4999), PitDecision::none);
  EXPECT_EQ(decode_pit(-7.0), PitDecision::none);
  EXPECT_EQ(decode_pit(42.0), PitDecision::hard);
}

TEST(DecodePit, IdempotentOnCodesAndTotalOnReals) {
  for (int k = 0; k <= 3; ++k) {
    const auto d = decode_pit(k);
    EXPECT_EQ(static_cast<int>(d), k);
    EXPECT_EQ(decode_pit(static_cast<int>(d)), d);
  }
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 10000; ++i) {
    const int v = static_cast<int>(decode_pit(u(rng)));
    EXPECT_TRUE(v >= 0 && v <= 3);
  }
}

TEST(DecodePit, RejectsNonFinite) {
  EXPECT_THROW(decode_pit(std::nan("")), InvalidActionError);
  EXPECT_THROW(decode_pit(INFINITY), InvalidActionError);
}

TEST(TirePenalty, DefaultExamples) {
  const TrackConfig c;
  EXPECT_EQ(tire_time_penalty(Compound::soft, 0.0, c), 0.0);
  EXPECT_DOUBLE_EQ(tire_time_penalty(Compound::medium, 0.0, c), 0.4);
  EXPECT_DOUBLE_EQ(tire_time_penalty(Compound::soft, 1.0, c), 5.5);
}

TEST(TirePenalty, StrictlyIncreasingOnGrid) {
  const TrackConfig c;
  for (Compound k : kCompounds) {
    double prev = -1.0;
    for (int i = 0; i < 100; ++i) {
      const double p = tire_time_penalty(k, c.wear_cap * i / 99.0, c);
      EXPECT_GT(p, prev) << to_string(k) << " at " << i;
      prev = p;
    }
  }
}

TEST(TirePenalty, OutOfRangeWear) {
  const TrackConfig c;
  EXPECT_THROW(tire_time_penalty(Compound::hard, -0.01, c), DomainError);
  EXPECT_THROW(tire_time_penalty(Compound::hard, c.wear_cap + 0.01, c), DomainError);
}

TEST(WearIncrement, Defaults) {
  const TrackConfig c;
  EXPECT_EQ(wear_increment(Compound::soft, c), 0.045);
  EXPECT_EQ(wear_increment(Compound::medium, c), 0.032);
  EXPECT_EQ(wear_increment(Compound::hard, c), 0.022);
}

TEST(NominalLapTime, ReferenceState) {
  const TrackConfig c;
  CarState s;
  s.m_car = c.m_dry;  // zero fuel load
  EXPECT_EQ(nominal_lap_time(s, Action{1.0, 0.0, 0.0}, c), 95.0);
  EXPECT_DOUBLE_EQ(nominal_lap_time(s, Action{1.0, 1.0, 0.0}, c), 94.6);
  EXPECT_DOUBLE_EQ(nominal_lap_time(s, Action{1.0, 0.0, 1.0}, c), 113.0);
  s.b_outlap = true;
  EXPECT_DOUBLE_EQ(nominal_lap_time(s, Action{1.0, 0.0, 0.0}, c), 99.0);
}

TEST(NominalLapTime, LinearPartials) {
  const TrackConfig c;
  CarState s = initial_car_state(c);
  const double t = nominal_lap_time(s, Action{1.0, 0.25, 0.0}, c);
  EXPECT_NEAR(nominal_lap_time(s, Action{1.0, 0.75, 0.0}, c) - t, -0.5 * c.k_batt, 1e-12);
  CarState h = s;
  h.m_car += 10.0;
  EXPECT_NEAR(nominal_lap_time(h, Action{1.0, 0.25, 0.0}, c) - t, 10.0 * c.k_mass, 1e-12);
  EXPECT_LT(nominal_lap_time(s, Action{1.1, 0.25, 0.0}, c), t);
}

TEST(TrackConfig, RaceLengthNearNinetyMinutes) {
  const TrackConfig c;
  const double minutes = c.n_laps * c.t0 / 60.0;
  EXPECT_GE(minutes, 85.0);
  EXPECT_LE(minutes, 95.0);
}

TEST(TrackConfig, JsonRoundTripAndHash) {
  TrackConfig c;
  c.t0 = 91.5;
  c.compounds[0].alpha = 2.25;
  const TrackConfig back = track_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_NE(config_hash(c), config_hash(TrackConfig{}));
  EXPECT_EQ(config_hash(TrackConfig{}).size(), 64u);
}

TEST(TrackConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(track_config_from_json(json{{"n_lapz", 3}}), ConfigError);
  EXPECT_THROW(track_config_from_json(json{{"compounds", {{"ultra", json::object()}}}}), ConfigError);
  EXPECT_THROW(track_config_from_json(json{{"n_laps", 0}}), ConfigError);
  EXPECT_THROW(track_config_from_json(json{{"fuel_alloc_range", {1.2, 0.8}}}), ConfigError);
  EXPECT_NO_THROW(track_config_from_json(json::object()));
}

TEST(Interaction, WindowAndValues) {
  const TrackConfig c;
  EXPECT_EQ(interaction_penalty(-3.0, c), 0.0);
  EXPECT_EQ(interaction_penalty(0.1999, c), 0.0);
  EXPECT_EQ(interaction_penalty(1.5001, c), 0.0);
  EXPECT_NEAR(interaction_penalty(1.5, c), 0.0, 1e-12);
  EXPECT_EQ(interaction_penalty(0.2, c), -0.4 * 0.2 + 0.6);
  EXPECT_NEAR(interaction_penalty(0.2, c), 0.52, 1e-15);
  for (double g = 0.2; g <= 1.5; g += 0.01) EXPECT_GE(interaction_penalty(g, c), 0.0);
}

TEST(Gaps, UpdatePreservesAntisymmetryExactly) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> t(80.0, 130.0), g(-5.0, 5.0);
  for (int i = 0; i < 1000; ++i) {
    DuelState d = DuelState::antisymmetric(g(rng));
    for (int l = 0; l < 57; ++l) {
      const double a = t(rng), b = t(rng);
      const DuelState n = update_gaps(d, a, b);
      EXPECT_EQ(n.gap_1 + n.gap_i, 0.0);
      EXPECT_NEAR(n.gap_1 - d.gap_1, a - b, 1e-12);
      d = n;
    }
  }
}

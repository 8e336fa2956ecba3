#include <gtest/gtest.h>

#include <random>

#include "gridwall/learner.hpp"

using namespace gridwall;
using Md = MatrixX<double>;

namespace {

struct Fixture {
  sac::Networks<double> n;
  sac::Batch<double> b;
  Md noise, next_noise;
};

Md gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Md m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

Fixture make_fixture(int obs_dim, std::uint64_t seed, double log_std_shift = 0.0) {
  std::mt19937_64 rng(seed);
  Fixture f;
  f.n.actor = Mlp<double>({obs_dim, 16, 16, 6});
  f.n.q1 = Mlp<double>({obs_dim + 3, 16, 16, 1});
  f.n.q2 = Mlp<double>({obs_dim + 3, 16, 16, 1});
  f.n.actor.initialize(rng);
  f.n.q1.initialize(rng);
  f.n.q2.initialize(rng);
  f.n.q1_target = f.n.q1;
  f.n.q2_target = f.n.q2;
  f.n.log_alpha = std::log(0.2);
  f.n.head = sac::Head<double>{1.0, -5.0, 1.0, log_std_shift};
  const int batch = 8;
  f.b.obs = gaussian(obs_dim, batch, rng);
  f.b.next_obs = gaussian(obs_dim, batch, rng);
  f.b.action = gaussian(3, batch, rng).array().tanh();
  f.b.reward = gaussian(1, batch, rng);
  f.b.done = Md::Zero(1, batch);
  f.b.done(0, 3) = 1.0;
  f.noise = gaussian(3, batch, rng);
  f.next_noise = gaussian(3, batch, rng);
  return f;
}

/// ||g_a - g_n|| / max(||g_a||, ||g_n||) by central differences.
template <typename LossFn>
double relative_error(Mlp<double>& net, const std::vector<double>& analytic, LossFn loss, double h = 1e-6) {
  std::vector<double> p = net.flat();
  std::vector<double> numeric(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    net.assign_flat(p);
    const double up = loss();
    p[i] = keep - h;
    net.assign_flat(p);
    const double down = loss();
    p[i] = keep;
    numeric[i] = (up - down) / (2 * h);
  }
  net.assign_flat(p);
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
}

}  // namespace

class GradientCheck : public ::testing::TestWithParam<int> {};

TEST_P(GradientCheck, Critic) {
  Fixture f = make_fixture(GetParam(), 100 + GetParam());
  const Md target = sac::critic_target(f.n, f.b, f.next_noise, 1.0);
  const auto r = sac::critic_loss(f.n, f.b, target);
  const double e1 = relative_error(f.n.q1, flatten<double>(r.grad_q1), [&] { return sac::critic_loss(f.n, f.b, target).loss; });
  const double e2 = relative_error(f.n.q2, flatten<double>(r.grad_q2), [&] { return sac::critic_loss(f.n, f.b, target).loss; });
  EXPECT_LE(e1, 1e-4);
  EXPECT_LE(e2, 1e-4);
}

TEST_P(GradientCheck, Actor) {
  Fixture f = make_fixture(GetParam(), 200 + GetParam(), -0.5);
  const auto r = sac::actor_loss(f.n, f.b.obs, f.noise);
  const double e = relative_error(f.n.actor, flatten<double>(r.grad), [&] { return sac::actor_loss(f.n, f.b.obs, f.noise).loss; });
  EXPECT_LE(e, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(ObsDims, GradientCheck, ::testing::Values(10, 14));

TEST(GradientCheck, FloatNetworksCastToDouble) {
  // The training path is float; casting the same networks to double must give the checked math.
  SacLearner learner(Mlp<float>({10, 16, 16, 6}), 10, SacConfig{16}, 3);
  const sac::Networks<double> n = learner.networks().cast<double>();
  EXPECT_EQ(n.actor.parameter_count(), learner.actor().parameter_count());
  EXPECT_NEAR(n.log_alpha, std::log(0.1), 1e-7);
}

TEST(CriticTarget, TerminalTargetEqualsReward) {
  Fixture f = make_fixture(10, 7);
  f.b.done.setOnes();
  const Md t = sac::critic_target(f.n, f.b, f.next_noise, 1.0);
  for (Eigen::Index j = 0; j < t.cols(); ++j) EXPECT_EQ(t(0, j), f.b.reward(0, j));
}

TEST(CriticTarget, NonTerminalUsesSoftValue) {
  Fixture f = make_fixture(10, 8);
  const Md t = sac::critic_target(f.n, f.b, f.next_noise, 1.0);
  const auto s = sac::sample(f.n.actor, f.n.head, f.b.next_obs, f.next_noise);
  const Md x = sac::stack(f.b.next_obs, s.action);
  const double alpha = std::exp(f.n.log_alpha);
  for (Eigen::Index j = 0; j < t.cols(); ++j) {
    const double q = std::min(f.n.q1_target.forward(x)(0, j), f.n.q2_target.forward(x)(0, j));
    const double expect = f.b.reward(0, j) + (1.0 - f.b.done(0, j)) * (q - alpha * s.log_prob(0, j));
    EXPECT_NEAR(t(0, j), expect, 1e-12);
  }
}

TEST(Sample, LogProbMatchesChangeOfVariables) {
  // One dimension at a time: log N(u; mu, sd) - log(1 - tanh(u)^2), summed.
  Fixture f = make_fixture(10, 9);
  const auto s = sac::sample(f.n.actor, f.n.head, f.b.obs, f.noise);
  const Md out = f.n.actor.forward(f.b.obs);
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    double lp = 0;
    for (int i = 0; i < 3; ++i) {
      const double ls = std::clamp(out(3 + i, j), -5.0, 1.0);
      const double sd = std::exp(ls);
      const double u = out(i, j) + sd * f.noise(i, j);
      const double z = (u - out(i, j)) / sd;
      lp += -0.5 * z * z - ls - 0.5 * std::log(2 * M_PI) - std::log(1 - std::tanh(u) * std::tanh(u));
      EXPECT_NEAR(s.action(i, j), std::tanh(u), 1e-15);
    }
    EXPECT_NEAR(s.log_prob(0, j), lp, 1e-9);
  }
  EXPECT_NEAR(sac::log_one_minus_tanh2(30.0), std::log(4.0) - 60.0, 1e-9);
}

TEST(Replay, RingBufferBookkeeping) {
  ReplayBuffer r(2, 4);
  for (int i = 0; i < 6; ++i) {
    const float o[2] = {float(i), 0}, n[2] = {float(i + 1), 0}, a[3] = {0, 0, 0};
    r.add(o, a, float(i), n, i % 3 == 2, TransitionTag{i / 3, i % 3 + 1});
  }
  EXPECT_EQ(r.size(), 4u);
  EXPECT_EQ(r.obs(0)[0], 4.0f);  // overwritten slots
  EXPECT_EQ(r.obs(1)[0], 5.0f);
  EXPECT_EQ(r.obs(2)[0], 2.0f);
  EXPECT_TRUE(r.done(2));
  EXPECT_TRUE(r.done(1));
  EXPECT_FALSE(r.done(0));
  std::mt19937_64 rng(1);
  const auto b = r.sample(64, rng);
  for (Eigen::Index j = 0; j < 64; ++j) EXPECT_EQ(b.next_obs(0, j), b.obs(0, j) + 1.0f);
  const float bad[3] = {0, 0, 0};
  EXPECT_THROW(r.add(std::span<const float>(bad, 3), bad, 0.f, std::span<const float>(bad, 3), false), ContractError);
}

TEST(Learner, UpdateReducesCriticLossOnFixedData) {
  SacConfig cfg;
  cfg.hidden = 32;
  cfg.batch = 64;
  cfg.lr_critic = 1e-3f;
  SacLearner learner(Mlp<float>({4, 32, 32, 6}), 4, cfg, 11);
  ReplayBuffer replay(4, 256);
  std::mt19937_64 rng(2);
  std::normal_distribution<float> g;
  for (int i = 0; i < 256; ++i) {
    const float o[4] = {g(rng), g(rng), g(rng), g(rng)}, a[3] = {0.1f, -0.2f, 0.3f};
    replay.add(o, a, o[0] * 2.0f, o, true);
  }
  const float first = learner.update(replay).critic_loss;
  float last = first;
  for (int i = 0; i < 400; ++i) last = learner.update(replay).critic_loss;
  EXPECT_LT(last, 0.2f * first);
}

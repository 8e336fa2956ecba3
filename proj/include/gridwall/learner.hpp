#pragma once

#include <cmath>
#include <random>
#include <span>

#include "gridwall/replay.hpp"
#include "gridwall/sac.hpp"

namespace gridwall {

struct SacConfig {
  int hidden = 64;
  std::size_t batch = 256;
  float lr_actor = 3e-4f;
  float lr_critic = 3e-4f;
  float lr_alpha = 3e-4f;
  float tau = 5e-3f;
  float target_entropy = -3.0f;
  float initial_alpha = 0.1f;
  float gamma = 1.0f;
  float log_std_shift = 0.0f;
  float action_bound = 1.0f;
};

struct UpdateStats {
  float critic_loss = 0;
  float actor_loss = 0;
  float alpha = 0;
  float mean_log_prob = 0;
};

/// Owns the actor being trained, twin critics with targets, temperature and optimizers.
class SacLearner {
 public:
  SacLearner(Mlp<float> actor, int obs_dim, const SacConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), rng_(seed) {
    nets_.actor = std::move(actor);
    nets_.head = sac::Head<float>{cfg.action_bound, -5.0f, 1.0f, cfg.log_std_shift};
    nets_.q1 = Mlp<float>({obs_dim + sac::kAct, cfg.hidden, cfg.hidden, 1});
    nets_.q2 = Mlp<float>({obs_dim + sac::kAct, cfg.hidden, cfg.hidden, 1});
    nets_.q1.initialize(rng_);
    nets_.q2.initialize(rng_);
    nets_.q1_target = nets_.q1;
    nets_.q2_target = nets_.q2;
    nets_.log_alpha = std::log(cfg.initial_alpha);
    opt_actor_ = Adam<float>(nets_.actor, cfg.lr_actor);
    opt_q1_ = Adam<float>(nets_.q1, cfg.lr_critic);
    opt_q2_ = Adam<float>(nets_.q2, cfg.lr_critic);
    opt_alpha_ = ScalarAdam<float>(cfg.lr_alpha);
  }

  /// Action in [-bound, bound]^3 for one normalized observation.
  std::array<float, sac::kAct> act(std::span<const float> obs, bool stochastic) {
    const Eigen::Map<const Eigen::VectorXf> x(obs.data(), static_cast<Eigen::Index>(obs.size()));
    MatrixX<float> a;
    if (stochastic) {
      MatrixX<float> noise(sac::kAct, 1);
      for (int i = 0; i < sac::kAct; ++i) noise(i, 0) = normal_(rng_);
      a = sac::sample(nets_.actor, nets_.head, MatrixX<float>(x), noise).action;
    } else {
      a = sac::mean_action(nets_.actor, nets_.head, MatrixX<float>(x));
    }
    return {a(0, 0), a(1, 0), a(2, 0)};
  }

  /// Uniform action in the box, used during warm-up.
  std::array<float, sac::kAct> random_action() {
    std::uniform_real_distribution<float> u(-cfg_.action_bound, cfg_.action_bound);
    return {u(rng_), u(rng_), u(rng_)};
  }

  UpdateStats update(const ReplayBuffer& replay) {
    const sac::Batch<float> batch = replay.sample(cfg_.batch, rng_);
    const auto b = static_cast<Eigen::Index>(cfg_.batch);
    UpdateStats st;

    const MatrixX<float> target = sac::critic_target(nets_, batch, gaussian(b), cfg_.gamma);
    const auto critic = sac::critic_loss(nets_, batch, target);
    opt_q1_.step(nets_.q1, critic.grad_q1);
    opt_q2_.step(nets_.q2, critic.grad_q2);
    st.critic_loss = critic.loss;

    const auto actor = sac::actor_loss(nets_, batch.obs, gaussian(b));
    opt_actor_.step(nets_.actor, actor.grad);
    st.actor_loss = actor.loss;
    st.mean_log_prob = actor.mean_log_prob;

    opt_alpha_.step(nets_.log_alpha, sac::alpha_gradient(actor.mean_log_prob, cfg_.target_entropy));
    st.alpha = std::exp(nets_.log_alpha);

    soft_update(nets_.q1_target, nets_.q1, cfg_.tau);
    soft_update(nets_.q2_target, nets_.q2, cfg_.tau);
    return st;
  }

  const Mlp<float>& actor() const { return nets_.actor; }
  sac::Networks<float>& networks() { return nets_; }
  const SacConfig& config() const { return cfg_; }
  std::mt19937_64& rng() { return rng_; }

 private:
  MatrixX<float> gaussian(Eigen::Index cols) {
    MatrixX<float> m(sac::kAct, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal_(rng_);
    return m;
  }

  SacConfig cfg_;
  std::mt19937_64 rng_;
  std::normal_distribution<float> normal_{0.0f, 1.0f};
  sac::Networks<float> nets_;
  Adam<float> opt_actor_, opt_q1_, opt_q2_;
  ScalarAdam<float> opt_alpha_;
};

}  // namespace gridwall

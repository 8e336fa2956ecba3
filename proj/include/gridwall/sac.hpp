#pragma once

// Entropy-regularized off-policy actor-critic (soft actor-critic) with twin
// critics, target networks and a learned temperature. The loss functions are
// templated on the scalar so the same code is gradient-checked in double and
// trained in float.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "gridwall/nn.hpp"

namespace gridwall::sac {

inline constexpr int kAct = 3;

/// Tanh-squashed Gaussian head on top of an actor net emitting (mean, log_std).
template <typename Scalar>
struct Head {
  Scalar bound = 1;  // actions live in [-bound, bound]
  Scalar log_std_min = -5;
  Scalar log_std_max = 1;
  Scalar log_std_shift = 0;  // constant added to the raw log-std output
};

template <typename Scalar>
struct Sample {
  MatrixX<Scalar> action;    // kAct x B
  MatrixX<Scalar> log_prob;  // 1 x B
  MatrixX<Scalar> squashed;  // tanh(u)
  MatrixX<Scalar> std;
  MatrixX<Scalar> noise;
  MatrixX<Scalar> inside;  // 1 where log-std is not clamped
  typename Mlp<Scalar>::Tape tape;
};

/// log(1 - tanh(u)^2), stable for large |u|.
template <typename Scalar>
Scalar log_one_minus_tanh2(Scalar u) {
  const Scalar x = Scalar(-2) * u;
  const Scalar softplus = x > Scalar(20) ? x : std::log1p(std::exp(x));
  return Scalar(2) * (static_cast<Scalar>(std::numbers::ln2) - u - softplus);
}

template <typename Scalar>
Sample<Scalar> sample(const Mlp<Scalar>& actor, const Head<Scalar>& head, const MatrixX<Scalar>& obs,
                      const MatrixX<Scalar>& noise) {
  Sample<Scalar> s;
  const MatrixX<Scalar> out = actor.forward(obs, &s.tape);
  const Eigen::Index b = obs.cols();
  s.noise = noise;
  s.action.resize(kAct, b);
  s.squashed.resize(kAct, b);
  s.std.resize(kAct, b);
  s.inside.resize(kAct, b);
  s.log_prob.setZero(1, b);
  const Scalar half_log_2pi = static_cast<Scalar>(0.5 * std::log(2.0 * std::numbers::pi));
  const Scalar log_bound = std::log(head.bound);
  for (Eigen::Index j = 0; j < b; ++j) {
    for (int i = 0; i < kAct; ++i) {
      const Scalar raw = out(kAct + i, j) + head.log_std_shift;
      const Scalar ls = std::clamp(raw, head.log_std_min, head.log_std_max);
      s.inside(i, j) = (raw > head.log_std_min && raw < head.log_std_max) ? Scalar(1) : Scalar(0);
      const Scalar sd = std::exp(ls);
      const Scalar u = out(i, j) + sd * noise(i, j);
      const Scalar t = std::tanh(u);
      s.std(i, j) = sd;
      s.squashed(i, j) = t;
      s.action(i, j) = head.bound * t;
      s.log_prob(0, j) += Scalar(-0.5) * noise(i, j) * noise(i, j) - ls - half_log_2pi - log_bound -
                          log_one_minus_tanh2(u);
    }
  }
  return s;
}

/// Deterministic action: bound * tanh(mean).
template <typename Scalar>
MatrixX<Scalar> mean_action(const Mlp<Scalar>& actor, const Head<Scalar>& head, const MatrixX<Scalar>& obs) {
  const MatrixX<Scalar> out = actor.forward(obs);
  return head.bound * out.topRows(kAct).array().tanh().matrix();
}

/// Backprop dL/daction and dL/dlog_prob into the actor's parameters.
template <typename Scalar>
void backward_sample(const Mlp<Scalar>& actor, const Head<Scalar>& head, const Sample<Scalar>& s,
                     const MatrixX<Scalar>& d_action, const MatrixX<Scalar>& d_log_prob,
                     typename Mlp<Scalar>::Gradient& grad) {
  const Eigen::Index b = s.action.cols();
  MatrixX<Scalar> d_out(2 * kAct, b);
  for (Eigen::Index j = 0; j < b; ++j) {
    for (int i = 0; i < kAct; ++i) {
      const Scalar t = s.squashed(i, j);
      const Scalar dt_du = Scalar(1) - t * t;
      const Scalar du = d_action(i, j) * head.bound * dt_du + d_log_prob(0, j) * Scalar(2) * t;
      const Scalar sn = s.std(i, j) * s.noise(i, j);
      d_out(i, j) = du;
      d_out(kAct + i, j) = s.inside(i, j) * (du * sn - d_log_prob(0, j));
    }
  }
  actor.backward(s.tape, d_out, grad);
}

template <typename Scalar>
MatrixX<Scalar> stack(const MatrixX<Scalar>& obs, const MatrixX<Scalar>& act) {
  MatrixX<Scalar> x(obs.rows() + act.rows(), obs.cols());
  x << obs, act;
  return x;
}

template <typename Scalar>
struct Networks {
  Mlp<Scalar> actor;
  Mlp<Scalar> q1, q2, q1_target, q2_target;
  Scalar log_alpha = 0;
  Head<Scalar> head;

  template <typename Other>
  Networks<Other> cast() const {
    Networks<Other> n;
    n.actor = actor.template cast<Other>();
    n.q1 = q1.template cast<Other>();
    n.q2 = q2.template cast<Other>();
    n.q1_target = q1_target.template cast<Other>();
    n.q2_target = q2_target.template cast<Other>();
    n.log_alpha = static_cast<Other>(log_alpha);
    n.head = Head<Other>{static_cast<Other>(head.bound), static_cast<Other>(head.log_std_min),
                         static_cast<Other>(head.log_std_max), static_cast<Other>(head.log_std_shift)};
    return n;
  }
};

template <typename Scalar>
struct Batch {
  MatrixX<Scalar> obs;       // d x B
  MatrixX<Scalar> action;    // kAct x B
  MatrixX<Scalar> reward;    // 1 x B
  MatrixX<Scalar> next_obs;  // d x B
  MatrixX<Scalar> done;      // 1 x B
};

template <typename Scalar>
struct CriticResult {
  Scalar loss = 0;
  typename Mlp<Scalar>::Gradient grad_q1, grad_q2;
  MatrixX<Scalar> target;  // 1 x B
};

/// Bellman targets from the target critics and a fresh next-action sample.
template <typename Scalar>
MatrixX<Scalar> critic_target(const Networks<Scalar>& n, const Batch<Scalar>& b, const MatrixX<Scalar>& next_noise,
                              Scalar gamma) {
  const Sample<Scalar> next = sample(n.actor, n.head, b.next_obs, next_noise);
  const MatrixX<Scalar> x = stack(b.next_obs, next.action);
  const MatrixX<Scalar> q = n.q1_target.forward(x).cwiseMin(n.q2_target.forward(x));
  const Scalar alpha = std::exp(n.log_alpha);
  const MatrixX<Scalar> soft_v = q - alpha * next.log_prob;
  return b.reward + gamma * ((MatrixX<Scalar>::Ones(1, b.done.cols()) - b.done).cwiseProduct(soft_v));
}

/// L = mean (Q1 - y)^2 + mean (Q2 - y)^2 with y held fixed.
template <typename Scalar>
CriticResult<Scalar> critic_loss(const Networks<Scalar>& n, const Batch<Scalar>& b, const MatrixX<Scalar>& target) {
  CriticResult<Scalar> r;
  r.target = target;
  const Scalar inv_b = Scalar(1) / static_cast<Scalar>(b.obs.cols());
  const MatrixX<Scalar> x = stack(b.obs, b.action);
  r.grad_q1 = n.q1.zero_gradient();
  r.grad_q2 = n.q2.zero_gradient();
  for (int which = 0; which < 2; ++which) {
    const Mlp<Scalar>& q = which == 0 ? n.q1 : n.q2;
    typename Mlp<Scalar>::Tape tape;
    const MatrixX<Scalar> err = q.forward(x, &tape) - target;
    r.loss += err.squaredNorm() * inv_b;
    q.backward(tape, Scalar(2) * inv_b * err, which == 0 ? r.grad_q1 : r.grad_q2);
  }
  return r;
}

template <typename Scalar>
struct ActorResult {
  Scalar loss = 0;
  Scalar mean_log_prob = 0;
  typename Mlp<Scalar>::Gradient grad;
};

/// L = mean(alpha * log pi(a|s) - min(Q1, Q2)(s, a)), a reparameterized with `noise`.
template <typename Scalar>
ActorResult<Scalar> actor_loss(const Networks<Scalar>& n, const MatrixX<Scalar>& obs, const MatrixX<Scalar>& noise) {
  ActorResult<Scalar> r;
  const Eigen::Index batch = obs.cols();
  const Scalar inv_b = Scalar(1) / static_cast<Scalar>(batch);
  const Scalar alpha = std::exp(n.log_alpha);
  const Sample<Scalar> s = sample(n.actor, n.head, obs, noise);
  const MatrixX<Scalar> x = stack(obs, s.action);
  typename Mlp<Scalar>::Tape t1, t2;
  const MatrixX<Scalar> q1 = n.q1.forward(x, &t1);
  const MatrixX<Scalar> q2 = n.q2.forward(x, &t2);
  MatrixX<Scalar> g1 = MatrixX<Scalar>::Zero(1, batch);
  MatrixX<Scalar> g2 = MatrixX<Scalar>::Zero(1, batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    const bool first = q1(0, j) <= q2(0, j);
    r.loss += (alpha * s.log_prob(0, j) - (first ? q1(0, j) : q2(0, j))) * inv_b;
    (first ? g1 : g2)(0, j) = -inv_b;
  }
  r.mean_log_prob = s.log_prob.mean();
  auto scratch1 = n.q1.zero_gradient();
  auto scratch2 = n.q2.zero_gradient();
  const MatrixX<Scalar> dx = n.q1.backward(t1, g1, scratch1) + n.q2.backward(t2, g2, scratch2);
  const MatrixX<Scalar> d_action = dx.bottomRows(kAct);
  const MatrixX<Scalar> d_log_prob = MatrixX<Scalar>::Constant(1, batch, alpha * inv_b);
  r.grad = n.actor.zero_gradient();
  backward_sample(n.actor, n.head, s, d_action, d_log_prob, r.grad);
  return r;
}

/// Temperature loss -mean(log_alpha * (log pi + target_entropy)); returns dL/dlog_alpha.
template <typename Scalar>
Scalar alpha_gradient(Scalar mean_log_prob, Scalar target_entropy) {
  return -(mean_log_prob + target_entropy);
}

}  // namespace gridwall::sac

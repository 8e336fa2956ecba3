#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "gridwall/sac.hpp"

namespace gridwall {

/// Where a transition came from; kept for bookkeeping audits.
struct TransitionTag {
  std::int64_t episode = 0;
  int lap = 0;
};

/// Fixed-capacity ring buffer of (s, a, r, s', done) in float.
class ReplayBuffer {
 public:
  ReplayBuffer(int obs_dim, std::size_t capacity)
      : obs_dim_(obs_dim),
        capacity_(capacity),
        obs_(static_cast<std::size_t>(obs_dim) * capacity),
        next_obs_(static_cast<std::size_t>(obs_dim) * capacity),
        action_(sac::kAct * capacity),
        reward_(capacity),
        done_(capacity),
        tags_(capacity) {
    if (obs_dim <= 0 || capacity == 0) throw ContractError("ReplayBuffer: dimension and capacity must be positive");
  }

  void add(std::span<const float> obs, std::span<const float> action, float reward, std::span<const float> next_obs,
           bool done, TransitionTag tag = {}) {
    if (obs.size() != static_cast<std::size_t>(obs_dim_) || next_obs.size() != obs.size() ||
        action.size() != static_cast<std::size_t>(sac::kAct)) {
      throw ContractError("ReplayBuffer::add: dimension mismatch");
    }
    const std::size_t d = static_cast<std::size_t>(obs_dim_);
    std::copy(obs.begin(), obs.end(), obs_.begin() + static_cast<std::ptrdiff_t>(head_ * d));
    std::copy(next_obs.begin(), next_obs.end(), next_obs_.begin() + static_cast<std::ptrdiff_t>(head_ * d));
    std::copy(action.begin(), action.end(), action_.begin() + static_cast<std::ptrdiff_t>(head_ * sac::kAct));
    reward_[head_] = reward;
    done_[head_] = done ? 1.0f : 0.0f;
    tags_[head_] = tag;
    head_ = (head_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
  }

  template <typename Rng>
  sac::Batch<float> sample(std::size_t n, Rng& rng) const {
    if (size_ == 0) throw ContractError("ReplayBuffer::sample: buffer is empty");
    std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
    const auto d = static_cast<Eigen::Index>(obs_dim_);
    const auto b = static_cast<Eigen::Index>(n);
    sac::Batch<float> batch{MatrixX<float>(d, b), MatrixX<float>(sac::kAct, b), MatrixX<float>(1, b),
                            MatrixX<float>(d, b), MatrixX<float>(1, b)};
    for (Eigen::Index j = 0; j < b; ++j) {
      const std::size_t i = pick(rng);
      batch.obs.col(j) = Eigen::Map<const Eigen::VectorXf>(obs_.data() + i * obs_dim_, d);
      batch.next_obs.col(j) = Eigen::Map<const Eigen::VectorXf>(next_obs_.data() + i * obs_dim_, d);
      batch.action.col(j) = Eigen::Map<const Eigen::VectorXf>(action_.data() + i * sac::kAct, sac::kAct);
      batch.reward(0, j) = reward_[i];
      batch.done(0, j) = done_[i];
    }
    return batch;
  }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  int obs_dim() const { return obs_dim_; }
  bool done(std::size_t i) const { return done_.at(i) != 0.0f; }
  const TransitionTag& tag(std::size_t i) const { return tags_.at(i); }
  std::span<const float> obs(std::size_t i) const { return {obs_.data() + i * obs_dim_, static_cast<std::size_t>(obs_dim_)}; }
  std::span<const float> next_obs(std::size_t i) const {
    return {next_obs_.data() + i * obs_dim_, static_cast<std::size_t>(obs_dim_)};
  }

 private:
  int obs_dim_;
  std::size_t capacity_;
  std::vector<float> obs_, next_obs_, action_, reward_, done_;
  std::vector<TransitionTag> tags_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
};

}  // namespace gridwall

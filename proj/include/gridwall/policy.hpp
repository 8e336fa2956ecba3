#pragma once

// Pit-wall agent: a frozen single-car backbone produces the nominal action,
// an interaction module adds a bounded correction from the opponent's public
// data, and the sum is decoded into an environment action.

#include <array>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gridwall/env.hpp"
#include "gridwall/hash.hpp"
#include "gridwall/nn.hpp"

namespace gridwall {

using NormalizedAction = std::array<double, kActionDim>;

/// Network heads emit (mean, log_std) per action component.
inline constexpr int kHeadDim = 2 * static_cast<int>(kActionDim);

/// Per-feature affine normalization, x_n = (x - offset) / scale.
struct FeatureScaling {
  std::vector<double> offset;
  std::vector<double> scale;

  std::size_t size() const { return offset.size(); }

  template <typename Scalar>
  void normalize(std::span<const double> x, Scalar* out) const {
    if (x.size() != offset.size()) throw ContractError("FeatureScaling: dimension mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<Scalar>((x[i] - offset[i]) / scale[i]);
  }

  std::vector<double> normalize(std::span<const double> x) const {
    std::vector<double> out(x.size());
    normalize(x, out.data());
    return out;
  }

  std::vector<double> denormalize(std::span<const double> x) const {
    if (x.size() != offset.size()) throw ContractError("FeatureScaling: dimension mismatch");
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * scale[i] + offset[i];
    return out;
  }

  bool operator==(const FeatureScaling&) const = default;
};

/// Scales derived from physical ranges of the track, not from data.
inline FeatureScaling ego_scaling(const TrackConfig& c) {
  const double fuel_mass = c.fuel_unit_mass * c.e_f0 > 0.0 ? c.fuel_unit_mass * c.e_f0 : 1.0;
  const double race = c.n_laps * c.t0;
  const double pit = 0.5 * (c.t_pit_in + c.t_pit_out) + 5.0;
  return FeatureScaling{
      {0.5 * c.e_b_max, 0.5 * c.e_f0, c.m_dry + 0.5 * fuel_mass, 0.5 * race, 0.5, 2.0, 0.5 * c.wear_cap, 0.5,
       c.t0 + 5.0, 0.5 * c.n_laps},
      {0.5 * c.e_b_max, c.e_f0 > 0.0 ? 0.5 * c.e_f0 : 1.0, 0.5 * fuel_mass, 0.5 * race, 0.5, 1.0, 0.5 * c.wear_cap,
       0.5, pit, 0.5 * c.n_laps}};
}

inline FeatureScaling opponent_scaling(const TrackConfig& c) {
  return FeatureScaling{{0.5 * c.n_laps, 1.5, 0.5, 0.0}, {0.5 * c.n_laps, 1.5, 0.5, 5.0}};
}

inline Action compose(const NormalizedAction& a_nom, const NormalizedAction& delta_a, const TrackConfig& cfg) {
  std::array<double, kActionDim> s{};
  for (std::size_t i = 0; i < kActionDim; ++i) {
    const double v = a_nom[i] + delta_a[i];
    s[i] = v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v);
  }
  auto to_range = [](double x, const Range& r) { return r.lo + 0.5 * (x + 1.0) * (r.hi - r.lo); };
  Action a;
  a.d_ef = to_range(s[0], cfg.fuel_alloc_range);
  a.d_eb = to_range(s[1], cfg.batt_alloc_range);
  a.ps = static_cast<double>(static_cast<int>(decode_pit(1.5 * (s[2] + 1.0))));
  return a;
}

/// Inverse of the affine part of compose (no clipping): physical action -> normalized.
inline NormalizedAction normalize_action(const Action& a, const TrackConfig& cfg) {
  auto from_range = [](double x, const Range& r) { return r.hi > r.lo ? 2.0 * (x - r.lo) / (r.hi - r.lo) - 1.0 : 0.0; };
  return {from_range(a.d_ef, cfg.fuel_alloc_range), from_range(a.d_eb, cfg.batt_alloc_range), a.ps / 1.5 - 1.0};
}

struct PolicyDecision {
  NormalizedAction a_nom{};
  NormalizedAction delta_a{};
  Action action;
};

class Policy {
 public:
  Policy() = default;

  /// Fresh policy: random backbone, interaction module with a zero output layer.
  static Policy create(const TrackConfig& track, std::uint64_t seed, int hidden = 64, double delta = 1.0) {
    Policy p;
    std::mt19937_64 rng(seed);
    p.backbone_ = Mlp<float>({static_cast<int>(kEgoDim), hidden, hidden, kHeadDim});
    p.backbone_.initialize(rng);
    p.interaction_ = Mlp<float>({static_cast<int>(kObservationDim), hidden, hidden, kHeadDim});
    p.interaction_.initialize(rng);
    p.interaction_.zero_output_layer();
    p.ego_norm_ = ego_scaling(track);
    p.opp_norm_ = opponent_scaling(track);
    p.delta_ = delta;
    p.config_hash_ = config_hash(track);
    return p;
  }

  /// Deterministic nominal action in [-1, 1]^3.
  NormalizedAction backbone_forward(std::span<const double> ego) const {
    if (ego.size() != kEgoDim) throw ContractError("backbone_forward: ego observation must have 10 entries");
    Eigen::VectorXf x(kEgoDim);
    ego_norm_.normalize(ego, x.data());
    return squash(backbone_.forward(x), 1.0);
  }
  NormalizedAction backbone_forward(const EgoObservation& o) const { return backbone_forward(std::span(o.values)); }

  /// Deterministic correction in [-delta, delta]^3.
  NormalizedAction interaction_forward(std::span<const double> ego, std::span<const double> opp) const {
    if (ego.size() != kEgoDim || opp.size() != kOpponentDim) {
      throw ContractError("interaction_forward: expected 10 ego and 4 opponent entries");
    }
    Eigen::VectorXf x(kObservationDim);
    ego_norm_.normalize(ego, x.data());
    opp_norm_.normalize(opp, x.data() + kEgoDim);
    return squash(interaction_.forward(x), delta_);
  }
  NormalizedAction interaction_forward(const EgoObservation& o, const OpponentObservation& op) const {
    return interaction_forward(std::span(o.values), std::span(op.values));
  }

  PolicyDecision decide(const EgoObservation& o, const OpponentObservation& op, const TrackConfig& cfg) const {
    PolicyDecision d;
    d.a_nom = backbone_forward(o);
    d.delta_a = interaction_forward(o, op);
    d.action = compose(d.a_nom, d.delta_a, cfg);
    return d;
  }

  Action act(const EgoObservation& o, const OpponentObservation& op, const TrackConfig& cfg) const {
    return decide(o, op, cfg).action;
  }

  Action act_backbone_only(const EgoObservation& o, const TrackConfig& cfg) const {
    return compose(backbone_forward(o), NormalizedAction{}, cfg);
  }

  /// Identity of the frozen part: SHA-256 over the raw float parameters.
  std::string backbone_hash() const { return parameter_hash(backbone_); }
  std::string interaction_hash() const { return parameter_hash(interaction_); }

  Mlp<float>& backbone() { return backbone_; }
  const Mlp<float>& backbone() const { return backbone_; }
  Mlp<float>& interaction() { return interaction_; }
  const Mlp<float>& interaction() const { return interaction_; }
  const FeatureScaling& ego_norm() const { return ego_norm_; }
  const FeatureScaling& opp_norm() const { return opp_norm_; }
  double delta() const { return delta_; }
  const std::string& track_hash() const { return config_hash_; }

  // Provenance carried through checkpoints.
  json metadata = json::object();
  double elo = 1000.0;

  static std::string parameter_hash(const Mlp<float>& net) {
    const auto p = net.flat();
    return sha256_hex(std::as_bytes(std::span<const float>(p)));
  }

 private:
  friend Policy assemble_policy(Mlp<float>, Mlp<float>, FeatureScaling, FeatureScaling, double, std::string);

  static NormalizedAction squash(const Eigen::MatrixXf& out, double bound) {
    NormalizedAction a{};
    for (std::size_t i = 0; i < kActionDim; ++i) {
      a[i] = bound * static_cast<double>(std::tanh(out(static_cast<Eigen::Index>(i), 0)));
    }
    return a;
  }

  Mlp<float> backbone_;
  Mlp<float> interaction_;
  FeatureScaling ego_norm_;
  FeatureScaling opp_norm_;
  double delta_ = 1.0;
  std::string config_hash_;
};

inline Policy assemble_policy(Mlp<float> backbone, Mlp<float> interaction, FeatureScaling ego, FeatureScaling opp,
                              double delta, std::string track_hash) {
  if (backbone.input_dim() != static_cast<int>(kEgoDim) || backbone.output_dim() != kHeadDim ||
      interaction.input_dim() != static_cast<int>(kObservationDim) || interaction.output_dim() != kHeadDim) {
    throw ContractError("assemble_policy: network shapes do not match the observation/action contract");
  }
  if (ego.size() != kEgoDim || opp.size() != kOpponentDim) {
    throw ContractError("assemble_policy: normalization sizes do not match the observations");
  }
  Policy p;
  p.backbone_ = std::move(backbone);
  p.interaction_ = std::move(interaction);
  p.ego_norm_ = std::move(ego);
  p.opp_norm_ = std::move(opp);
  p.delta_ = delta;
  p.config_hash_ = std::move(track_hash);
  return p;
}

/// Deterministic driver backed by a shared, read-only policy.
inline Driver policy_driver(std::shared_ptr<const Policy> p, const TrackConfig& cfg) {
  return [p = std::move(p), cfg](const EgoObservation& o, const OpponentObservation& op) { return p->act(o, op, cfg); };
}

inline Driver backbone_driver(std::shared_ptr<const Policy> p, const TrackConfig& cfg) {
  return [p = std::move(p), cfg](const EgoObservation& o, const OpponentObservation&) {
    return p->act_backbone_only(o, cfg);
  };
}

}  // namespace gridwall

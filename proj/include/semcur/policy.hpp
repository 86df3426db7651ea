#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "semcur/rng.hpp"
#include "semcur/sim.hpp"

namespace semcur {

// Linear softmax policy with a linear value head, templated on the scalar so
// the objective can be evaluated in higher precision for gradient checks.
template <typename Scalar>
struct PolicyParamsT {
  using ActionMatrix = Eigen::Matrix<Scalar, kNumActions, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  ActionMatrix action_weights;
  Vector value_weights;
  std::int64_t updates = 0;

  static PolicyParamsT zeros(Eigen::Index feature_dim) {
    return {ActionMatrix::Zero(kNumActions, feature_dim), Vector::Zero(feature_dim), 0};
  }
  Eigen::Index feature_dim() const { return value_weights.size(); }
  bool all_finite() const { return action_weights.allFinite() && value_weights.allFinite(); }

  template <typename Other>
  PolicyParamsT<Other> cast() const {
    return {action_weights.template cast<Other>(), value_weights.template cast<Other>(), updates};
  }
};

using PolicyParams = PolicyParamsT<double>;

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Derived::RowsAtCompileTime, 1> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = logits.maxCoeff();
  Eigen::Matrix<Scalar, Derived::RowsAtCompileTime, 1> e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& logits) {
  using std::exp;
  using std::log;
  const auto m = logits.maxCoeff();
  return m + log((logits.array() - m).exp().sum());
}

struct ActOutput {
  Action action = Action::Forward;
  double log_prob = 0.0;
  double value = 0.0;
  Eigen::Vector3d probs = Eigen::Vector3d::Constant(1.0 / 3.0);
};

// Samples from softmax(action_weights * features) with inverse-CDF on one
// uniform draw.
ActOutput act(const PolicyParams& params, const Eigen::VectorXd& features, Rng& rng);

struct TrainConfig {
  int horizon = 100;
  int minibatches = 36;
  int epochs = 1;
  double entropy_coeff = 0.001;
  double value_coeff = 0.5;
  double lr = 1e-5;
  double clip = 0.2;
  double gamma = 0.99;
  int episode_len = 500;
  int num_envs = 0;  // 0: one per scene
  std::int64_t total_steps = 0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct RolloutStep {
  Eigen::VectorXd features;
  Action action = Action::Forward;
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool done = false;  // episode ended after this step
};

// A contiguous run of steps from one environment. bootstrap_value is the
// value estimate of the state following the last step (ignored if that step
// ended the episode).
struct RolloutSegment {
  std::vector<RolloutStep> steps;
  double bootstrap_value = 0.0;
};

// Flattened training batch. Columns of `features` are samples.
struct Batch {
  Eigen::MatrixXd features;
  std::vector<int> actions;
  Eigen::VectorXd old_log_probs;
  Eigen::VectorXd returns;
  Eigen::VectorXd advantages;  // normalized
  Eigen::VectorXd old_values;

  Eigen::Index size() const { return features.cols(); }
};

// Discounted returns bootstrapped at segment ends; advantages are
// return - old value, normalized to zero mean and unit variance.
Batch make_batch(const std::vector<RolloutSegment>& segments, double gamma);

template <typename Scalar>
struct ObjectiveTerms {
  Scalar surrogate{0};
  Scalar entropy{0};
  Scalar value_loss{0};
  Scalar total{0};  // surrogate + entropy_coeff * entropy - value_coeff * value_loss
};

// Objective to be maximized over samples [begin, end) of the batch.
template <typename Scalar>
ObjectiveTerms<Scalar> ppo_objective(const PolicyParamsT<Scalar>& params, const Batch& batch, Eigen::Index begin,
                                     Eigen::Index end, const TrainConfig& cfg) {
  using std::exp;
  using std::log;
  ObjectiveTerms<Scalar> t;
  const Scalar lo = Scalar(1.0 - cfg.clip);
  const Scalar hi = Scalar(1.0 + cfg.clip);
  for (Eigen::Index i = begin; i < end; ++i) {
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> f = batch.features.col(i).template cast<Scalar>();
    const Eigen::Matrix<Scalar, kNumActions, 1> z = params.action_weights * f;
    const Scalar lse = log_sum_exp(z);
    const Eigen::Matrix<Scalar, kNumActions, 1> logp = z.array() - lse;
    const Scalar ratio = exp(logp(batch.actions[static_cast<std::size_t>(i)]) - Scalar(batch.old_log_probs(i)));
    const Scalar adv = Scalar(batch.advantages(i));
    const Scalar clipped = ratio < lo ? lo : (ratio > hi ? hi : ratio);
    t.surrogate += std::min(ratio * adv, clipped * adv);
    t.entropy -= (logp.array().exp() * logp.array()).sum();
    const Scalar v = params.value_weights.dot(f);
    const Scalar err = v - Scalar(batch.returns(i));
    t.value_loss += err * err;
  }
  const Scalar n = Scalar(static_cast<double>(end - begin));
  t.surrogate /= n;
  t.entropy /= n;
  t.value_loss /= n;
  t.total = t.surrogate + Scalar(cfg.entropy_coeff) * t.entropy - Scalar(cfg.value_coeff) * t.value_loss;
  return t;
}

// Analytic gradient of ppo_objective(...).total with respect to both heads.
PolicyParams ppo_gradient(const PolicyParams& params, const Batch& batch, Eigen::Index begin, Eigen::Index end,
                          const TrainConfig& cfg);

struct UpdateStats {
  double mean_reward = 0.0;
  double entropy = 0.0;
  double value_loss = 0.0;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One clipped policy-gradient update: `epochs` passes of fixed-step gradient
// ascent over contiguous minibatches, in rollout order.
PolicyParams policy_update(const PolicyParams& params, const std::vector<RolloutSegment>& rollouts,
                           const TrainConfig& cfg, UpdateStats* stats = nullptr);

nlohmann::json to_json(const PolicyParams& params);
PolicyParams policy_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace semcur

#include "semcur/policy.hpp"

#include <algorithm>
#include <sstream>

namespace semcur {

ActOutput act(const PolicyParams& params, const Eigen::VectorXd& features, Rng& rng) {
  const Eigen::Vector3d z = params.action_weights * features;
  ActOutput out;
  out.probs = softmax(z);
  const double lse = log_sum_exp(z);
  const double u = uniform01(rng);
  int a = kNumActions - 1;
  double acc = 0.0;
  for (int k = 0; k < kNumActions; ++k) {
    acc += out.probs(k);
    if (u < acc) {
      a = k;
      break;
    }
  }
  out.action = static_cast<Action>(a);
  out.log_prob = z(a) - lse;
  out.value = params.value_weights.dot(features);
  return out;
}

void TrainConfig::validate() const {
  if (horizon < 1 || minibatches < 1 || epochs < 1 || episode_len < 1)
    throw std::invalid_argument("train config: horizon, minibatches, epochs, episode_len must be >= 1");
  if (!(entropy_coeff >= 0.0 && value_coeff > 0.0 && lr >= 0.0 && gamma > 0.0 && gamma <= 1.0))
    throw std::invalid_argument("train config: coefficients out of range");
  if (!(clip > 0.0 && clip < 1.0)) throw std::invalid_argument("train config: clip must be in (0, 1)");
  if (num_envs < 0 || total_steps < 0) throw std::invalid_argument("train config: negative counts");
}

Batch make_batch(const std::vector<RolloutSegment>& segments, double gamma) {
  Eigen::Index n = 0;
  Eigen::Index dim = 0;
  for (const auto& s : segments) {
    n += static_cast<Eigen::Index>(s.steps.size());
    if (!s.steps.empty()) dim = s.steps.front().features.size();
  }
  Batch b;
  b.features.resize(dim, n);
  b.actions.resize(static_cast<std::size_t>(n));
  b.old_log_probs.resize(n);
  b.returns.resize(n);
  b.old_values.resize(n);

  Eigen::Index col = 0;
  for (const auto& s : segments) {
    const auto len = static_cast<Eigen::Index>(s.steps.size());
    double ret = s.bootstrap_value;
    for (Eigen::Index k = len - 1; k >= 0; --k) {
      const RolloutStep& st = s.steps[static_cast<std::size_t>(k)];
      if (st.done) ret = 0.0;
      ret = st.reward + gamma * ret;
      b.returns(col + k) = ret;
    }
    for (Eigen::Index k = 0; k < len; ++k) {
      const RolloutStep& st = s.steps[static_cast<std::size_t>(k)];
      b.features.col(col + k) = st.features;
      b.actions[static_cast<std::size_t>(col + k)] = static_cast<int>(st.action);
      b.old_log_probs(col + k) = st.log_prob;
      b.old_values(col + k) = st.value;
    }
    col += len;
  }

  b.advantages = b.returns - b.old_values;
  if (n > 0) {
    const double mean = b.advantages.mean();
    const double var = (b.advantages.array() - mean).square().mean();
    b.advantages = (b.advantages.array() - mean) / (std::sqrt(var) + 1e-8);
  }
  return b;
}

PolicyParams ppo_gradient(const PolicyParams& params, const Batch& batch, Eigen::Index begin, Eigen::Index end,
                          const TrainConfig& cfg) {
  PolicyParams g = PolicyParams::zeros(params.feature_dim());
  const double lo = 1.0 - cfg.clip;
  const double hi = 1.0 + cfg.clip;
  const double n = static_cast<double>(end - begin);
  for (Eigen::Index i = begin; i < end; ++i) {
    const auto f = batch.features.col(i);
    const Eigen::Vector3d z = params.action_weights * f;
    const Eigen::Vector3d p = softmax(z);
    const Eigen::Vector3d logp = z.array() - log_sum_exp(z);
    const int a = batch.actions[static_cast<std::size_t>(i)];
    const double ratio = std::exp(logp(a) - batch.old_log_probs(i));
    const double adv = batch.advantages(i);
    const double clipped = std::clamp(ratio, lo, hi);

    // d/dz of the per-sample objective.
    Eigen::Vector3d dz = Eigen::Vector3d::Zero();
    if (ratio * adv <= clipped * adv) {
      Eigen::Vector3d dlogp = -p;
      dlogp(a) += 1.0;
      dz += adv * ratio * dlogp;
    }
    const double entropy = -(p.array() * logp.array()).sum();
    dz += cfg.entropy_coeff * (-(p.array() * (logp.array() + entropy))).matrix();

    g.action_weights.noalias() += dz * f.transpose();
    const double err = params.value_weights.dot(f) - batch.returns(i);
    g.value_weights.noalias() -= (cfg.value_coeff * 2.0 * err) * f;
  }
  g.action_weights /= n;
  g.value_weights /= n;
  return g;
}

PolicyParams policy_update(const PolicyParams& params, const std::vector<RolloutSegment>& rollouts,
                           const TrainConfig& cfg, UpdateStats* stats) {
  const Batch batch = make_batch(rollouts, cfg.gamma);
  PolicyParams next = params;
  const Eigen::Index n = batch.size();
  if (n == 0) return next;

  const Eigen::Index n_mb = std::min<Eigen::Index>(cfg.minibatches, n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (Eigen::Index m = 0; m < n_mb; ++m) {
      const Eigen::Index begin = m * n / n_mb;
      const Eigen::Index end = (m + 1) * n / n_mb;
      const PolicyParams g = ppo_gradient(next, batch, begin, end, cfg);
      if (!g.all_finite()) {
        std::ostringstream msg;
        msg << "non-finite policy gradient at update " << params.updates << ", epoch " << epoch << ", minibatch "
            << m << " (samples " << begin << ".." << end << ")";
        throw NonFiniteGradient(msg.str());
      }
      next.action_weights += cfg.lr * g.action_weights;
      next.value_weights += cfg.lr * g.value_weights;
    }
  }
  next.updates = params.updates + 1;

  if (stats) {
    const auto terms = ppo_objective(next, batch, 0, n, cfg);
    double reward = 0.0;
    for (const auto& s : rollouts)
      for (const auto& st : s.steps) reward += st.reward;
    stats->mean_reward = reward / static_cast<double>(n);
    stats->entropy = terms.entropy;
    stats->value_loss = terms.value_loss;
  }
  return next;
}

nlohmann::json to_json(const PolicyParams& params) {
  nlohmann::json w = nlohmann::json::array();
  for (int a = 0; a < kNumActions; ++a) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < params.feature_dim(); ++k) row.push_back(params.action_weights(a, k));
    w.push_back(std::move(row));
  }
  nlohmann::json v = nlohmann::json::array();
  for (Eigen::Index k = 0; k < params.feature_dim(); ++k) v.push_back(params.value_weights(k));
  return {{"feature_dim", params.feature_dim()}, {"action_weights", w}, {"value_weights", v}, {"updates", params.updates}};
}

PolicyParams policy_from_json(const nlohmann::json& j) {
  const auto dim = j.at("feature_dim").get<Eigen::Index>();
  PolicyParams p = PolicyParams::zeros(dim);
  const auto& w = j.at("action_weights");
  if (w.size() != kNumActions) throw std::invalid_argument("policy json: expected 3 action rows");
  for (int a = 0; a < kNumActions; ++a) {
    if (static_cast<Eigen::Index>(w.at(static_cast<std::size_t>(a)).size()) != dim)
      throw std::invalid_argument("policy json: action row length mismatch");
    for (Eigen::Index k = 0; k < dim; ++k) w[static_cast<std::size_t>(a)][static_cast<std::size_t>(k)].get_to(p.action_weights(a, k));
  }
  const auto& v = j.at("value_weights");
  if (static_cast<Eigen::Index>(v.size()) != dim) throw std::invalid_argument("policy json: value length mismatch");
  for (Eigen::Index k = 0; k < dim; ++k) v[static_cast<std::size_t>(k)].get_to(p.value_weights(k));
  p.updates = j.at("updates").get<std::int64_t>();
  return p;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"horizon", c.horizon},         {"minibatches", c.minibatches}, {"epochs", c.epochs},
          {"entropy_coeff", c.entropy_coeff}, {"value_coeff", c.value_coeff}, {"lr", c.lr},
          {"clip", c.clip},               {"gamma", c.gamma},             {"episode_len", c.episode_len},
          {"num_envs", c.num_envs},       {"total_steps", c.total_steps}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.horizon = j.value("horizon", c.horizon);
  c.minibatches = j.value("minibatches", c.minibatches);
  c.epochs = j.value("epochs", c.epochs);
  c.entropy_coeff = j.value("entropy_coeff", c.entropy_coeff);
  c.value_coeff = j.value("value_coeff", c.value_coeff);
  c.lr = j.value("lr", c.lr);
  c.clip = j.value("clip", c.clip);
  c.gamma = j.value("gamma", c.gamma);
  c.episode_len = j.value("episode_len", c.episode_len);
  c.num_envs = j.value("num_envs", c.num_envs);
  c.total_steps = j.value("total_steps", c.total_steps);
  return c;
}

}  // namespace semcur

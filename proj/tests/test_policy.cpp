#include <doctest.h>

#include <array>
#include <cmath>
#include <limits>

#include "checks.hpp"
#include "semcur/harness.hpp"
#include "semcur/policy.hpp"

using namespace semcur;
using namespace semcur::testing;

TEST_CASE("zero weights give a uniform policy") {
  const PolicyParams p = PolicyParams::zeros(6);
  Rng rng(1);
  const ActOutput o = act(p, Eigen::VectorXd::Random(6), rng);
  for (int a = 0; a < kNumActions; ++a) CHECK(o.probs(a) == doctest::Approx(1.0 / 3.0));
  CHECK(o.log_prob == doctest::Approx(std::log(1.0 / 3.0)));
  CHECK(o.value == 0.0);
}

TEST_CASE("softmax is stable for large logits") {
  const Eigen::Vector3d p = softmax(Eigen::Vector3d(1000.0, 0.0, -1000.0));
  CHECK(p.allFinite());
  CHECK(p(0) == doctest::Approx(1.0));
  CHECK(log_sum_exp(Eigen::Vector3d(1000.0, 1000.0, 1000.0)) == doctest::Approx(1000.0 + std::log(3.0)));
}

TEST_CASE("sampled action frequencies match the softmax") {
  PolicyParams p = PolicyParams::zeros(2);
  p.action_weights << 0.5, -0.2, -0.3, 0.4, 0.1, 0.0;
  const Eigen::VectorXd f = Eigen::Vector2d(1.0, 0.7);
  const Eigen::Vector3d expected = softmax(Eigen::Vector3d(p.action_weights * f));
  Rng rng(42);
  std::array<int, 3> counts{};
  constexpr int kDraws = 200000;
  for (int i = 0; i < kDraws; ++i) {
    const ActOutput o = act(p, f, rng);
    CHECK(o.log_prob == doctest::Approx(std::log(expected(static_cast<int>(o.action)))));
    ++counts[static_cast<std::size_t>(o.action)];
  }
  for (int a = 0; a < kNumActions; ++a)
    CHECK(std::abs(counts[static_cast<std::size_t>(a)] / double(kDraws) - expected(a)) < 0.01);
}

TEST_CASE("returns: discounting, bootstrap and episode ends") {
  const Eigen::VectorXd f = Eigen::VectorXd::Ones(1);
  RolloutSegment seg;
  seg.steps = {{f, Action::Forward, 0.0, 1.0, 0.0, false},
               {f, Action::Forward, 0.0, 2.0, 0.0, true},
               {f, Action::Forward, 0.0, 3.0, 0.0, false}};
  seg.bootstrap_value = 10.0;
  const Batch b = make_batch({seg}, 0.5);
  CHECK(b.returns(2) == doctest::Approx(3.0 + 0.5 * 10.0));
  CHECK(b.returns(1) == doctest::Approx(2.0));
  CHECK(b.returns(0) == doctest::Approx(1.0 + 0.5 * 2.0));
  CHECK(b.advantages.mean() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::sqrt(b.advantages.array().square().mean()) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("analytic gradient matches finite differences") {
  Rng rng(7);
  TrainConfig cfg;
  cfg.entropy_coeff = 0.05;
  for (int trial = 0; trial < 10; ++trial) {
    const PolicyParams p = random_params(rng, 5);
    const Batch b = random_batch(rng, p, 40);
    int checked = 0;
    CHECK(gradient_check(p, b, cfg, &checked) <= 1e-4);
    CHECK(checked > 10);
  }
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  Rng rng(3);
  PolicyParams p = random_params(rng, 4);
  RolloutSegment seg;
  for (int i = 0; i < 50; ++i) {
    const Eigen::VectorXd f = Eigen::VectorXd::Random(4);
    const ActOutput o = act(p, f, rng);
    seg.steps.push_back({f, o.action, o.log_prob, uniform01(rng), o.value, false});
  }
  TrainConfig cfg;
  cfg.lr = 0.0;
  const PolicyParams q = policy_update(p, {seg}, cfg);
  CHECK(q.action_weights == p.action_weights);
  CHECK(q.value_weights == p.value_weights);
  CHECK(q.updates == p.updates + 1);
}

TEST_CASE("zero advantages and no entropy bonus leave the action head unchanged") {
  Rng rng(4);
  PolicyParams p = random_params(rng, 3);
  RolloutSegment seg;
  for (int i = 0; i < 30; ++i) {
    const Eigen::VectorXd f = Eigen::VectorXd::Random(3);
    const ActOutput o = act(p, f, rng);
    seg.steps.push_back({f, o.action, o.log_prob, 1.0, 0.0, true});  // every return equals every value + 1
  }
  TrainConfig cfg;
  cfg.entropy_coeff = 0.0;
  cfg.lr = 0.1;
  const PolicyParams q = policy_update(p, {seg}, cfg);
  CHECK((q.action_weights - p.action_weights).norm() < 1e-6);
  CHECK((q.value_weights - p.value_weights).norm() > 0.0);
}

TEST_CASE("non-finite gradients are reported") {
  PolicyParams p = PolicyParams::zeros(2);
  RolloutSegment seg;
  Eigen::VectorXd f(2);
  f << 1.0, std::numeric_limits<double>::infinity();
  seg.steps.push_back({f, Action::Forward, 0.0, 1.0, 0.0, true});
  seg.steps.push_back({Eigen::Vector2d(1.0, 0.0), Action::TurnLeft, 0.0, 0.0, 0.0, true});
  CHECK_THROWS_AS(policy_update(p, {seg}, TrainConfig{}), NonFiniteGradient);
}

TEST_CASE("bandit: the desk optimizer learns the paying arm") {
  const TrainConfig cfg = ExperimentConfig::desk_train_config();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const int u = bandit_updates(cfg, 200, seed);
    CHECK(u >= 0);
    CHECK(u <= 200);
  }
}

TEST_CASE("policy and train config JSON round trip") {
  Rng rng(9);
  PolicyParams p = random_params(rng, 7);
  p.updates = 12;
  const PolicyParams q = policy_from_json(nlohmann::json::parse(to_json(p).dump()));
  CHECK(q.action_weights == p.action_weights);
  CHECK(q.value_weights == p.value_weights);
  CHECK(q.updates == 12);

  TrainConfig c;
  c.lr = 0.125;
  c.total_steps = 4321;
  CHECK(train_config_from_json(to_json(c)) == c);
  TrainConfig bad;
  bad.clip = 1.5;
  CHECK_THROWS(bad.validate());
}

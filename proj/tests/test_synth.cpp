#include <cmath>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "cbandit/error.hpp"
#include "cbandit/policy.hpp"
#include "test_util.hpp"

using namespace cbandit;
using cbandit::testing::make_schema;
using cbandit::testing::small_synth;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// One binary feature with rate q, K = 2, no noise and no quadratic terms.
GroundTruth one_feature_truth(double q, Eigen::Vector2d behavior_coef, Eigen::Vector2d behavior_int,
                              Eigen::Vector2d reward_coef, Eigen::Vector2d reward_int) {
  return GroundTruth(make_schema(1, 0, 2), {q}, behavior_coef, behavior_int, reward_coef, reward_int,
                     Eigen::MatrixXd::Zero(2, 1), 0.0, {0});
}

class ConstantArm final : public DeterministicPolicy {
 public:
  ConstantArm(std::size_t k, std::size_t arm) : k_(k), arm_(arm) {}
  std::size_t num_arms() const override { return k_; }
  std::size_t decide(std::span<const double>) const override { return arm_; }

 private:
  std::size_t k_;
  std::size_t arm_;
};

}  // namespace

TEST_CASE("uniform behavior policy gives arm frequencies near 1/K") {
  auto cfg = small_synth(100000, 10, 1);
  cfg.behavior_strength = 0.0;
  const SynthResult env = generate(cfg);
  for (const auto c : env.data.arm_counts()) CHECK(std::abs(static_cast<double>(c) / 100000.0 - 0.1) < 0.01);
}

TEST_CASE("constant half reward gives a reward rate near 1/2") {
  const GroundTruth truth = one_feature_truth(0.4, {0.5, -0.5}, {0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0});
  const Dataset d = sample_dataset(truth, 100000, 3);
  double ones = 0.0;
  for (const auto& s : d.samples()) ones += s.reward;
  CHECK(std::abs(ones / 100000.0 - 0.5) < 0.01);
  for (const auto& s : d.samples()) CHECK(*s.effectiveness_raw == 10.0 * s.reward);
}

TEST_CASE("generation is deterministic per seed") {
  const auto cfg = small_synth(2000, 5, 42);
  const SynthResult a = generate(cfg);
  const SynthResult b = generate(cfg);
  CHECK(a.data == b.data);
  CHECK(a.truth.to_json() == b.truth.to_json());
  auto other = cfg;
  other.seed = 43;
  CHECK_FALSE(generate(other).data == a.data);
}

TEST_CASE("true value of any policy under constant reward is that constant") {
  const double c = 0.3;
  const double logit_c = std::log(c / (1.0 - c));
  const GroundTruth truth = one_feature_truth(0.6, {1.0, -1.0}, {0.2, 0.0}, {0.0, 0.0}, {logit_c, logit_c});
  const auto random = make_baseline(BaselineKind::kRandom, 2);
  const TrueBehaviorPolicy behavior(truth);
  const ConstantArm arm1(2, 1);
  for (const Policy* p : std::initializer_list<const Policy*>{&random, &behavior, &arm1}) {
    const TrueValue v = true_value(*p, truth, 5000, 9);
    CHECK(v.value == doctest::Approx(c).epsilon(1e-12));
    CHECK(v.std_error == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("uniform policy value matches hand integration on a one-feature instance") {
  // mu(x, a) = sigmoid(alpha_a + beta_a x) with x ~ Bernoulli(q).
  const double q = 0.35;
  const Eigen::Vector2d beta(1.2, -0.8), alpha(-0.4, 0.6);
  const GroundTruth truth = one_feature_truth(q, {0.0, 0.0}, {0.0, 0.0}, beta, alpha);
  double closed = 0.0;
  for (int a = 0; a < 2; ++a) closed += 0.5 * ((1 - q) * sigmoid(alpha[a]) + q * sigmoid(alpha[a] + beta[a]));
  const TrueValue v = true_value(make_baseline(BaselineKind::kRandom, 2), truth, 200000, 5);
  CHECK(std::abs(v.value - closed) < 3.0 * v.std_error + 1e-12);

  // The oracle takes the better arm in each cell.
  double best = 0.0;
  for (const double x : {0.0, 1.0}) {
    const double m = std::max(sigmoid(alpha[0] + beta[0] * x), sigmoid(alpha[1] + beta[1] * x));
    best += (x == 1.0 ? q : 1 - q) * m;
  }
  const TrueValue o = true_value(OraclePolicy(truth), truth, 200000, 5);
  CHECK(std::abs(o.value - best) < 3.0 * o.std_error + 1e-12);
}

TEST_CASE("oracle policy upper-bounds random and behavior") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto cfg = small_synth(10, 6, seed);
    cfg.behavior_strength = 1.0;
    const GroundTruth truth = make_ground_truth(cfg);
    const TrueValue oracle = true_value(OraclePolicy(truth), truth, 50000, 1);
    for (const TrueValue other : {true_value(make_baseline(BaselineKind::kRandom, 6), truth, 50000, 1),
                                  true_value(TrueBehaviorPolicy(truth), truth, 50000, 1)}) {
      CHECK(oracle.value >= other.value - 3.0 * std::hypot(oracle.std_error, other.std_error));
    }
  }
}

TEST_CASE("conditional action frequencies converge to the behavior policy") {
  const Eigen::Vector2d bc(0.0, 2.0), bi(0.0, -0.5);
  const GroundTruth truth = one_feature_truth(0.5, bc, bi, {0.0, 0.0}, {0.0, 0.0});
  std::vector<double> pb(2);
  double prev_err = 1.0;
  for (const std::size_t t : {1000, 100000}) {
    const Dataset d = sample_dataset(truth, t, 17);
    double err = 0.0;
    for (const double x : {0.0, 1.0}) {
      truth.behavior_probabilities(std::vector<double>{x}, pb);
      double n = 0.0, arm1 = 0.0;
      for (const auto& s : d.samples()) {
        if (s.context[0] == x) {
          n += 1.0;
          arm1 += s.action == 1 ? 1.0 : 0.0;
        }
      }
      err = std::max(err, std::abs(arm1 / n - pb[1]));
    }
    if (t == 100000) {
      CHECK(err < 0.01);
      CHECK(err <= prev_err);
    }
    prev_err = err;
  }
}

TEST_CASE("ground truth invariants: simplex behavior and rewards in (0,1)") {
  auto cfg = small_synth(2000, 7, 8);
  cfg.noise_level = 0.1;
  cfg.misspecified = true;
  const SynthResult env = generate(cfg);
  const Eigen::MatrixXd p = env.truth.propensity_matrix(env.data);
  const Eigen::MatrixXd mu = env.truth.reward_matrix(env.data);
  for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(p.row(i).sum() == doctest::Approx(1.0));
  CHECK(p.minCoeff() > 0.0);
  CHECK(mu.minCoeff() >= 0.1);
  CHECK(mu.maxCoeff() <= 0.9);
  CHECK(env.truth.informative_features().size() == 2);
  const Eigen::MatrixXd noisy = env.truth.perturbed_propensity_matrix(env.data, 0.5, 3);
  for (Eigen::Index i = 0; i < noisy.rows(); ++i) CHECK(noisy.row(i).sum() == doctest::Approx(1.0));
}

TEST_CASE("ground truth and config round-trip through JSON") {
  const SynthResult env = generate(small_synth(300, 4, 5));
  const GroundTruth back = GroundTruth::from_json(env.truth.to_json());
  CHECK(back.propensity_matrix(env.data) == env.truth.propensity_matrix(env.data));
  CHECK(back.reward_matrix(env.data) == env.truth.reward_matrix(env.data));

  const auto cfg = small_synth(300, 4, 5);
  const nlohmann::json j = cfg;
  const auto again = j.get<SynthConfig>();
  CHECK(nlohmann::json(again) == j);
  nlohmann::json unknown = j;
  unknown["bogus"] = 1;
  CHECK_THROWS(unknown.get<SynthConfig>());
}

TEST_CASE("synth config validation") {
  auto cfg = small_synth(100, 4, 1);
  CHECK_NOTHROW(cfg.validate());
  cfg.num_arms = 1;
  CHECK_THROWS(cfg.validate());
  cfg = small_synth(0, 4, 1);
  CHECK_THROWS(cfg.validate());
  cfg = small_synth(100, 4, 1);
  cfg.num_informative = 50;
  CHECK_THROWS(cfg.validate());
  cfg = small_synth(100, 4, 1);
  cfg.noise_level = 0.6;
  CHECK_THROWS(cfg.validate());
  CHECK_THROWS(true_value(make_baseline(BaselineKind::kRandom, 4), make_ground_truth(small_synth(10, 4, 1)), 0, 1));
}

TEST_CASE("SplitMix draws are reproducible and roughly standard") {
  SplitMix a(99), b(99);
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double z = a.normal();
    CHECK(z == b.normal());
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / 100000.0) < 0.02);
  CHECK(std::abs(sq / 100000.0 - 1.0) < 0.02);
  const std::vector<double> probs = {0.0, 1.0, 0.0};
  for (int i = 0; i < 100; ++i) CHECK(a.categorical(probs) == 1);
}

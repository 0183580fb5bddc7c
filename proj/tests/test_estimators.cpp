#include <algorithm>
#include <cmath>
#include <numeric>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "cbandit/error.hpp"
#include "cbandit/estimators.hpp"
#include "test_util.hpp"

using namespace cbandit;
using cbandit::testing::random_simplex_rows;
using cbandit::testing::small_synth;

namespace {

struct Instance {
  Eigen::MatrixXd policy;
  Eigen::MatrixXd propensities;
  Eigen::MatrixXd reward_hat;
  std::vector<std::size_t> actions;
  Eigen::VectorXd rewards;
};

Instance random_instance(Eigen::Index t, Eigen::Index k, std::uint64_t seed) {
  SplitMix rng(seed);
  Instance in;
  in.policy = random_simplex_rows(t, k, rng);
  in.propensities = random_simplex_rows(t, k, rng);
  // Push a few propensities below typical tau values.
  for (Eigen::Index i = 0; i < t; i += 7) in.propensities(i, i % k) = 0.005 * rng.uniform();
  in.reward_hat = Eigen::MatrixXd(t, k);
  for (auto& v : in.reward_hat.reshaped()) v = rng.uniform();
  in.rewards = Eigen::VectorXd(t);
  for (Eigen::Index i = 0; i < t; ++i) {
    in.actions.push_back(rng.next() % static_cast<std::uint64_t>(k));
    in.rewards[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
  }
  return in;
}

Eigen::MatrixXd one_hot(std::size_t k, std::size_t arm) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(k));
  m(0, static_cast<Eigen::Index>(arm)) = 1.0;
  return m;
}

}  // namespace

TEST_CASE("single-sample arithmetic for IPW, trimming and DR") {
  const std::vector<std::size_t> a = {0};
  const Eigen::VectorXd r = Eigen::VectorXd::Constant(1, 1.0);
  Eigen::MatrixXd p(1, 2);
  p << 0.5, 0.5;
  CHECK(value_tipw(one_hot(2, 0), {a, r}, p, 0.0).mean == 2.0);
  CHECK(value_tipw(one_hot(2, 0), {a, r}, p, 0.0).kind == EstimatorKind::kIPW);

  Eigen::MatrixXd small(1, 10);
  small.setConstant(0.11);
  small(0, 0) = 0.01;
  const auto trimmed = value_tipw(one_hot(10, 0), {a, r}, small, 0.02);
  CHECK(trimmed.contributions[0] == doctest::Approx(50.0));
  CHECK(trimmed.kind == EstimatorKind::kTIPW);

  Eigen::MatrixXd rhat(1, 2);
  rhat << 0.4, 0.9;
  CHECK(value_dr(one_hot(2, 0), {a, r}, rhat, p, 0.0).mean == doctest::Approx(1.6));
}

TEST_CASE("direct method examples") {
  SplitMix rng(3);
  const Eigen::MatrixXd rhat = Eigen::MatrixXd::Constant(40, 4, 0.5);
  Eigen::MatrixXd det = Eigen::MatrixXd::Zero(40, 4);
  for (Eigen::Index i = 0; i < 40; ++i) det(i, i % 4) = 1.0;
  CHECK(value_dm(det, rhat).mean == doctest::Approx(0.5));
  CHECK(value_dm(det, rhat).std_error == doctest::Approx(0.0));

  Eigen::MatrixXd varied(40, 4);
  for (auto& v : varied.reshaped()) v = rng.uniform();
  const Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(40, 4, 0.25);
  double oracle = 0.0;
  for (Eigen::Index i = 0; i < 40; ++i) oracle += varied.row(i).mean();
  CHECK(value_dm(uniform, varied).mean == doctest::Approx(oracle / 40.0));
}

TEST_CASE("mean is the average of contributions and std_error is SD over sqrt(T)") {
  const Instance in = random_instance(300, 5, 1);
  for (const auto& est : {value_dm(in.policy, in.reward_hat),
                          value_tipw(in.policy, {in.actions, in.rewards}, in.propensities, 0.05),
                          value_dr(in.policy, {in.actions, in.rewards}, in.reward_hat,
                                   in.propensities, 0.05)}) {
    const double n = static_cast<double>(est.contributions.size());
    const double mean = std::accumulate(est.contributions.begin(), est.contributions.end(), 0.0) / n;
    double ss = 0.0;
    for (const double c : est.contributions) ss += (c - mean) * (c - mean);
    CHECK(est.mean == doctest::Approx(mean));
    CHECK(est.std_error == doctest::Approx(std::sqrt(ss / (n - 1)) / std::sqrt(n)));
    CHECK(est.std_error >= 0.0);
  }
}

TEST_CASE("tIPW at tau = 0 is classic IPW and is non-increasing in tau") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Instance in = random_instance(200, 5, seed);
    double ipw = 0.0;
    for (Eigen::Index i = 0; i < 200; ++i) {
      const auto a = static_cast<Eigen::Index>(in.actions[static_cast<std::size_t>(i)]);
      ipw += in.policy(i, a) * in.rewards[i] / in.propensities(i, a);
    }
    CHECK(value_tipw(in.policy, {in.actions, in.rewards}, in.propensities, 0.0).mean ==
          doctest::Approx(ipw / 200.0));
    double prev = std::numeric_limits<double>::infinity();
    for (double tau = 0.0; tau < 0.2; tau += 0.01) {
      const double v = value_tipw(in.policy, {in.actions, in.rewards}, in.propensities, tau).mean;
      CHECK(v <= prev);
      prev = v;
    }
  }
}

TEST_CASE("importance weights are bounded by 1/tau") {
  const Instance in = random_instance(500, 4, 9);
  for (const double tau : {0.01, 0.05, 0.2}) {
    for (const double w : importance_weights(in.policy, in.actions, in.propensities, tau)) {
      CHECK(w <= 1.0 / tau);
    }
  }
  CHECK_THROWS_AS(importance_weights(in.policy, in.actions, in.propensities, 0.25), TauBoundError);
  CHECK_THROWS_AS(importance_weights(in.policy, in.actions, in.propensities, -0.01), TauBoundError);
}

TEST_CASE("trimming usually lowers the standard error but not always") {
  // Random instances with tiny propensities: trimming shrinks the spread.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Instance in = random_instance(400, 5, 100 + seed);
    const auto untrimmed = value_tipw(in.policy, {in.actions, in.rewards}, in.propensities, 0.0);
    const auto trimmed = value_tipw(in.policy, {in.actions, in.rewards}, in.propensities, 0.05);
    CHECK(trimmed.std_error <= untrimmed.std_error);
  }
  // Two equal contributions where trimming touches only one: the spread grows from zero.
  const std::vector<std::size_t> a = {0, 0};
  const Eigen::VectorXd r = Eigen::VectorXd::Ones(2);
  Eigen::MatrixXd pi(2, 2), p(2, 2);
  pi << 1.0, 0.0, 0.04, 0.96;
  p << 0.5, 0.5, 0.02, 0.98;
  const auto at0 = value_tipw(pi, {a, r}, p, 0.0);
  const auto at3 = value_tipw(pi, {a, r}, p, 0.03);
  CHECK(at0.std_error == 0.0);
  CHECK(at3.std_error > at0.std_error);
}

TEST_CASE("DR with a zero reward model equals tIPW, and with a perfect one equals DM") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Instance in = random_instance(150, 6, 200 + seed);
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(150, 6);
    for (const double tau : {0.0, 0.05, 0.1}) {
      const auto dr = value_dr(in.policy, {in.actions, in.rewards}, zero, in.propensities, tau);
      const auto ipw = value_tipw(in.policy, {in.actions, in.rewards}, in.propensities, tau);
      for (std::size_t i = 0; i < 150; ++i) CHECK(dr.contributions[i] == doctest::Approx(ipw.contributions[i]));
    }
    Eigen::MatrixXd perfect = in.reward_hat;
    for (Eigen::Index i = 0; i < 150; ++i) {
      perfect(i, static_cast<Eigen::Index>(in.actions[static_cast<std::size_t>(i)])) = in.rewards[i];
    }
    CHECK(value_dr(in.policy, {in.actions, in.rewards}, perfect, in.propensities, 0.0).mean ==
          doctest::Approx(value_dm(in.policy, perfect).mean));
  }
}

TEST_CASE("estimators are invariant to sample order") {
  const Instance in = random_instance(120, 4, 31);
  std::vector<Eigen::Index> perm(120);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::rotate(perm.begin(), perm.begin() + 17, perm.end());
  Instance out = in;
  for (std::size_t i = 0; i < 120; ++i) {
    const auto src = perm[i];
    const auto dst = static_cast<Eigen::Index>(i);
    out.policy.row(dst) = in.policy.row(src);
    out.propensities.row(dst) = in.propensities.row(src);
    out.reward_hat.row(dst) = in.reward_hat.row(src);
    out.actions[i] = in.actions[static_cast<std::size_t>(src)];
    out.rewards[dst] = in.rewards[src];
  }
  CHECK(value_dm(in.policy, in.reward_hat).mean == doctest::Approx(value_dm(out.policy, out.reward_hat).mean));
  CHECK(value_tipw(in.policy, {in.actions, in.rewards}, in.propensities, 0.02).mean ==
        doctest::Approx(value_tipw(out.policy, {out.actions, out.rewards}, out.propensities, 0.02).mean));
  const auto a = value_dr(in.policy, {in.actions, in.rewards}, in.reward_hat, in.propensities, 0.02);
  const auto b = value_dr(out.policy, {out.actions, out.rewards}, out.reward_hat, out.propensities, 0.02);
  CHECK(a.mean == doctest::Approx(b.mean));
  CHECK(a.std_error == doctest::Approx(b.std_error));
}

TEST_CASE("self-normalized mode divides by the weight sum") {
  const Instance in = random_instance(250, 5, 41);
  const auto w = importance_weights(in.policy, in.actions, in.propensities, 0.02);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    num += w[i] * in.rewards[static_cast<Eigen::Index>(i)];
    den += w[i];
  }
  const auto sn = value_tipw(in.policy, {in.actions, in.rewards}, in.propensities, 0.02, true);
  CHECK(sn.self_normalized);
  CHECK(sn.mean == doctest::Approx(num / den));
  CHECK_FALSE(value_tipw(in.policy, {in.actions, in.rewards}, in.propensities, 0.02).self_normalized);
}

TEST_CASE("estimate JSON rows and input validation") {
  const Instance in = random_instance(10, 3, 5);
  const nlohmann::json j = value_tipw(in.policy, {in.actions, in.rewards}, in.propensities, 0.05);
  CHECK(j.at("estimator") == "tIPW");
  CHECK(j.at("tau") == 0.05);
  CHECK(j.at("T") == 10);
  CHECK(j.contains("mean"));
  CHECK(j.contains("std_error"));

  const Eigen::MatrixXd wrong = Eigen::MatrixXd::Constant(10, 4, 0.25);
  CHECK_THROWS(value_dm(wrong, in.reward_hat));
  CHECK_THROWS(value_tipw(in.policy, {in.actions, in.rewards}, wrong, 0.0));
  std::vector<std::size_t> bad = in.actions;
  bad[0] = 7;
  CHECK_THROWS(value_tipw(in.policy, {bad, in.rewards}, in.propensities, 0.0));
}

TEST_CASE("DM with the true reward function covers the oracle value") {
  auto cfg = small_synth(2000, 4, 0);
  int covered = 0;
  const int reps = 50;
  for (int rep = 0; rep < reps; ++rep) {
    cfg.seed = 500 + static_cast<std::uint64_t>(rep);
    const SynthResult env = generate(cfg);
    const OraclePolicy oracle(env.truth);
    const auto est = value_dm(policy_matrix(oracle, env.data), env.truth.reward_matrix(env.data));
    const TrueValue truth = true_value(oracle, env.truth, 100000, 77);
    if (std::abs(est.mean - truth.value) <= 2.0 * est.std_error) ++covered;
  }
  // Nominal coverage is about 95%.
  CHECK(covered >= 42);
}

TEST_CASE("model-level overloads agree with the matrix forms") {
  auto cfg = small_synth(600, 3, 14);
  const SynthResult env = generate(cfg);
  const auto pm = fit_multinomial_logit(env.data);
  const auto rm = fit_reward_models(env.data);
  const BaselinePolicy random = make_baseline(BaselineKind::kRandom, 3);
  const Eigen::MatrixXd pi = policy_matrix(random, env.data);
  const auto actions = env.data.actions();
  const Eigen::VectorXd r = env.data.rewards();
  CHECK(value_dr(random, env.data, rm, pm, 0.05).mean ==
        doctest::Approx(value_dr(pi, {actions, r}, rm.predict_matrix(env.data), pm.predict_matrix(env.data), 0.05).mean));
  CHECK(value_dm(random, env.data, rm).mean == doctest::Approx(value_dm(pi, rm.predict_matrix(env.data)).mean));
  CHECK_THROWS_AS(value_tipw(random, env.data, pm, 0.4), TauBoundError);
}

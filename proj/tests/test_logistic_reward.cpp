#include <algorithm>
#include <cmath>
#include <numeric>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "cbandit/error.hpp"
#include "cbandit/logistic.hpp"
#include "cbandit/reward_model.hpp"
#include "test_util.hpp"

using namespace cbandit;
using cbandit::testing::make_schema;
using cbandit::testing::sample;

namespace {

template <typename Problem>
double max_gradient_gap(const Problem& problem, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd g = problem.gradient(theta);
  double worst = 0.0;
  for (Eigen::Index d = 0; d < theta.size(); ++d) {
    const double h = 1e-5;
    Eigen::VectorXd up = theta, down = theta;
    up[d] += h;
    down[d] -= h;
    const double fd = (problem.value(up) - problem.value(down)) / (2 * h);
    worst = std::max(worst, std::abs(g[d] - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

template <typename Problem>
double max_hessian_gap(const Problem& problem, const Eigen::VectorXd& theta) {
  const Eigen::MatrixXd h = problem.hessian(theta);
  double worst = 0.0;
  for (Eigen::Index d = 0; d < theta.size(); ++d) {
    const double step = 1e-5;
    Eigen::VectorXd up = theta, down = theta;
    up[d] += step;
    down[d] -= step;
    const Eigen::VectorXd fd = (problem.gradient(up) - problem.gradient(down)) / (2 * step);
    worst = std::max(worst, (h.col(d) - fd).cwiseAbs().maxCoeff() / std::max(1.0, fd.cwiseAbs().maxCoeff()));
  }
  return worst;
}

}  // namespace

TEST_CASE("binary and multinomial gradients and Hessians match finite differences") {
  SplitMix rng(17);
  for (int inst = 0; inst < 10; ++inst) {
    const Eigen::Index n = 25, f = 3;
    Eigen::MatrixXd x(n, f);
    Eigen::VectorXd y(n), w(n);
    std::vector<std::size_t> labels;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index c = 0; c < f; ++c) x(i, c) = rng.normal();
      y[i] = rng.uniform();
      w[i] = 2.0 * rng.uniform();
      labels.push_back(rng.next() % 4);
    }
    const LogisticProblem bin(x, y, w, 0.7, inst % 2 == 0);
    Eigen::VectorXd tb(bin.dimension());
    for (auto& v : tb) v = rng.normal();
    CHECK(max_gradient_gap(bin, tb) < 1e-6);
    CHECK(max_hessian_gap(bin, tb) < 1e-6);

    const MultinomialProblem multi(x, labels, 4, 0.3);
    CHECK(multi.dimension() == 3 * (f + 1));
    Eigen::VectorXd tm(multi.dimension());
    for (auto& v : tm) v = rng.normal();
    CHECK(max_gradient_gap(multi, tm) < 1e-6);
    CHECK(max_hessian_gap(multi, tm) < 1e-6);
  }
}

TEST_CASE("Newton objective decreases monotonically and converges") {
  SplitMix rng(5);
  Eigen::MatrixXd x(200, 4);
  Eigen::VectorXd y(200);
  for (Eigen::Index i = 0; i < 200; ++i) {
    for (Eigen::Index c = 0; c < 4; ++c) x(i, c) = rng.normal();
    y[i] = rng.uniform() < logistic(1.5 * x(i, 0) - x(i, 2)) ? 1.0 : 0.0;
  }
  const auto fit = fit_logistic(x, y, Eigen::VectorXd::Ones(200), 1.0);
  CHECK(fit.trace.converged);
  REQUIRE(fit.trace.objective.size() >= 2);
  for (std::size_t i = 1; i < fit.trace.objective.size(); ++i) {
    CHECK(fit.trace.objective[i] < fit.trace.objective[i - 1]);
  }
  CHECK(fit.coefficients[0] > 0.5);
  CHECK(fit.coefficients[2] < -0.3);
}

TEST_CASE("fit is invariant to sample order") {
  SplitMix rng(8);
  Eigen::MatrixXd x(60, 2);
  Eigen::VectorXd y(60);
  for (Eigen::Index i = 0; i < 60; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    y[i] = rng.uniform();
  }
  Eigen::MatrixXd xr = x.colwise().reverse();
  Eigen::VectorXd yr = y.reverse();
  const auto a = fit_logistic(x, y, Eigen::VectorXd::Ones(60), 0.5);
  const auto b = fit_logistic(xr, yr, Eigen::VectorXd::Ones(60), 0.5);
  CHECK(a.intercept == doctest::Approx(b.intercept).epsilon(1e-9));
  CHECK((a.coefficients - b.coefficients).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("perfectly separable data stays finite under ridge") {
  Eigen::MatrixXd x(40, 1);
  Eigen::VectorXd y(40);
  for (Eigen::Index i = 0; i < 40; ++i) {
    x(i, 0) = i % 2;
    y[i] = i % 2;
  }
  const auto fit = fit_logistic(x, y, Eigen::VectorXd::Ones(40), 1.0);
  CHECK(std::isfinite(fit.coefficients[0]));
  const double p1 = logistic(fit.intercept + fit.coefficients[0]);
  CHECK(p1 > 0.5);
  CHECK(p1 < 1.0);
}

TEST_CASE("logistic helpers are numerically stable") {
  CHECK(logistic(0.0) == 0.5);
  CHECK(logistic(-800.0) >= 0.0);
  CHECK(logistic(800.0) == 1.0);
  CHECK(softplus(800.0) == doctest::Approx(800.0));
  CHECK(softplus(-800.0) >= 0.0);
  std::vector<double> s = {1000.0, 1000.0};
  softmax_inplace(s);
  CHECK(s[0] == 0.5);
}

TEST_CASE("reward model fits each arm on its own samples") {
  const auto schema = make_schema(1, 1, 2);
  std::vector<LoggedSample> samples;
  SplitMix rng(1);
  for (int i = 0; i < 80; ++i) {
    const std::size_t a = static_cast<std::size_t>(i % 2);
    const double x0 = rng.uniform() < 0.5 ? 1.0 : 0.0;
    samples.push_back(sample({x0, rng.uniform()}, a, a == 0 ? 1 : (rng.uniform() < 0.3 ? 1 : 0)));
  }
  const Dataset d(schema, samples);
  const RewardModel rm = fit_reward_models(d, 1.0);
  for (const auto& s : d.samples()) CHECK(rm.predict(s.context, 0) > 0.5);  // all-ones arm

  // Heavy ridge: predictions approach the arm's empirical reward rate.
  const RewardModel flat = fit_reward_models(d, 1e6);
  for (std::size_t a = 0; a < 2; ++a) {
    double rate = 0.0, n = 0.0;
    for (const auto& s : d.samples()) {
      if (s.action == a) {
        rate += s.reward;
        n += 1.0;
      }
    }
    rate /= n;
    for (const auto& s : d.samples()) CHECK(std::abs(flat.predict(s.context, a) - rate) < 1e-3);
  }

  CHECK_THROWS_AS((void)rm.predict(d[0].context, 2), std::out_of_range);
  const auto traced = fit_reward_models_traced(d, 1.0);
  REQUIRE(traced.traces.size() == 2);
  for (const auto& t : traced.traces) {
    for (std::size_t i = 1; i < t.objective.size(); ++i) CHECK(t.objective[i] < t.objective[i - 1]);
  }
}

TEST_CASE("reward model rejects an arm without samples") {
  const auto schema = make_schema(1, 0, 3);
  const Dataset d(schema, {sample({1}, 0, 1), sample({0}, 1, 0), sample({1}, 1, 1)});
  CHECK_THROWS_AS(fit_reward_models(d), FitError);
}

TEST_CASE("reward model predictions: zero coefficients, range and monotonicity") {
  const auto schema = make_schema(0, 2, 3);
  const RewardModel zero = RewardModel::zero(schema);
  CHECK(zero.predict(std::vector<double>{0.3, 0.9}, 2) == 0.5);

  Eigen::MatrixXd coefs(3, 2);
  coefs << 2.0, -1.0, 0.5, 0.0, -3.0, 4.0;
  const RewardModel rm(schema, coefs, Eigen::Vector3d(0.1, -0.2, 0.3), 1.0);
  double prev = -1.0;
  for (double v = 0.0; v <= 1.0; v += 0.1) {
    const double p = rm.predict(std::vector<double>{v, 0.5}, 0);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    CHECK(p > prev);
    prev = p;
  }
  const RewardModel back = RewardModel::from_json(rm.to_json());
  CHECK(back.coefficients() == rm.coefficients());
  CHECK(back.intercepts() == rm.intercepts());
  CHECK(rm.to_json().at("arms").at("S1").at("coefficients").contains("c0"));
}

TEST_CASE("reward coefficients are recovered on well-specified synthetic data") {
  // K = 2, three balanced binary features, T = 20000, lambda = 1e-3.
  const auto schema = make_schema(3, 0, 2);
  Eigen::MatrixXd beta(2, 3);
  beta << 0.8, -0.6, 0.0, -0.4, 0.0, 1.0;
  const Eigen::Vector2d alpha(-0.2, 0.1);
  const GroundTruth truth(schema, {0.5, 0.5, 0.5}, Eigen::MatrixXd::Zero(2, 3), Eigen::Vector2d::Zero(),
                          beta, alpha, Eigen::MatrixXd::Zero(2, 3), 0.0, {0, 1, 2});
  const Dataset d = sample_dataset(truth, 20000, 99);
  const RewardModel rm = fit_reward_models(d, 1e-3);
  for (Eigen::Index a = 0; a < 2; ++a) {
    for (Eigen::Index c = 0; c < 3; ++c) {
      CHECK(std::abs(rm.coefficients()(a, c) - beta(a, c)) < 0.1);
    }
  }
}

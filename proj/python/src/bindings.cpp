#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cbandit/csv_io.hpp"
#include "cbandit/error.hpp"
#include "cbandit/estimators.hpp"
#include "cbandit/evaluation.hpp"
#include "cbandit/learners.hpp"
#include "cbandit/preprocess.hpp"
#include "cbandit/propensity.hpp"
#include "cbandit/reward_model.hpp"
#include "cbandit/synth.hpp"

namespace py = pybind11;
using namespace cbandit;
using nlohmann::json;

namespace {

// Arrays in, Dataset out. Features default to continuous unless flagged binary.
Dataset from_arrays(const Eigen::MatrixXd& contexts, const std::vector<std::size_t>& actions,
                    const std::vector<int>& rewards, std::vector<std::string> feature_names,
                    std::vector<bool> binary, std::vector<std::string> arm_names) {
  const auto t = static_cast<std::size_t>(contexts.rows());
  const auto f = static_cast<std::size_t>(contexts.cols());
  if (actions.size() != t || rewards.size() != t) {
    throw std::invalid_argument("contexts, actions and rewards must have the same length");
  }
  if (feature_names.empty()) {
    for (std::size_t j = 0; j < f; ++j) feature_names.push_back("x" + std::to_string(j));
  }
  if (binary.empty()) binary.assign(f, false);
  if (binary.size() != f) throw std::invalid_argument("binary mask must have one entry per feature");
  std::vector<FeatureKind> kinds;
  for (const bool b : binary) kinds.push_back(b ? FeatureKind::kBinary : FeatureKind::kContinuous);
  std::vector<LoggedSample> samples(t);
  for (std::size_t i = 0; i < t; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    samples[i].context.assign(contexts.row(row).begin(), contexts.row(row).end());
    samples[i].action = actions[i];
    samples[i].reward = rewards[i];
  }
  return Dataset(FeatureSchema(std::move(feature_names), std::move(kinds), std::move(arm_names)),
                 std::move(samples));
}

std::vector<std::size_t> decisions(const DeterministicPolicy& policy, const Dataset& data) {
  std::vector<std::size_t> out;
  out.reserve(data.size());
  for (const auto& s : data.samples()) out.push_back(policy.decide(s.context));
  return out;
}

ImputationMethod parse_method(const std::string& name) {
  if (name == "DM") return ImputationMethod::kDM;
  if (name == "IPW") return ImputationMethod::kIPW;
  if (name == "DR") return ImputationMethod::kDR;
  throw std::invalid_argument("unknown imputation method '" + name + "'");
}

}  // namespace

PYBIND11_MODULE(_cbandit, m) {
  m.doc() = "Contextual bandit evaluation and policy learning.";

  py::register_exception<FitError>(m, "FitError", PyExc_RuntimeError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);

  py::class_<Dataset>(m, "Dataset")
      .def_static("from_arrays", &from_arrays, py::arg("contexts"), py::arg("actions"),
                  py::arg("rewards"), py::arg("feature_names") = std::vector<std::string>{},
                  py::arg("binary") = std::vector<bool>{}, py::arg("arm_names"))
      .def_static(
          "load",
          [](const std::string& csv, const std::string& schema_json) {
            return load_dataset(csv, json::parse(schema_json).get<FeatureSchema>());
          },
          py::arg("csv"), py::arg("schema_json"))
      .def("__len__", &Dataset::size)
      .def_property_readonly("contexts", &Dataset::context_matrix)
      .def_property_readonly("actions", &Dataset::actions)
      .def_property_readonly("rewards", &Dataset::rewards)
      .def_property_readonly("feature_names", [](const Dataset& d) { return d.schema().names(); })
      .def_property_readonly("arm_names", [](const Dataset& d) { return d.schema().arm_names(); })
      .def("scaled", [](const Dataset& d) { return scale_features(d); });

  py::class_<GroundTruth>(m, "GroundTruth")
      .def("propensity_matrix", &GroundTruth::propensity_matrix)
      .def("reward_matrix", &GroundTruth::reward_matrix)
      .def("to_json", [](const GroundTruth& g) { return g.to_json().dump(); })
      .def(
          "oracle_values",
          [](const GroundTruth& g, std::size_t n_mc, std::uint64_t seed) {
            const auto pack = [](TrueValue v) { return std::pair{v.value, v.std_error}; };
            py::dict out;
            out["random"] = pack(true_value(make_baseline(BaselineKind::kRandom, g.num_arms()), g, n_mc, seed));
            out["behavior"] = pack(true_value(TrueBehaviorPolicy(g), g, n_mc, seed));
            out["optimal"] = pack(true_value(OraclePolicy(g), g, n_mc, seed));
            return out;
          },
          py::arg("n_mc") = 200000, py::arg("seed") = 0);

  m.def(
      "_generate",
      [](const std::string& config) {
        SynthResult r = generate(json::parse(config).get<SynthConfig>());
        return py::make_tuple(std::move(r.data), std::move(r.truth));
      },
      py::arg("config"));

  py::class_<PolicyValueEstimate>(m, "PolicyValueEstimate")
      .def_property_readonly("estimator", [](const PolicyValueEstimate& e) { return std::string(to_string(e.kind)); })
      .def_readonly("tau", &PolicyValueEstimate::tau)
      .def_readonly("mean", &PolicyValueEstimate::mean)
      .def_readonly("std_error", &PolicyValueEstimate::std_error)
      .def_readonly("contributions", &PolicyValueEstimate::contributions)
      .def_readonly("self_normalized", &PolicyValueEstimate::self_normalized)
      .def("__repr__", [](const PolicyValueEstimate& e) { return json(e).dump(); });

  m.def("clip_propensity", &clip_propensity, py::arg("p"), py::arg("tau"), py::arg("num_arms"));
  m.def("value_dm", py::overload_cast<const Eigen::MatrixXd&, const Eigen::MatrixXd&>(&value_dm),
        py::arg("policy_probs"), py::arg("reward_hat"));
  m.def(
      "value_tipw",
      [](const Eigen::MatrixXd& pi, const std::vector<std::size_t>& actions,
         const Eigen::VectorXd& rewards, const Eigen::MatrixXd& p, double tau, bool sn) {
        return value_tipw(pi, {actions, rewards}, p, tau, sn);
      },
      py::arg("policy_probs"), py::arg("actions"), py::arg("rewards"), py::arg("propensities"),
      py::arg("tau") = 0.0, py::arg("self_normalized") = false);
  m.def(
      "value_dr",
      [](const Eigen::MatrixXd& pi, const std::vector<std::size_t>& actions,
         const Eigen::VectorXd& rewards, const Eigen::MatrixXd& rhat, const Eigen::MatrixXd& p,
         double tau, bool sn) { return value_dr(pi, {actions, rewards}, rhat, p, tau, sn); },
      py::arg("policy_probs"), py::arg("actions"), py::arg("rewards"), py::arg("reward_hat"),
      py::arg("propensities"), py::arg("tau") = 0.0, py::arg("self_normalized") = false);

  m.def(
      "impute_rewards",
      [](const std::vector<std::size_t>& actions, const Eigen::VectorXd& rewards,
         const std::string& method, std::optional<Eigen::MatrixXd> rhat,
         std::optional<Eigen::MatrixXd> p, double tau) {
        return impute_rewards(actions, rewards, parse_method(method), rhat ? &*rhat : nullptr,
                              p ? &*p : nullptr, tau)
            .values;
      },
      py::arg("actions"), py::arg("rewards"), py::arg("method"), py::arg("reward_hat") = py::none(),
      py::arg("propensities") = py::none(), py::arg("tau") = 0.0);

  py::class_<PropensityModel>(m, "PropensityModel")
      .def("predict", py::overload_cast<const Dataset&>(&PropensityModel::predict_matrix, py::const_))
      .def_property_readonly("chosen_iteration", &PropensityModel::chosen_iteration)
      .def("to_json", [](const PropensityModel& pm) { return pm.to_json().dump(); });

  m.def(
      "fit_gbm_propensity",
      [](const Dataset& d, std::size_t max_iterations, std::size_t depth, double shrinkage,
         std::size_t min_leaf) {
        BoostingConfig bc;
        bc.max_iterations = max_iterations;
        bc.tree_depth = depth;
        bc.shrinkage = shrinkage;
        bc.min_samples_leaf = min_leaf;
        PropensityFit fit = fit_gbm_propensity(d, bc);
        return py::make_tuple(std::move(fit.model), json(fit.balance).dump());
      },
      py::arg("data"), py::arg("max_iterations") = 5000, py::arg("tree_depth") = 3,
      py::arg("shrinkage") = 0.05, py::arg("min_samples_leaf") = 10);
  m.def("fit_multinomial_logit", &fit_multinomial_logit, py::arg("data"), py::arg("ridge") = 1.0);

  py::class_<RewardModel>(m, "RewardModel")
      .def("predict", py::overload_cast<const Dataset&>(&RewardModel::predict_matrix, py::const_))
      .def("to_json", [](const RewardModel& rm) { return rm.to_json().dump(); });
  m.def("fit_reward_models", &fit_reward_models, py::arg("data"), py::arg("lam") = 1.0);

  py::class_<LinearPolicy>(m, "LinearPolicy")
      .def_property_readonly("coefficients", &LinearPolicy::coefficients)
      .def_property_readonly("intercepts", &LinearPolicy::intercepts)
      .def("decide", [](const LinearPolicy& p, const Dataset& d) { return decisions(p, d); })
      .def("to_json", [](const LinearPolicy& p) { return p.to_json().dump(); })
      .def("ranking", [](const LinearPolicy& p) {
        std::vector<std::pair<std::string, double>> out;
        for (const auto& f : rank_features(p)) out.emplace_back(f.name, f.importance);
        return out;
      });
  m.def(
      "fit_policy",
      [](const Eigen::MatrixXd& imputed, const Dataset& d, double lambda) {
        return fit_policy({imputed, ImputationMethod::kDR, 0.0}, d.context_matrix(), d.schema(), lambda);
      },
      py::arg("imputed"), py::arg("data"), py::arg("lam") = 1.0);

  py::class_<OffsetTreePolicy>(m, "OffsetTreePolicy")
      .def_property_readonly("depth", &OffsetTreePolicy::depth)
      .def("decide", [](const OffsetTreePolicy& p, const Dataset& d) { return decisions(p, d); })
      .def("to_json", [](const OffsetTreePolicy& p) { return p.to_json().dump(); });
  m.def(
      "fit_offset_tree",
      [](const Dataset& d, const Eigen::MatrixXd& p, double tau, double lambda) {
        return fit_offset_tree(d, p, tau, lambda);
      },
      py::arg("data"), py::arg("propensities"), py::arg("tau") = 0.0, py::arg("lam") = 1.0);

  m.def(
      "_run_experiment",
      [](const Dataset& d, const std::string& config) {
        const ExperimentResult r = run_experiment(d, json::parse(config).get<ExperimentConfig>());
        return py::make_tuple(json(r).dump(), render_markdown(r));
      },
      py::arg("data"), py::arg("config"));

  m.def(
      "_t_test_independent",
      [](const std::vector<double>& a, const std::vector<double>& b, double alpha) {
        return json(t_test_independent(a, b, alpha)).dump();
      },
      py::arg("a"), py::arg("b"), py::arg("alpha") = 0.05);
}

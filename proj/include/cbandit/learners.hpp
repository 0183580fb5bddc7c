#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include <Eigen/Core>

#include "cbandit/dataset.hpp"
#include "cbandit/logistic.hpp"
#include "cbandit/policy.hpp"
#include "cbandit/propensity.hpp"
#include "cbandit/reward_model.hpp"

namespace cbandit {

enum class ImputationMethod { kDM, kIPW, kDR };

std::string_view to_string(ImputationMethod method);

/// T x K imputed rewards used as regression targets for policy learning.
struct ImputedRewardMatrix {
  Eigen::MatrixXd values;
  ImputationMethod method = ImputationMethod::kDM;
  double tau = 0.0;
};

/// Reward imputation over every (sample, arm) cell.
///
///   DM:  r(x_i, a) everywhere.
///   IPW: r_i / max(p_i, tau) at the logged arm, 0 elsewhere.
///   DR:  r(x_i, a_i) + (r_i - r(x_i, a_i)) / max(p_i, tau) at the logged arm, r(x_i, a)
///        elsewhere.
///
/// `reward_hat` is required for DM and DR, `propensities` for IPW and DR (both T x K).
ImputedRewardMatrix impute_rewards(std::span<const std::size_t> actions,
                                   const Eigen::VectorXd& rewards, ImputationMethod method,
                                   const Eigen::MatrixXd* reward_hat,
                                   const Eigen::MatrixXd* propensities, double tau);

ImputedRewardMatrix impute_rewards(const Dataset& data, ImputationMethod method,
                                   const RewardModel* rm, const PropensityModel* pm, double tau);

/// Per-arm logistic model of the imputed rewards; the policy picks the arm with the largest
/// score.
///
/// Every cell enters as a fractional target after one affine map shared by all arms,
///   y = (v - lo) / (hi - lo),  lo = min(0, min v),  hi = max(1, max v),
/// so DM's (0, 1) targets are used as-is, {0, 1} targets give ordinary logistic regression,
/// and IPW/DR values outside [0, 1] keep their ordering across arms. A column whose targets
/// are all equal gets zero coefficients and the matching (clamped) logit intercept.
LinearPolicy fit_policy(const ImputedRewardMatrix& imputed, const Eigen::MatrixXd& contexts,
                        const FeatureSchema& schema, double lambda = 1.0,
                        const NewtonOptions& options = {});

/// Offset-tree reduction with offset 1/2. Node n sees the samples whose logged arm lies in
/// its subtree, each as a binary example labelled with the side holding the logged arm when
/// r_i > 1/2 and the other side otherwise, weighted by |r_i - 1/2| / max(p_i, tau).
OffsetTreePolicy fit_offset_tree(const Dataset& data, const Eigen::MatrixXd& propensities,
                                 double tau, double lambda = 1.0,
                                 const NewtonOptions& options = {});
OffsetTreePolicy fit_offset_tree(const Dataset& data, const PropensityModel& pm, double tau,
                                 double lambda = 1.0);

}  // namespace cbandit

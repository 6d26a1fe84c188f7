#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string_view>

#include "opl/dataset.hpp"
#include "opl/parallel.hpp"
#include "opl/policy.hpp"
#include "opl/qmodel.hpp"

namespace opl {

enum class Estimator { kIPS, kDR, kPI, kLCPI, kPONA };

std::string_view estimator_name(Estimator e);

/// A policy-gradient estimate shaped like theta.
///
/// `value` is the policy-value estimate that the gradient differentiates
/// (e.g. the IPS value for kIPS); the trainer logs it as its objective.
/// Importance-weight diagnostics use w_i = pi_theta(a_i|x_i) / pi_0(a_i|x_i)
/// and are reported for every estimator.
struct GradientEstimate {
  DenseMatrix grad;
  Estimator estimator = Estimator::kIPS;
  double value = 0.0;
  double max_importance_weight = 0.0;
  double effective_sample_size = 0.0;
};

/// Source of the logging distribution pi_0(.|x) over the whole action space.
using LoggingDistribution = std::function<void(const Context&, std::span<double>)>;

LoggingDistribution logging_source(const EnvOracle& env);

/// Gamma = sum_a pi_0(a|x) I_a I_a' (exact). Throws InvalidInput if the
/// probabilities do not sum to 1 within 1e-9.
DenseMatrix gamma_matrix(std::span<const double> logging_probs, const ActionSpace& space,
                         IndicatorMode mode);
DenseMatrix gamma_matrix(const Context& ctx, const LoggingDistribution& logging,
                         const ActionSpace& space, IndicatorMode mode);

/// theta_{pi0,x} = sum_a pi_0(a|x) I_a q(x,a). Test oracle for the
/// pseudoinverse identity; needs the full q row.
Vector value_vector(std::span<const double> logging_probs, std::span<const double> q_row,
                    const ActionSpace& space, IndicatorMode mode);

/// Per-row Gamma^+_{x_i} I_{a_i}. Depends only on the data and pi_0, so it is
/// computed once and reused across gradient steps.
struct PseudoinverseWeights {
  IndicatorMode mode = IndicatorMode::kLCPI;
  RowMatrix rows;  // n x indicator_length(mode)
};

PseudoinverseWeights prepare_pseudoinverse(const LoggedDataset& data, IndicatorMode mode,
                                           const LoggingDistribution& logging,
                                           double tol = kDefaultPinvTol, Exec exec = Exec::kParallel);

/// q-hat(x_i, a) for every logged row and existing action (0 on new actions).
struct ModelTable {
  RowMatrix q;  // n x |A|
};

ModelTable prepare_model_table(const LoggedDataset& data, const QModel& model);

struct EstimatorOptions {
  Exec exec = Exec::kParallel;
  /// Diagnostic only: caps importance weights in IPS/DR terms.
  std::optional<double> weight_clip;
  /// Rows to use (minibatch); empty means every row.
  std::span<const std::size_t> rows;
};

GradientEstimate grad_ips(const PolicyParams& policy, const LoggedDataset& data,
                          const EstimatorOptions& opts = {});

/// The model term sums over existing actions only.
GradientEstimate grad_dr(const PolicyParams& policy, const LoggedDataset& data,
                         const ModelTable& model, const EstimatorOptions& opts = {});
GradientEstimate grad_dr(const PolicyParams& policy, const LoggedDataset& data, const QModel& model,
                         const EstimatorOptions& opts = {});

/// PI (kPI weights) or LCPI (kLCPI weights). The outer action sum runs over
/// all of A, which is what carries signal to never-logged actions.
GradientEstimate grad_pseudoinverse(const PolicyParams& policy, const LoggedDataset& data,
                                    const PseudoinverseWeights& weights,
                                    const EstimatorOptions& opts = {});
GradientEstimate grad_pseudoinverse(const PolicyParams& policy, const LoggedDataset& data,
                                    IndicatorMode mode, const LoggingDistribution& logging,
                                    const EstimatorOptions& opts = {});

/// kappa * LCPI + (1 − kappa) * DR. kappa = 0 and kappa = 1 return the DR and
/// LCPI estimates unchanged.
GradientEstimate grad_pona(const PolicyParams& policy, const LoggedDataset& data,
                           const ModelTable& model, const PseudoinverseWeights& lcpi, double kappa,
                           const EstimatorOptions& opts = {});

}  // namespace opl

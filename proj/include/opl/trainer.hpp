#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <vector>

#include "opl/grad_estimators.hpp"

namespace opl {

enum class Optimizer { kPlain, kAdam };

struct TrainConfig {
  double learning_rate = 0.01;
  int iterations = 200;
  Optimizer optimizer = Optimizer::kAdam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 0;
  std::vector<double> kappa_grid{0.0, 0.25, 0.5, 0.75, 1.0};
  double rho_lower = -std::numeric_limits<double>::infinity();
  double rho_upper = std::numeric_limits<double>::infinity();
  double validation_fraction = 0.5;
  double ridge_lambda_per_row = 1e-3;  // lambda = this * n
  double pinv_tol = kDefaultPinvTol;
  Exec exec = Exec::kParallel;

  /// Throws ConfigError on an empty/unsorted grid, kappa outside [0,1],
  /// rho_lower > rho_upper, or non-positive iteration settings.
  void validate() const;
};

struct EstimatorSpec {
  Estimator kind = Estimator::kDR;
  double kappa = 0.0;  // kPONA only
};

/// Precomputed per-dataset inputs. Which members are required depends on the
/// estimator: DR and PONA need `model`, LCPI and PONA need `lcpi`, PI needs
/// `pi`.
struct EstimatorInputs {
  const ModelTable* model = nullptr;
  const PseudoinverseWeights* lcpi = nullptr;
  const PseudoinverseWeights* pi = nullptr;
};

GradientEstimate estimate_gradient(const EstimatorSpec& spec, const PolicyParams& policy,
                                   const LoggedDataset& data, const EstimatorInputs& inputs,
                                   const EstimatorOptions& opts = {});

struct TraceRow {
  int iteration = 0;
  double objective = 0.0;
  double true_value = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  PolicyParams params;
  std::vector<TraceRow> trace;
};

/// Optional ground truth for the trace's true_value column.
struct TraceOracle {
  const EnvOracle* env = nullptr;
  std::span<const Context> contexts;
  int every = 1;
};

/// Gradient ascent from theta = 0. Throws NumericError naming the estimator
/// and iteration when a gradient is non-finite.
TrainResult train(const EstimatorSpec& spec, const LoggedDataset& data, const EstimatorInputs& inputs,
                  const TrainConfig& cfg, std::shared_ptr<const std::vector<char>> support = nullptr,
                  const TraceOracle& oracle = {});

/// Writes "iteration,objective,true_value" rows.
void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace);

enum class OpeMethod { kIPS, kDR };

/// Off-policy value of `policy` on validation data. The DR model term sums
/// over existing actions only.
double ope_value(const PolicyParams& policy, const LoggedDataset& validation, OpeMethod method,
                 const ModelTable* model = nullptr);

struct KappaPoint {
  double kappa = 0.0;
  double new_mass = 0.0;
  double value = 0.0;
  bool feasible = false;
  PolicyParams params;
};

struct KappaSelection {
  std::size_t index = 0;
  bool feasible = false;
};

struct KappaTuning {
  std::vector<KappaPoint> points;
  KappaSelection selection;
  double kappa() const { return points[selection.index].kappa; }
  const PolicyParams& policy() const { return points[selection.index].params; }
};

/// Picks the highest-value grid point whose new-action mass lies in
/// [lo, hi]. With no feasible point, returns the point whose mass is closest
/// to the interval and feasible = false.
KappaSelection select_kappa(const std::vector<KappaPoint>& points, double lo, double hi);

/// Trains one PONA policy per grid value on `train`, then scores each on
/// `validation` (new-action mass over its contexts, DR value). Feasibility
/// flags use [cfg.rho_lower, cfg.rho_upper].
KappaTuning kappa_grid_search(const LoggedDataset& train, const EstimatorInputs& train_inputs,
                              const LoggedDataset& validation, const ModelTable& validation_model,
                              const TrainConfig& cfg);

/// Full procedure: split, fit q-hat on the train part, prepare LCPI weights,
/// grid search, select.
KappaTuning tune_kappa(const LoggedDataset& data, const TrainConfig& cfg, const LoggingDistribution& logging);

}  // namespace opl

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "opl/parallel.hpp"
#include "opl/policy.hpp"

namespace opl {

inline constexpr std::size_t kDefaultEvalContexts = 10'000;

/// Ground-truth metrics of a policy. Per-new values are nullopt when the
/// policy puts (numerically) no mass on new actions.
struct MetricsReport {
  double overall_value = 0.0;
  double value_per_existing = 0.0;
  std::optional<double> value_per_new;
  double existing_mass = 0.0;
  double new_action_mass = 0.0;
  double norm_overall = 0.0;
  double norm_existing = 0.0;
  std::optional<double> norm_new;
};

/// Fresh contexts with their exact q rows, plus the uniform policy's sums used
/// for normalization. Shared across every policy evaluated on one env.
class EvalSet {
 public:
  EvalSet(const EnvOracle& env, std::size_t n_contexts, std::uint64_t seed);

  const EnvOracle& env() const { return *env_; }
  const std::vector<Context>& contexts() const { return contexts_; }
  const DenseMatrix& q() const { return q_; }  // n x |A|

  struct Sums {
    double total = 0.0;           // mean_x sum_a pi q
    double existing_value = 0.0;  // mean_x sum_{existing} pi q
    double existing_mass = 0.0;
    double new_value = 0.0;
    double new_mass = 0.0;
    Sums& operator+=(const Sums& o);
  };
  Sums sums(const Policy& policy, Exec exec = Exec::kParallel) const;
  const Sums& uniform() const { return uniform_; }

 private:
  const EnvOracle* env_;
  std::vector<Context> contexts_;
  DenseMatrix q_;
  Sums uniform_;
};

inline constexpr double kUndefinedMass = 1e-12;

MetricsReport evaluate(const Policy& policy, const EvalSet& eval, Exec exec = Exec::kParallel);
MetricsReport evaluate(const Policy& policy, const EnvOracle& env,
                       std::size_t n_eval_contexts = kDefaultEvalContexts, std::uint64_t seed = 0);

}  // namespace opl

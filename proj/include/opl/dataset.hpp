#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "opl/synth_env.hpp"

namespace opl {

struct LoggedRow {
  Context context;
  std::size_t action = 0;
  double reward = 0.0;
  double propensity = 0.0;  // pi_0(a_i | x_i)
  /// pi_0(f_l(a_i) | x_i) for each dimension l, then pi_0(f_{1:s}(a_i) | x_i).
  /// Empty when not recorded (e.g. rows read back from CSV).
  std::vector<double> marginals;
};

/// Logged bandit feedback plus the action space and partition it lives in.
struct LoggedDataset {
  std::vector<LoggedRow> rows;
  std::shared_ptr<const ActionSpace> space;
  std::shared_ptr<const ActionPartition> partition;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
  int context_dim() const { return rows.empty() ? 0 : static_cast<int>(rows.front().context.x.size()); }

  /// Throws PreconditionError if a row has non-positive propensity or logs
  /// a new action.
  void validate() const;
  LoggedDataset subset(const std::vector<std::size_t>& idx) const;
};

inline constexpr std::size_t kDefaultLogCap = 10'000'000;

/// Draws n rounds of (x ~ p(x), a ~ pi_0(.|x), r = q(x,a) + noise).
LoggedDataset generate_log(const EnvOracle& env, std::size_t n, std::uint64_t seed,
                           std::size_t cap = kDefaultLogCap);

/// Deterministic shuffled split into (train, validation).
std::pair<LoggedDataset, LoggedDataset> split_dataset(const LoggedDataset& data,
                                                      double validation_fraction,
                                                      std::uint64_t seed);

}  // namespace opl

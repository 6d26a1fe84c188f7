#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "opl/dataset_io.hpp"
#include "opl/eval_metrics.hpp"
#include "opl/trainer.hpp"

namespace opl {

enum class Method { kLogging, kRegA, kRegF, kIPS, kDR, kPI, kLCPI, kPONA };

std::string_view method_name(Method m);
/// Throws ConfigError for an unknown name.
Method parse_method(std::string_view name);

enum class EnvKind { kSynthetic, kReal };

struct EnvBlock {
  EnvKind kind = EnvKind::kSynthetic;
  SynthConfig synth;
  // real data only
  RealDataPaths paths;
  RealDataOptions real;
  double beta = 0.05;
  double new_action_fraction = 0.3;
  double noise_sigma = 0.0;
};

/// Sweep axis. "none" runs a single point at value 0.
struct SweepSpec {
  std::string name = "none";  // none | n | new_action_pct | gamma | rho_lower
  std::vector<double> values{0.0};
};

struct ExperimentConfig {
  EnvBlock env;
  std::size_t n = 2000;
  std::vector<Method> methods;
  SweepSpec sweep;
  int seeds = 20;
  std::uint64_t seed_base = 0;
  TrainConfig trainer;
  std::size_t eval_contexts = kDefaultEvalContexts;
  bool evaluate_argmax = false;
  double regression_temperature = 1.0;
  bool regression_argmax = false;
  std::filesystem::path output = "results.csv";
  bool record_wallclock = false;

  /// Throws ConfigError with the offending key.
  void validate() const;
};

/// Parses the JSON config text. `source` names the file in error messages;
/// relative data paths resolve against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::string& source,
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

struct ResultRow {
  std::string sweep_name;
  double sweep_value = 0.0;
  int seed = 0;
  Method method = Method::kLogging;
  std::optional<double> kappa;
  MetricsReport metrics;
  std::optional<bool> feasible;
  std::string status = "ok";
  std::optional<double> wallclock_ms;
};

/// Seeds of one (seed index) replicate; independent of the sweep value so
/// that every sweep point sees common random numbers.
struct RunSeeds {
  std::uint64_t env = 0;
  std::uint64_t log = 0;
  std::uint64_t eval = 0;
  std::uint64_t train = 0;
};
RunSeeds run_seeds(std::uint64_t seed_base, int seed_index);

/// Builds the environment of one sweep point and replicate.
EnvOracle make_env(const ExperimentConfig& cfg, double sweep_value, int seed_index);

/// Every (sweep value, seed, method) row, canonically sorted. `jobs` <= 0
/// uses the OpenMP default.
std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, int jobs = 0);

/// Requires sweep.name == "rho_lower". One PONA row per (rho_L, seed); the
/// kappa grid is trained once per seed and re-selected per rho_L.
std::vector<ResultRow> run_sweep_rho(const ExperimentConfig& cfg, int jobs = 0);

void sort_rows(std::vector<ResultRow>& rows);
void write_results_csv(std::ostream& os, const std::vector<ResultRow>& rows);
std::string results_csv(const std::vector<ResultRow>& rows);

/// Worker count: explicit value if > 0, else OPL_JOBS, else 0 (OpenMP default).
int resolve_jobs(std::optional<int> flag);

}  // namespace opl

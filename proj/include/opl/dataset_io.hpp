#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "opl/dataset.hpp"

namespace opl {

struct RealDataPaths {
  std::filesystem::path users;    // user_id, x_0, ..., x_{dx-1}
  std::filesystem::path items;    // item_id, f_0, ..., f_{d-1}
  std::filesystem::path rewards;  // user_id, item_id, reward
};

struct RealDataOptions {
  double clip_quantile = 0.99;
  int interaction_width = 2;
  std::vector<int> interaction_order;
};

/// A loaded interaction dataset. Actions are the items, in items.csv order.
/// Rewards are clipped at the requested quantile and divided by the clip
/// value, so they lie in [0, 1].
struct RealDatasetSpec {
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  DenseMatrix user_features;                // users x dx
  std::vector<ActionFeatures> item_features;
  DenseMatrix rewards;                      // users x items
  std::vector<int> cards;
  int interaction_width = 2;
  std::vector<int> interaction_order;
  double clip_value = 1.0;

  FeatureScheme scheme() const { return FeatureScheme(cards, interaction_width, interaction_order); }
};

/// Throws ParseError naming file and line for missing columns, non-numeric
/// cells, duplicate or unknown ids, or missing (user, item) pairs.
RealDatasetSpec load_real(const RealDataPaths& paths, const RealDataOptions& options = {});

/// Writes users/items/rewards CSVs with raw reward values.
void write_real(const std::filesystem::path& dir, const std::vector<std::string>& user_ids,
                const DenseMatrix& user_features, const std::vector<std::string>& item_ids,
                const std::vector<ActionFeatures>& item_features, const DenseMatrix& rewards);

/// Deterministic miniature dataset: 20 users x 30 items, 2 feature
/// dimensions, watch-ratio-like rewards.
void gen_fixture(const std::filesystem::path& dir, std::uint64_t seed = 7);

/// Semi-synthetic world over a loaded dataset: q comes straight from the
/// reward matrix. Existing actions first greedily cover every interaction
/// combination present among the items, then are filled at random up to
/// round((1 − new_action_fraction) |A|). Throws ConfigError, quoting the
/// achievable minimum, when that target is below the cover size.
EnvOracle build_semi_synth_env(const RealDatasetSpec& spec, double beta, double new_action_fraction,
                               std::uint64_t seed, double noise_sigma = 0.0);

/// Header: context_0..context_{k-1},action_id,reward,propensity. Values at
/// 17 significant digits.
void write_logged_csv(const LoggedDataset& data, const std::filesystem::path& path);
LoggedDataset read_logged_csv(const std::filesystem::path& path, std::shared_ptr<const ActionSpace> space,
                              std::shared_ptr<const ActionPartition> partition);

}  // namespace opl

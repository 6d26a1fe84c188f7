#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <unordered_map>
#include <variant>
#include <vector>

#include "opl/feature_codec.hpp"
#include "opl/linalg.hpp"
#include "opl/rng.hpp"

namespace opl {

/// A context vector. `user` indexes the user table of a semi-synthetic
/// environment and is -1 for synthetic contexts.
struct Context {
  Vector x;
  int user = -1;
};

/// Disjoint split of an action space into logged (existing) and never-logged
/// (new) actions.
struct ActionPartition {
  std::vector<std::size_t> existing;  // ascending
  std::vector<std::size_t> fresh;     // ascending; the "new" actions
  std::vector<char> is_new;           // indexed by action id

  static ActionPartition from_mask(std::vector<char> is_new);
  std::size_t size() const { return is_new.size(); }
  double new_fraction() const {
    return static_cast<double>(fresh.size()) / static_cast<double>(is_new.size());
  }
};

struct SynthConfig {
  int context_dim = 5;
  std::vector<int> cards{3, 3, 3, 3, 3};
  int interaction_width = 2;
  std::vector<int> interaction_order;  // empty = identity
  double gamma = 1.0;
  double beta = 0.05;
  double noise_sigma = 1.0;
  double new_action_fraction = 0.3;
  double context_mean = 1.0;
  double reward_low = 0.0;
  double reward_high = 1.0;
  std::uint64_t seed = 0;

  FeatureScheme scheme() const { return FeatureScheme(cards, interaction_width, interaction_order); }
  void validate() const;
};

/// Ground-truth q for the synthetic environment:
///   q(x, a) = sum_l x'M_l[:, f_l] + x'M_local[:, f_{1:s}] + gamma * x'M_full[:, a].
struct RewardModel {
  std::vector<DenseMatrix> marginal;  // d matrices, context_dim x cards[l]
  DenseMatrix local;                  // context_dim x interaction_length
  DenseMatrix full;                   // context_dim x |A|
  double gamma = 0.0;
};

/// Dense per-user reward table; the q-function of the semi-synthetic setting.
struct TabularRewards {
  DenseMatrix user_features;  // users x context_dim
  DenseMatrix rewards;        // users x |A|
  std::unordered_map<std::uint64_t, int> user_by_hash;
};

/// Everything known about a simulated world: action space, partition, reward
/// model and the beta-softmax logging policy. Immutable after construction.
class EnvOracle {
 public:
  EnvOracle(std::shared_ptr<const ActionSpace> space, ActionPartition partition, RewardModel model,
            double beta, double noise_sigma, double context_mean);
  EnvOracle(std::shared_ptr<const ActionSpace> space, ActionPartition partition,
            TabularRewards table, double beta, double noise_sigma);

  const ActionSpace& space() const { return *space_; }
  const std::shared_ptr<const ActionSpace>& space_ptr() const { return space_; }
  const ActionPartition& partition() const { return *partition_; }
  const std::shared_ptr<const ActionPartition>& partition_ptr() const { return partition_; }
  std::size_t action_count() const { return space_->size(); }
  int context_dim() const { return context_dim_; }
  double beta() const { return beta_; }
  double noise_sigma() const { return noise_sigma_; }
  bool is_tabular() const { return std::holds_alternative<TabularRewards>(rewards_); }
  const RewardModel* reward_model() const { return std::get_if<RewardModel>(&rewards_); }
  const TabularRewards* table() const { return std::get_if<TabularRewards>(&rewards_); }

  double q_true(const Context& ctx, std::size_t a) const;
  /// q_true for every action, written to `out` (size |A|).
  void q_row(const Context& ctx, std::span<double> out) const;
  std::vector<double> q_row(const Context& ctx) const;

  /// Softmax of beta * q over existing actions, exactly 0 on new actions.
  void logging_probs(const Context& ctx, std::span<double> out) const;
  std::vector<double> logging_probs(const Context& ctx) const;

  Context sample_context(Rng& rng) const;

  /// Fraction of s-prefix combinations and remaining marginal values
  /// supported by the existing set (1.0 when Local Combination Support holds).
  double coverage_ratio() const;

 private:
  int resolve_user(const Context& ctx) const;

  std::shared_ptr<const ActionSpace> space_;
  std::shared_ptr<const ActionPartition> partition_;
  std::variant<RewardModel, TabularRewards> rewards_;
  double beta_;
  double noise_sigma_;
  double context_mean_ = 0.0;
  int context_dim_;
};

/// Existing-set seeds that guarantee Independent Support (diagonal actions)
/// and Local Combination Support (every interaction combination, other
/// dimensions at value 0). Returned as sorted, de-duplicated action ids.
std::vector<std::size_t> base_existing_actions(const ActionSpace& space);

EnvOracle build_env(const SynthConfig& config);

/// Sum of logging probability per feature value / interaction combination.
struct FeatureMarginals {
  std::vector<double> marginal;     // indexed like the marginal indicator block
  std::vector<double> interaction;  // indexed by interaction_index
};
FeatureMarginals feature_marginals(const ActionSpace& space, std::span<const double> probs);

/// Stable hash of a context vector's bytes, used to look users up by features.
std::uint64_t hash_features(const Vector& x);

}  // namespace opl

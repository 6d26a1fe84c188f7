#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace opl {

/// Which blocks an action indicator carries. kPI keeps only the per-dimension
/// one-hot blocks; kLCPI appends a one-hot over the interaction dimensions.
enum class IndicatorMode { kPI, kLCPI };

/// Feature index per dimension; values[l] in [0, cards[l]).
using ActionFeatures = std::vector<int>;

/// Dense 0/1 indicator vector.
using ActionIndicator = std::vector<double>;

inline constexpr std::size_t kDefaultActionCap = 1'000'000;

/// Shape of a factored action space.
///
/// The interaction block spans `interaction_width` dimensions taken from the
/// front of `interaction_order` (identity order by default). Its one-hot
/// position is the mixed-radix code of those dimensions' values, with the
/// first listed dimension most significant.
class FeatureScheme {
 public:
  FeatureScheme(std::vector<int> cards, int interaction_width,
                std::vector<int> interaction_order = {});

  int dims() const { return static_cast<int>(cards_.size()); }
  std::span<const int> cards() const { return cards_; }
  int card(int dim) const { return cards_[static_cast<std::size_t>(dim)]; }
  int interaction_width() const { return width_; }
  /// The dimensions participating in the interaction block, in radix order.
  std::span<const int> interaction_dims() const {
    return std::span<const int>(order_).first(static_cast<std::size_t>(width_));
  }

  /// Product of all cardinalities (saturates at SIZE_MAX).
  std::size_t action_count() const;
  int marginal_length() const { return marginal_length_; }
  int interaction_length() const { return interaction_length_; }
  int indicator_length(IndicatorMode mode) const {
    return mode == IndicatorMode::kPI ? marginal_length_
                                      : marginal_length_ + interaction_length_;
  }
  /// Start of dimension `dim`'s one-hot block inside the indicator.
  int marginal_offset(int dim) const { return offsets_[static_cast<std::size_t>(dim)]; }

  /// Throws InvalidInput if `features` does not fit this scheme.
  void check(const ActionFeatures& features) const;
  /// Mixed-radix code of the interaction dimensions, in [0, interaction_length).
  int interaction_index(const ActionFeatures& features) const;
  /// Mixed-radix code over all dimensions (dimension 0 most significant);
  /// equals the action's position in enumerate_actions().
  std::size_t full_index(const ActionFeatures& features) const;

 private:
  std::vector<int> cards_;
  int width_;
  std::vector<int> order_;
  std::vector<int> offsets_;
  int marginal_length_ = 0;
  int interaction_length_ = 1;
};

ActionIndicator encode(const ActionFeatures& features, const FeatureScheme& scheme,
                       IndicatorMode mode);

/// Positions of the set bits of encode(features, scheme, mode), ascending
/// block order (marginal blocks, then the interaction bit).
std::vector<int> active_bits(const ActionFeatures& features, const FeatureScheme& scheme,
                             IndicatorMode mode);

/// All feature tuples in lexicographic order. Throws CapacityError when the
/// action count exceeds `cap`.
std::vector<ActionFeatures> enumerate_actions(const FeatureScheme& scheme,
                                              std::size_t cap = kDefaultActionCap);

/// An ordered, immutable list of actions over a scheme with cached sparse
/// indicators. Synthetic environments use the full enumeration; the
/// semi-synthetic environment uses its item list.
class ActionSpace {
 public:
  explicit ActionSpace(FeatureScheme scheme, std::size_t cap = kDefaultActionCap);
  ActionSpace(FeatureScheme scheme, std::vector<ActionFeatures> actions);

  std::size_t size() const { return actions_.size(); }
  const FeatureScheme& scheme() const { return scheme_; }
  const ActionFeatures& features(std::size_t a) const { return actions_[a]; }
  bool is_full_enumeration() const { return full_; }

  /// Set bits of action `a`; PI mode is the first dims() entries of LCPI mode.
  std::span<const int> active(std::size_t a, IndicatorMode mode) const {
    const std::size_t stride = static_cast<std::size_t>(scheme_.dims()) + 1;
    const std::size_t len = mode == IndicatorMode::kPI ? stride - 1 : stride;
    return std::span<const int>(bits_).subspan(a * stride, len);
  }
  int indicator_length(IndicatorMode mode) const { return scheme_.indicator_length(mode); }

  std::optional<std::size_t> find(const ActionFeatures& features) const;

 private:
  void build_bits();

  FeatureScheme scheme_;
  std::vector<ActionFeatures> actions_;
  std::vector<int> bits_;
  bool full_ = false;
};

}  // namespace opl

#include "opl/feature_codec.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "opl/errors.hpp"

namespace opl {

FeatureScheme::FeatureScheme(std::vector<int> cards, int interaction_width,
                             std::vector<int> interaction_order)
    : cards_(std::move(cards)), width_(interaction_width), order_(std::move(interaction_order)) {
  const int d = dims();
  if (d < 1) throw InvalidInput("feature scheme needs at least one dimension");
  for (int m : cards_) {
    if (m < 2) throw InvalidInput("every feature cardinality must be >= 2, got " + std::to_string(m));
  }
  if (width_ < 1 || width_ > d) {
    throw InvalidInput("interaction width must lie in [1, " + std::to_string(d) + "], got " +
                       std::to_string(width_));
  }
  if (order_.empty()) {
    order_.resize(static_cast<std::size_t>(d));
    std::iota(order_.begin(), order_.end(), 0);
  }
  std::vector<int> sorted = order_;
  std::sort(sorted.begin(), sorted.end());
  bool is_perm = static_cast<int>(sorted.size()) == d;
  for (int l = 0; is_perm && l < d; ++l) is_perm = sorted[static_cast<std::size_t>(l)] == l;
  if (!is_perm) {
    throw InvalidInput("interaction_order must be a permutation of 0.." + std::to_string(d - 1));
  }
  offsets_.reserve(static_cast<std::size_t>(d));
  for (int m : cards_) {
    offsets_.push_back(marginal_length_);
    marginal_length_ += m;
  }
  std::size_t inter = 1;
  for (int l : interaction_dims()) {
    inter *= static_cast<std::size_t>(card(l));
    if (inter > kDefaultActionCap) throw CapacityError("interaction block exceeds 10^6 entries");
  }
  interaction_length_ = static_cast<int>(inter);
}

std::size_t FeatureScheme::action_count() const {
  std::size_t n = 1;
  for (int m : cards_) {
    const auto mm = static_cast<std::size_t>(m);
    if (n > std::numeric_limits<std::size_t>::max() / mm) return std::numeric_limits<std::size_t>::max();
    n *= mm;
  }
  return n;
}

void FeatureScheme::check(const ActionFeatures& features) const {
  if (static_cast<int>(features.size()) != dims()) {
    throw InvalidInput("action has " + std::to_string(features.size()) + " features, scheme has " +
                       std::to_string(dims()));
  }
  for (int l = 0; l < dims(); ++l) {
    const int v = features[static_cast<std::size_t>(l)];
    if (v < 0 || v >= card(l)) {
      throw InvalidInput("feature " + std::to_string(l) + " value " + std::to_string(v) +
                         " out of range [0, " + std::to_string(card(l)) + ")");
    }
  }
}

int FeatureScheme::interaction_index(const ActionFeatures& features) const {
  int code = 0;
  for (int l : interaction_dims()) code = code * card(l) + features[static_cast<std::size_t>(l)];
  return code;
}

std::size_t FeatureScheme::full_index(const ActionFeatures& features) const {
  std::size_t code = 0;
  for (int l = 0; l < dims(); ++l) {
    code = code * static_cast<std::size_t>(card(l)) +
           static_cast<std::size_t>(features[static_cast<std::size_t>(l)]);
  }
  return code;
}

std::vector<int> active_bits(const ActionFeatures& features, const FeatureScheme& scheme,
                             IndicatorMode mode) {
  scheme.check(features);
  std::vector<int> bits;
  bits.reserve(static_cast<std::size_t>(scheme.dims()) + 1);
  for (int l = 0; l < scheme.dims(); ++l) {
    bits.push_back(scheme.marginal_offset(l) + features[static_cast<std::size_t>(l)]);
  }
  if (mode == IndicatorMode::kLCPI) {
    bits.push_back(scheme.marginal_length() + scheme.interaction_index(features));
  }
  return bits;
}

ActionIndicator encode(const ActionFeatures& features, const FeatureScheme& scheme,
                       IndicatorMode mode) {
  ActionIndicator out(static_cast<std::size_t>(scheme.indicator_length(mode)), 0.0);
  for (int b : active_bits(features, scheme, mode)) out[static_cast<std::size_t>(b)] = 1.0;
  return out;
}

std::vector<ActionFeatures> enumerate_actions(const FeatureScheme& scheme, std::size_t cap) {
  const std::size_t total = scheme.action_count();
  if (total > cap) {
    throw CapacityError("action space has " + std::to_string(total) + " actions, cap is " +
                        std::to_string(cap));
  }
  std::vector<ActionFeatures> out;
  out.reserve(total);
  ActionFeatures cur(static_cast<std::size_t>(scheme.dims()), 0);
  for (std::size_t k = 0; k < total; ++k) {
    out.push_back(cur);
    // odometer increment, last dimension fastest
    for (int l = scheme.dims() - 1; l >= 0; --l) {
      auto& v = cur[static_cast<std::size_t>(l)];
      if (++v < scheme.card(l)) break;
      v = 0;
    }
  }
  return out;
}

ActionSpace::ActionSpace(FeatureScheme scheme, std::size_t cap)
    : scheme_(std::move(scheme)), actions_(enumerate_actions(scheme_, cap)), full_(true) {
  build_bits();
}

ActionSpace::ActionSpace(FeatureScheme scheme, std::vector<ActionFeatures> actions)
    : scheme_(std::move(scheme)), actions_(std::move(actions)) {
  if (actions_.empty()) throw InvalidInput("action space must not be empty");
  for (const auto& f : actions_) scheme_.check(f);
  build_bits();
}

void ActionSpace::build_bits() {
  bits_.clear();
  bits_.reserve(actions_.size() * (static_cast<std::size_t>(scheme_.dims()) + 1));
  for (const auto& f : actions_) {
    const auto b = active_bits(f, scheme_, IndicatorMode::kLCPI);
    bits_.insert(bits_.end(), b.begin(), b.end());
  }
}

std::optional<std::size_t> ActionSpace::find(const ActionFeatures& features) const {
  if (static_cast<int>(features.size()) != scheme_.dims()) return std::nullopt;
  for (int l = 0; l < scheme_.dims(); ++l) {
    const int v = features[static_cast<std::size_t>(l)];
    if (v < 0 || v >= scheme_.card(l)) return std::nullopt;
  }
  if (full_) return scheme_.full_index(features);
  const auto it = std::find(actions_.begin(), actions_.end(), features);
  if (it == actions_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - actions_.begin());
}

}  // namespace opl

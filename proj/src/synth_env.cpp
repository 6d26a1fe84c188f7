#include "opl/synth_env.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>
#include <string>

#include "opl/errors.hpp"

namespace opl {

ActionPartition ActionPartition::from_mask(std::vector<char> is_new) {
  ActionPartition p;
  p.is_new = std::move(is_new);
  for (std::size_t a = 0; a < p.is_new.size(); ++a) (p.is_new[a] ? p.fresh : p.existing).push_back(a);
  return p;
}

void SynthConfig::validate() const {
  if (context_dim < 1) throw ConfigError("context_dim must be >= 1");
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
  if (!std::isfinite(beta)) throw ConfigError("beta must be finite");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  if (!(new_action_fraction >= 0.0 && new_action_fraction < 1.0)) {
    throw ConfigError("new_action_fraction must lie in [0, 1)");
  }
  if (!(reward_low <= reward_high)) throw ConfigError("reward_range must satisfy low <= high");
  try {
    (void)scheme();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
}

std::uint64_t hash_features(const Vector& x) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    std::uint64_t bits = 0;
    const double v = x[i] == 0.0 ? 0.0 : x[i];  // fold -0.0
    std::memcpy(&bits, &v, sizeof bits);
    h = mix64(h ^ bits);
  }
  return h;
}

EnvOracle::EnvOracle(std::shared_ptr<const ActionSpace> space, ActionPartition partition,
                     RewardModel model, double beta, double noise_sigma, double context_mean)
    : space_(std::move(space)),
      partition_(std::make_shared<const ActionPartition>(std::move(partition))),
      rewards_(std::move(model)),
      beta_(beta),
      noise_sigma_(noise_sigma),
      context_mean_(context_mean) {
  const auto& m = std::get<RewardModel>(rewards_);
  if (!space_->is_full_enumeration()) throw InvalidInput("synthetic env needs the full action enumeration");
  context_dim_ = static_cast<int>(m.local.rows());
  if (m.full.cols() != static_cast<Eigen::Index>(space_->size())) {
    throw InvalidInput("reward model full-interaction block does not match |A|");
  }
  if (partition_->size() != space_->size()) throw InvalidInput("partition does not match action space");
}

EnvOracle::EnvOracle(std::shared_ptr<const ActionSpace> space, ActionPartition partition,
                     TabularRewards table, double beta, double noise_sigma)
    : space_(std::move(space)),
      partition_(std::make_shared<const ActionPartition>(std::move(partition))),
      rewards_(std::move(table)),
      beta_(beta),
      noise_sigma_(noise_sigma) {
  auto& t = std::get<TabularRewards>(rewards_);
  context_dim_ = static_cast<int>(t.user_features.cols());
  if (t.rewards.cols() != static_cast<Eigen::Index>(space_->size()) ||
      t.rewards.rows() != t.user_features.rows()) {
    throw InvalidInput("reward table shape does not match users x actions");
  }
  if (partition_->size() != space_->size()) throw InvalidInput("partition does not match action space");
  if (t.user_by_hash.empty()) {
    for (Eigen::Index u = 0; u < t.user_features.rows(); ++u) {
      t.user_by_hash.emplace(hash_features(t.user_features.row(u).transpose()), static_cast<int>(u));
    }
  }
}

int EnvOracle::resolve_user(const Context& ctx) const {
  const auto& t = std::get<TabularRewards>(rewards_);
  if (ctx.user >= 0 && ctx.user < t.rewards.rows()) return ctx.user;
  const auto it = t.user_by_hash.find(hash_features(ctx.x));
  if (it == t.user_by_hash.end()) throw InvalidInput("context does not match any known user");
  return it->second;
}

void EnvOracle::q_row(const Context& ctx, std::span<double> out) const {
  const std::size_t n = space_->size();
  if (out.size() != n) throw InvalidInput("q_row output has wrong length");
  if (const auto* t = table()) {
    const int u = resolve_user(ctx);
    for (std::size_t a = 0; a < n; ++a) out[a] = t->rewards(u, static_cast<Eigen::Index>(a));
    return;
  }
  const auto& m = std::get<RewardModel>(rewards_);
  if (ctx.x.size() != context_dim_) throw InvalidInput("context dimension mismatch");
  const FeatureScheme& scheme = space_->scheme();
  std::vector<Vector> marg;
  marg.reserve(static_cast<std::size_t>(scheme.dims()));
  for (const auto& ml : m.marginal) marg.push_back(ml.transpose() * ctx.x);
  const Vector local = m.local.transpose() * ctx.x;
  const Vector full = m.gamma != 0.0 ? Vector(m.full.transpose() * ctx.x) : Vector();
  const int ml = scheme.marginal_length();
  for (std::size_t a = 0; a < n; ++a) {
    const auto& f = space_->features(a);
    double q = 0.0;
    for (int l = 0; l < scheme.dims(); ++l) q += marg[static_cast<std::size_t>(l)][f[static_cast<std::size_t>(l)]];
    q += local[space_->active(a, IndicatorMode::kLCPI).back() - ml];
    if (m.gamma != 0.0) q += m.gamma * full[static_cast<Eigen::Index>(a)];
    out[a] = q;
  }
}

std::vector<double> EnvOracle::q_row(const Context& ctx) const {
  std::vector<double> out(space_->size());
  q_row(ctx, out);
  return out;
}

double EnvOracle::q_true(const Context& ctx, std::size_t a) const {
  if (a >= space_->size()) throw InvalidInput("action id out of range");
  if (const auto* t = table()) return t->rewards(resolve_user(ctx), static_cast<Eigen::Index>(a));
  const auto& m = std::get<RewardModel>(rewards_);
  if (ctx.x.size() != context_dim_) throw InvalidInput("context dimension mismatch");
  const FeatureScheme& scheme = space_->scheme();
  const auto& f = space_->features(a);
  double q = 0.0;
  for (int l = 0; l < scheme.dims(); ++l) {
    q += ctx.x.dot(m.marginal[static_cast<std::size_t>(l)].col(f[static_cast<std::size_t>(l)]));
  }
  q += ctx.x.dot(m.local.col(scheme.interaction_index(f)));
  if (m.gamma != 0.0) q += m.gamma * ctx.x.dot(m.full.col(static_cast<Eigen::Index>(a)));
  return q;
}

void EnvOracle::logging_probs(const Context& ctx, std::span<double> out) const {
  q_row(ctx, out);
  const auto& part = *partition_;
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t a : part.existing) mx = std::max(mx, beta_ * out[a]);
  double z = 0.0;
  for (std::size_t a = 0; a < out.size(); ++a) {
    if (part.is_new[a]) {
      out[a] = 0.0;
    } else {
      out[a] = std::exp(beta_ * out[a] - mx);
      z += out[a];
    }
  }
  for (std::size_t a : part.existing) out[a] /= z;
}

std::vector<double> EnvOracle::logging_probs(const Context& ctx) const {
  std::vector<double> out(space_->size());
  logging_probs(ctx, out);
  return out;
}

Context EnvOracle::sample_context(Rng& rng) const {
  if (const auto* t = table()) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(t->user_features.rows()) - 1);
    const int u = pick(rng);
    return Context{t->user_features.row(u).transpose(), u};
  }
  std::normal_distribution<double> normal(context_mean_, 1.0);
  Context ctx{Vector(context_dim_), -1};
  for (int j = 0; j < context_dim_; ++j) ctx.x[j] = normal(rng);
  return ctx;
}

double EnvOracle::coverage_ratio() const {
  const FeatureScheme& scheme = space_->scheme();
  const auto inter = scheme.interaction_dims();
  std::set<int> combos_all, combos_cov;
  std::set<std::pair<int, int>> vals_all, vals_cov;
  for (std::size_t a = 0; a < space_->size(); ++a) {
    const auto& f = space_->features(a);
    const bool existing = !partition_->is_new[a];
    const int code = scheme.interaction_index(f);
    combos_all.insert(code);
    if (existing) combos_cov.insert(code);
    for (int l = 0; l < scheme.dims(); ++l) {
      if (std::find(inter.begin(), inter.end(), l) != inter.end()) continue;
      vals_all.emplace(l, f[static_cast<std::size_t>(l)]);
      if (existing) vals_cov.emplace(l, f[static_cast<std::size_t>(l)]);
    }
  }
  const double total = static_cast<double>(combos_all.size() + vals_all.size());
  return static_cast<double>(combos_cov.size() + vals_cov.size()) / total;
}

std::vector<std::size_t> base_existing_actions(const ActionSpace& space) {
  const FeatureScheme& scheme = space.scheme();
  std::set<std::size_t> ids;
  const int widest = *std::max_element(scheme.cards().begin(), scheme.cards().end());
  // diagonal actions; dimensions with fewer values cycle
  for (int i = 0; i < widest; ++i) {
    ActionFeatures f(static_cast<std::size_t>(scheme.dims()));
    for (int l = 0; l < scheme.dims(); ++l) f[static_cast<std::size_t>(l)] = i % scheme.card(l);
    if (auto id = space.find(f)) ids.insert(*id);
  }
  // every interaction combination, value 0 elsewhere
  const auto inter = scheme.interaction_dims();
  for (int code = 0; code < scheme.interaction_length(); ++code) {
    ActionFeatures f(static_cast<std::size_t>(scheme.dims()), 0);
    int rest = code;
    for (auto it = inter.rbegin(); it != inter.rend(); ++it) {
      f[static_cast<std::size_t>(*it)] = rest % scheme.card(*it);
      rest /= scheme.card(*it);
    }
    if (auto id = space.find(f)) ids.insert(*id);
  }
  return {ids.begin(), ids.end()};
}

FeatureMarginals feature_marginals(const ActionSpace& space, std::span<const double> probs) {
  const FeatureScheme& scheme = space.scheme();
  FeatureMarginals fm;
  fm.marginal.assign(static_cast<std::size_t>(scheme.marginal_length()), 0.0);
  fm.interaction.assign(static_cast<std::size_t>(scheme.interaction_length()), 0.0);
  const int ml = scheme.marginal_length();
  for (std::size_t a = 0; a < space.size(); ++a) {
    const auto bits = space.active(a, IndicatorMode::kLCPI);
    for (int l = 0; l < scheme.dims(); ++l) fm.marginal[static_cast<std::size_t>(bits[static_cast<std::size_t>(l)])] += probs[a];
    fm.interaction[static_cast<std::size_t>(bits.back() - ml)] += probs[a];
  }
  return fm;
}

EnvOracle build_env(const SynthConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, 0xE4F));
  auto space = std::make_shared<const ActionSpace>(config.scheme());
  const std::size_t total = space->size();

  const auto base = base_existing_actions(*space);
  const auto target = static_cast<std::size_t>(
      std::llround((1.0 - config.new_action_fraction) * static_cast<double>(total)));
  if (base.size() > target) {
    throw ConfigError("new_action_fraction " + std::to_string(config.new_action_fraction) +
                      " leaves " + std::to_string(target) + " existing actions, but the support base needs " +
                      std::to_string(base.size()));
  }
  std::vector<char> is_new(total, 1);
  for (std::size_t a : base) is_new[a] = 0;
  std::vector<std::size_t> pool;
  for (std::size_t a = 0; a < total; ++a) {
    if (is_new[a]) pool.push_back(a);
  }
  std::shuffle(pool.begin(), pool.end(), rng);
  for (std::size_t k = 0; k < target - base.size(); ++k) is_new[pool[k]] = 0;

  const FeatureScheme& scheme = space->scheme();
  std::uniform_real_distribution<double> unif(config.reward_low, config.reward_high);
  auto draw = [&](Eigen::Index cols) {
    DenseMatrix m(config.context_dim, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = unif(rng);
    }
    return m;
  };
  RewardModel model;
  for (int l = 0; l < scheme.dims(); ++l) model.marginal.push_back(draw(scheme.card(l)));
  model.local = draw(scheme.interaction_length());
  model.full = draw(static_cast<Eigen::Index>(total));
  model.gamma = config.gamma;

  return EnvOracle(std::move(space), ActionPartition::from_mask(std::move(is_new)), std::move(model),
                   config.beta, config.noise_sigma, config.context_mean);
}

}  // namespace opl

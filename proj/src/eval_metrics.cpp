#include "opl/eval_metrics.hpp"

#include <string>

#include "opl/errors.hpp"

namespace opl {

EvalSet::Sums& EvalSet::Sums::operator+=(const Sums& o) {
  total += o.total;
  existing_value += o.existing_value;
  existing_mass += o.existing_mass;
  new_value += o.new_value;
  new_mass += o.new_mass;
  return *this;
}

EvalSet::EvalSet(const EnvOracle& env, std::size_t n_contexts, std::uint64_t seed) : env_(&env) {
  if (n_contexts < 1) throw InvalidInput("evaluation needs at least one context");
  Rng rng(derive_seed(seed, 0xE7A1));
  contexts_.reserve(n_contexts);
  for (std::size_t i = 0; i < n_contexts; ++i) contexts_.push_back(env.sample_context(rng));
  q_.resize(static_cast<Eigen::Index>(n_contexts), static_cast<Eigen::Index>(env.action_count()));
  std::vector<double> row(env.action_count());
  for (std::size_t i = 0; i < n_contexts; ++i) {
    env.q_row(contexts_[i], row);
    for (std::size_t a = 0; a < row.size(); ++a) q_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) = row[a];
  }
  uniform_ = sums(UniformPolicy{});
}

namespace {

struct SumAcc {
  EvalSet::Sums s;
  std::vector<double> probs;
  SumAcc& operator+=(const SumAcc& o) {
    s += o.s;
    return *this;
  }
};

}  // namespace

EvalSet::Sums EvalSet::sums(const Policy& policy, Exec exec) const {
  const auto& part = env_->partition();
  const std::size_t na = env_->action_count();
  auto make = [&] {
    SumAcc acc;
    acc.probs.resize(na);
    return acc;
  };
  auto body = [&](std::size_t i, SumAcc& acc) {
    policy.probs(contexts_[i], acc.probs);
    const auto qi = q_.row(static_cast<Eigen::Index>(i));
    for (std::size_t a = 0; a < na; ++a) {
      const double p = acc.probs[a];
      if (p == 0.0) continue;
      const double pq = p * qi[static_cast<Eigen::Index>(a)];
      acc.s.total += pq;
      if (part.is_new[a]) {
        acc.s.new_value += pq;
        acc.s.new_mass += p;
      } else {
        acc.s.existing_value += pq;
        acc.s.existing_mass += p;
      }
    }
  };
  SumAcc acc = chunked_reduce<SumAcc>(contexts_.size(), exec, make, body);
  const double inv = 1.0 / static_cast<double>(contexts_.size());
  Sums s = acc.s;
  s.total *= inv;
  s.existing_value *= inv;
  s.existing_mass *= inv;
  s.new_value *= inv;
  s.new_mass *= inv;
  return s;
}

MetricsReport evaluate(const Policy& policy, const EvalSet& eval, Exec exec) {
  const auto s = eval.sums(policy, exec);
  const auto& u = eval.uniform();
  MetricsReport r;
  r.overall_value = s.total;
  r.existing_mass = s.existing_mass;
  r.new_action_mass = s.new_mass;
  r.value_per_existing = s.existing_mass > kUndefinedMass ? s.existing_value / s.existing_mass : 0.0;
  if (s.new_mass >= kUndefinedMass) r.value_per_new = s.new_value / s.new_mass;

  r.norm_overall = s.total / u.total;
  r.norm_existing = r.value_per_existing / (u.existing_value / u.existing_mass);
  if (r.value_per_new && u.new_mass >= kUndefinedMass) r.norm_new = *r.value_per_new / (u.new_value / u.new_mass);
  return r;
}

MetricsReport evaluate(const Policy& policy, const EnvOracle& env, std::size_t n_eval_contexts, std::uint64_t seed) {
  return evaluate(policy, EvalSet(env, n_eval_contexts, seed));
}

}  // namespace opl

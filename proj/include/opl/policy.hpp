#pragma once

#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "opl/synth_env.hpp"

namespace opl {

/// Anything that maps a context to a distribution over the action space.
class Policy {
 public:
  virtual ~Policy() = default;
  /// Writes pi(.|ctx) into `out` (size |A|).
  virtual void probs(const Context& ctx, std::span<double> out) const = 0;
};

/// Parameters of the softmax-linear policy
///   pi_theta(a|x) ∝ exp(x' theta I_a),
/// where I_a is the LCPI-mode indicator. `support`, when set, masks the
/// policy to the actions flagged 1 (used by baselines restricted to existing
/// actions); masked actions receive probability exactly 0.
class PolicyParams {
 public:
  PolicyParams(std::shared_ptr<const ActionSpace> space, int context_dim,
               std::shared_ptr<const std::vector<char>> support = nullptr);

  const ActionSpace& space() const { return *space_; }
  const std::shared_ptr<const ActionSpace>& space_ptr() const { return space_; }
  const std::shared_ptr<const std::vector<char>>& support() const { return support_; }
  bool supports(std::size_t a) const { return !support_ || (*support_)[a]; }

  DenseMatrix& theta() { return theta_; }
  const DenseMatrix& theta() const { return theta_; }
  int context_dim() const { return static_cast<int>(theta_.rows()); }
  int indicator_length() const { return static_cast<int>(theta_.cols()); }

  /// Per-action logits x' theta I_a (−inf on masked actions).
  void logits(const Vector& x, std::span<double> out) const;
  /// Throws NumericError on non-finite logits.
  void action_probs(const Vector& x, std::span<double> out) const;
  std::vector<double> action_probs(const Vector& x) const;

  /// Expected indicator sum_a pi(a|x) I_a, given probabilities.
  Vector mean_indicator(std::span<const double> probs) const;

  /// Score function x ⊗ (I_a − E_pi[I]), shaped like theta.
  DenseMatrix grad_log_prob(const Vector& x, std::size_t a) const;

 private:
  std::shared_ptr<const ActionSpace> space_;
  std::shared_ptr<const std::vector<char>> support_;
  DenseMatrix theta_;
};

/// Mean over contexts of the probability mass placed on new actions.
double new_action_mass(const Policy& policy, const ActionPartition& partition,
                       std::span<const Context> contexts);
double new_action_mass(const PolicyParams& params, const ActionPartition& partition,
                       std::span<const Context> contexts);

/// Softmax policy over PolicyParams; `argmax` deploys the mode instead
/// (ties broken toward the lowest action id).
class SoftmaxPolicy final : public Policy {
 public:
  explicit SoftmaxPolicy(PolicyParams params, bool argmax = false)
      : params_(std::move(params)), argmax_(argmax) {}
  void probs(const Context& ctx, std::span<double> out) const override;
  const PolicyParams& params() const { return params_; }

 private:
  PolicyParams params_;
  bool argmax_;
};

class UniformPolicy final : public Policy {
 public:
  void probs(const Context& ctx, std::span<double> out) const override;
};

class LoggingPolicy final : public Policy {
 public:
  explicit LoggingPolicy(const EnvOracle& env) : env_(&env) {}
  void probs(const Context& ctx, std::span<double> out) const override { env_->logging_probs(ctx, out); }

 private:
  const EnvOracle* env_;
};

/// Puts all mass on the argmax of `probs` (lowest id on ties).
void to_argmax(std::span<double> probs);

/// Text checkpoint: "theta <rows> <cols>" header, then row-major values at
/// 17 significant digits.
void write_params(std::ostream& os, const PolicyParams& params);
/// Reads values written by write_params into `params`, whose shape must match.
void read_params(std::istream& is, PolicyParams& params);

}  // namespace opl

#include "opl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "opl/errors.hpp"

namespace opl {

PolicyParams::PolicyParams(std::shared_ptr<const ActionSpace> space, int context_dim,
                           std::shared_ptr<const std::vector<char>> support)
    : space_(std::move(space)),
      support_(std::move(support)),
      theta_(DenseMatrix::Zero(context_dim, space_->indicator_length(IndicatorMode::kLCPI))) {
  if (context_dim < 1) throw InvalidInput("policy needs context_dim >= 1");
  if (support_) {
    if (support_->size() != space_->size()) throw InvalidInput("support mask does not match action space");
    if (std::none_of(support_->begin(), support_->end(), [](char c) { return c != 0; })) {
      throw InvalidInput("support mask is empty");
    }
  }
}

void PolicyParams::logits(const Vector& x, std::span<double> out) const {
  if (x.size() != theta_.rows()) throw InvalidInput("context dimension does not match theta");
  if (out.size() != space_->size()) throw InvalidInput("logit buffer has wrong length");
  const Vector u = theta_.transpose() * x;
  for (std::size_t a = 0; a < out.size(); ++a) {
    if (!supports(a)) {
      out[a] = -std::numeric_limits<double>::infinity();
      continue;
    }
    double s = 0.0;
    for (int k : space_->active(a, IndicatorMode::kLCPI)) s += u[k];
    out[a] = s;
  }
}

void PolicyParams::action_probs(const Vector& x, std::span<double> out) const {
  if (x.size() != theta_.rows()) throw InvalidInput("context dimension does not match theta");
  if (out.size() != space_->size()) throw InvalidInput("probability buffer has wrong length");
  // exp(sum_k u_k) = prod_k exp(u_k): one exp per indicator bit instead of
  // one per action. Each block is shifted by its own max.
  const FeatureScheme& scheme = space_->scheme();
  const Vector u = theta_.transpose() * x;
  if (!u.allFinite()) throw NumericError("non-finite policy logit");
  Vector e(u.size());
  auto shift_block = [&](int begin, int len) {
    const double mx = u.segment(begin, len).maxCoeff();
    for (int k = begin; k < begin + len; ++k) e[k] = std::exp(u[k] - mx);
  };
  for (int l = 0; l < scheme.dims(); ++l) shift_block(scheme.marginal_offset(l), scheme.card(l));
  shift_block(scheme.marginal_length(), scheme.interaction_length());

  double z = 0.0;
  for (std::size_t a = 0; a < out.size(); ++a) {
    if (!supports(a)) {
      out[a] = 0.0;
      continue;
    }
    double v = 1.0;
    for (int k : space_->active(a, IndicatorMode::kLCPI)) v *= e[k];
    out[a] = v;
    z += v;
  }
  if (!(z > 1e-250)) {
    // extreme logit spread: fall back to the max-subtracted softmax
    logits(x, out);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < out.size(); ++a) {
      if (supports(a)) mx = std::max(mx, out[a]);
    }
    z = 0.0;
    for (double& v : out) {
      v = std::exp(v - mx);
      z += v;
    }
  }
  const double inv = 1.0 / z;
  for (double& v : out) v *= inv;
}

std::vector<double> PolicyParams::action_probs(const Vector& x) const {
  std::vector<double> out(space_->size());
  action_probs(x, out);
  return out;
}

Vector PolicyParams::mean_indicator(std::span<const double> probs) const {
  Vector bar = Vector::Zero(theta_.cols());
  for (std::size_t a = 0; a < probs.size(); ++a) {
    if (probs[a] == 0.0) continue;
    for (int k : space_->active(a, IndicatorMode::kLCPI)) bar[k] += probs[a];
  }
  return bar;
}

DenseMatrix PolicyParams::grad_log_prob(const Vector& x, std::size_t a) const {
  if (a >= space_->size()) throw InvalidInput("action id out of range");
  const auto p = action_probs(x);
  Vector dir = -mean_indicator(p);
  for (int k : space_->active(a, IndicatorMode::kLCPI)) dir[k] += 1.0;
  return x * dir.transpose();
}

double new_action_mass(const Policy& policy, const ActionPartition& partition,
                       std::span<const Context> contexts) {
  if (contexts.empty()) throw InvalidInput("new_action_mass needs at least one context");
  std::vector<double> p(partition.size());
  double total = 0.0;
  for (const auto& ctx : contexts) {
    policy.probs(ctx, p);
    double m = 0.0;
    for (std::size_t a : partition.fresh) m += p[a];
    total += m;
  }
  return total / static_cast<double>(contexts.size());
}

double new_action_mass(const PolicyParams& params, const ActionPartition& partition,
                       std::span<const Context> contexts) {
  return new_action_mass(SoftmaxPolicy(params), partition, contexts);
}

void to_argmax(std::span<double> probs) {
  if (probs.empty()) return;
  const auto best = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  std::fill(probs.begin(), probs.end(), 0.0);
  probs[best] = 1.0;
}

void SoftmaxPolicy::probs(const Context& ctx, std::span<double> out) const {
  params_.action_probs(ctx.x, out);
  if (argmax_) to_argmax(out);
}

void UniformPolicy::probs(const Context&, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(out.size()));
}

void write_params(std::ostream& os, const PolicyParams& params) {
  const auto& t = params.theta();
  os << "theta " << t.rows() << ' ' << t.cols() << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.cols(); ++j) os << (j ? " " : "") << t(i, j);
    os << '\n';
  }
}

void read_params(std::istream& is, PolicyParams& params) {
  std::string tag;
  Eigen::Index rows = 0, cols = 0;
  if (!(is >> tag >> rows >> cols) || tag != "theta") throw ParseError("checkpoint: missing 'theta' header");
  auto& t = params.theta();
  if (rows != t.rows() || cols != t.cols()) {
    throw ParseError("checkpoint shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " does not match policy " + std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
  }
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (!(is >> t(i, j))) throw ParseError("checkpoint: truncated values");
    }
  }
}

}  // namespace opl

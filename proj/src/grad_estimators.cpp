#include "opl/grad_estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <tuple>
#include <type_traits>
#include <utility>

#include "opl/errors.hpp"

namespace opl {

std::string_view estimator_name(Estimator e) {
  switch (e) {
    case Estimator::kIPS: return "ips";
    case Estimator::kDR: return "dr";
    case Estimator::kPI: return "pi";
    case Estimator::kLCPI: return "lcpi";
    case Estimator::kPONA: return "pona";
  }
  return "?";
}

LoggingDistribution logging_source(const EnvOracle& env) {
  return [&env](const Context& ctx, std::span<double> out) { env.logging_probs(ctx, out); };
}

DenseMatrix gamma_matrix(std::span<const double> logging_probs, const ActionSpace& space,
                         IndicatorMode mode) {
  if (logging_probs.size() != space.size()) throw InvalidInput("logging distribution has wrong length");
  const double total = std::accumulate(logging_probs.begin(), logging_probs.end(), 0.0);
  if (!(std::abs(total - 1.0) <= 1e-9)) {
    throw InvalidInput("logging probabilities sum to " + std::to_string(total) + ", expected 1");
  }
  const int len = space.indicator_length(mode);
  DenseMatrix g = DenseMatrix::Zero(len, len);
  for (std::size_t a = 0; a < space.size(); ++a) {
    const double p = logging_probs[a];
    if (p == 0.0) continue;
    if (p < 0.0) throw InvalidInput("negative logging probability");
    const auto bits = space.active(a, mode);
    for (int i : bits) {
      for (int j : bits) g(i, j) += p;
    }
  }
  return g;
}

DenseMatrix gamma_matrix(const Context& ctx, const LoggingDistribution& logging,
                         const ActionSpace& space, IndicatorMode mode) {
  std::vector<double> p(space.size());
  logging(ctx, p);
  return gamma_matrix(p, space, mode);
}

Vector value_vector(std::span<const double> logging_probs, std::span<const double> q_row,
                    const ActionSpace& space, IndicatorMode mode) {
  Vector v = Vector::Zero(space.indicator_length(mode));
  for (std::size_t a = 0; a < space.size(); ++a) {
    if (logging_probs[a] == 0.0) continue;
    for (int k : space.active(a, mode)) v[k] += logging_probs[a] * q_row[a];
  }
  return v;
}

PseudoinverseWeights prepare_pseudoinverse(const LoggedDataset& data, IndicatorMode mode,
                                           const LoggingDistribution& logging, double tol, Exec exec) {
  const ActionSpace& space = *data.space;
  PseudoinverseWeights out{mode, DenseMatrix::Zero(static_cast<Eigen::Index>(data.size()),
                                                   space.indicator_length(mode))};
  const auto n = static_cast<std::ptrdiff_t>(data.size());
  auto one_row = [&](std::ptrdiff_t i) {
    const auto& row = data.rows[static_cast<std::size_t>(i)];
    const DenseMatrix g = gamma_matrix(row.context, logging, space, mode);
    const DenseMatrix gp = pinv(g, tol, Symmetry::kSymmetric);
    Vector v = Vector::Zero(gp.cols());
    for (int k : space.active(row.action, mode)) v += gp.col(k);
    out.rows.row(i) = v.transpose();
  };
  if (exec == Exec::kSerial) {
    for (std::ptrdiff_t i = 0; i < n; ++i) one_row(i);
  } else {
    // rows are independent; exceptions are rethrown after the loop
    std::exception_ptr err;
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      try {
        one_row(i);
      } catch (...) {
#pragma omp critical(opl_pinv_err)
        if (!err) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
  }
  return out;
}

ModelTable prepare_model_table(const LoggedDataset& data, const QModel& model) {
  const ActionSpace& space = *data.space;
  ModelTable t{DenseMatrix::Zero(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(space.size()))};
  std::vector<double> q(space.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    model.predict_row(data.rows[i].context.x, q);
    for (std::size_t a : data.partition->existing) {
      t.q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) = q[a];
    }
  }
  return t;
}

namespace {

/// Where the smooth part of alpha_a comes from.
enum class Coef { kNone, kActionTable, kBitWeights };

struct CoefSource {
  Coef kind = Coef::kNone;
  const RowMatrix* table = nullptr;  // kActionTable: alpha_a += pi_a * table(i, a)
  const RowMatrix* bits = nullptr;   // kBitWeights: alpha_a += pi_a * r_i * sum_{k in a} bits(i, k)
  int nbits = 0;                     // bits per action used by kBitWeights
};

/// On a full enumeration with no support mask the softmax factorizes into
/// the joint over the interaction dimensions times one independent factor
/// per remaining dimension, and a bit-additive c_a splits the same way, so
/// E_pi[I] and sum_a pi_a c_a I_a need no pass over the actions.
struct Factored {
  std::vector<int> joint_bits;  // per combo: marginal bits of the interaction dims, then its own bit
  int width = 0;                // entries per combo in joint_bits
  int combos = 0;
  std::vector<int> free_dims;
  const FeatureScheme* scheme = nullptr;
  std::vector<double> vj, cj;

  explicit Factored(const FeatureScheme& sc) : scheme(&sc) {
    const auto sdims = sc.interaction_dims();
    combos = sc.interaction_length();
    width = static_cast<int>(sdims.size()) + 1;
    joint_bits.resize(static_cast<std::size_t>(combos * width));
    for (int j = 0; j < combos; ++j) {
      int rem = j;
      for (int t = static_cast<int>(sdims.size()) - 1; t >= 0; --t) {
        const int l = sdims[static_cast<std::size_t>(t)];
        joint_bits[static_cast<std::size_t>(j * width + t)] = sc.marginal_offset(l) + rem % sc.card(l);
        rem /= sc.card(l);
      }
      joint_bits[static_cast<std::size_t>(j * width + width - 1)] = sc.marginal_length() + j;
    }
    std::vector<char> in_joint(static_cast<std::size_t>(sc.dims()), 0);
    for (int l : sdims) in_joint[static_cast<std::size_t>(l)] = 1;
    for (int l = 0; l < sc.dims(); ++l) {
      if (!in_joint[static_cast<std::size_t>(l)]) free_dims.push_back(l);
    }
    vj.resize(static_cast<std::size_t>(combos));
    cj.resize(static_cast<std::size_t>(combos));
  }

  /// Fills bar = E_pi[I] and dir = sum_a pi_a c_a I_a with c_a = scale *
  /// sum of bw over a's first `nbits` bits (bw may be null: c = 0). Returns
  /// (normalizer of the joint factor, sum_a pi_a c_a, product of all
  /// normalizers); the first is tiny when the factorization underflows.
  std::tuple<double, double, double> row(const Vector& e, const double* bw, double scale, int nbits, Vector& bar,
                                         Vector& dir) {
    const bool with_own = nbits > scheme->dims();
    double zs = 0.0;
    for (int j = 0; j < combos; ++j) {
      const int* jb = &joint_bits[static_cast<std::size_t>(j * width)];
      double v = 1.0;
      for (int t = 0; t < width; ++t) v *= e[jb[t]];
      double c = 0.0;
      if (bw) {
        for (int t = 0; t < width - 1; ++t) c += bw[jb[t]];
        if (with_own) c += bw[jb[width - 1]];
        c *= scale;
      }
      vj[static_cast<std::size_t>(j)] = v;
      cj[static_cast<std::size_t>(j)] = c;
      zs += v;
    }
    if (!(zs > 1e-250)) return {zs, 0.0, 0.0};
    const double inv_s = 1.0 / zs;
    double ms = 0.0;
    for (int j = 0; j < combos; ++j) {
      vj[static_cast<std::size_t>(j)] *= inv_s;
      ms += vj[static_cast<std::size_t>(j)] * cj[static_cast<std::size_t>(j)];
    }
    double total = ms, zall = zs;
    std::vector<double>& mfree = scratch_m;
    mfree.assign(free_dims.size(), 0.0);
    for (std::size_t g = 0; g < free_dims.size(); ++g) {
      const int l = free_dims[g];
      const int off = scheme->marginal_offset(l), card = scheme->card(l);
      double z = 0.0;
      for (int f = 0; f < card; ++f) z += e[off + f];
      zall *= z;
      const double inv = 1.0 / z;
      double m = 0.0;
      for (int f = 0; f < card; ++f) {
        bar[off + f] = e[off + f] * inv;
        m += bar[off + f] * (bw ? scale * bw[off + f] : 0.0);
      }
      mfree[g] = m;
      total += m;
    }
    for (std::size_t g = 0; g < free_dims.size(); ++g) {
      const int l = free_dims[g];
      const int off = scheme->marginal_offset(l), card = scheme->card(l);
      const double rest = total - mfree[g];
      for (int f = 0; f < card; ++f) dir[off + f] = bar[off + f] * ((bw ? scale * bw[off + f] : 0.0) + rest);
    }
    for (int t = 0; t < width - 1; ++t) {
      for (int j = 0; j < combos; ++j) {
        const int b = joint_bits[static_cast<std::size_t>(j * width + t)];
        bar[b] = 0.0;
        dir[b] = 0.0;
      }
    }
    const double rest = total - ms;
    for (int j = 0; j < combos; ++j) {
      const int* jb = &joint_bits[static_cast<std::size_t>(j * width)];
      const double p = vj[static_cast<std::size_t>(j)];
      const double d = p * (cj[static_cast<std::size_t>(j)] + rest);
      for (int t = 0; t < width - 1; ++t) {
        bar[jb[t]] += p;
        dir[jb[t]] += d;
      }
      bar[jb[width - 1]] = p;
      dir[jb[width - 1]] = d;
    }
    return {zs, total, zall};
  }

  std::vector<double> scratch_m;
};

struct GradAcc {
  DenseMatrix grad;
  double value = 0.0;
  double max_w = 0.0;
  double sum_w = 0.0;
  double sum_w2 = 0.0;
  // per-chunk scratch, never combined
  std::vector<double> probs, v, vc;
  Vector u;
  Vector e;
  Vector dir;
  Vector bar;
  std::optional<Factored> factored;

  GradAcc& operator+=(const GradAcc& o) {
    grad += o.grad;
    value += o.value;
    max_w = std::max(max_w, o.max_w);
    sum_w += o.sum_w;
    sum_w2 += o.sum_w2;
    return *this;
  }
};

/// Shared kernel. Each row's gradient is
///   sum_a alpha_a grad log pi(a|x_i) = x_i ⊗ (sum_a alpha_a I_a − (sum_a alpha_a) E_pi[I])
/// with value estimate sum_a alpha_a, where alpha_a = pi_a c_a from `coef`
/// plus point(i, pi(a_i|x_i), w_i) on the logged action.
///
/// One pass over the actions builds the unnormalized softmax as a product of
/// per-bit exponentials and accumulates E_pi[I] and sum_a pi_a c_a I_a
/// together.
template <typename Point>
GradientEstimate run_kernel(const PolicyParams& policy, const LoggedDataset& data,
                            const EstimatorOptions& opts, Estimator tag, bool needs_propensity,
                            const CoefSource& coef, Point point) {
  if (data.empty()) throw InvalidInput("estimator needs a non-empty dataset");
  const ActionSpace& space = policy.space();
  const FeatureScheme& scheme = space.scheme();
  const std::size_t na = space.size();
  const Eigen::Index dx = policy.context_dim();
  const Eigen::Index len = policy.indicator_length();
  const std::size_t count = opts.rows.empty() ? data.size() : opts.rows.size();
  const DenseMatrix& theta = policy.theta();
  const std::vector<char>* support = policy.support().get();
  const std::size_t stride = static_cast<std::size_t>(scheme.dims()) + 1;
  const std::span<const int> all_bits = na ? space.active(0, IndicatorMode::kLCPI) : std::span<const int>{};
  const int* bits = all_bits.data();
  const bool use_factored = space.is_full_enumeration() && !support && coef.kind != Coef::kActionTable;

  auto make = [&] {
    GradAcc acc;
    acc.grad = DenseMatrix::Zero(dx, len);
    acc.u.resize(len);
    acc.e.resize(len);
    acc.dir.resize(len);
    acc.bar.resize(len);
    acc.v.resize(na);
    acc.vc.resize(na);
    if (use_factored) acc.factored.emplace(scheme);
    return acc;
  };

  // alpha-weighted pass with weights v_a (unnormalized probabilities);
  // returns (sum v, sum v c)
  // actions carrying each bit, for the gather half of the pass
  std::vector<int> bit_start(static_cast<std::size_t>(len) + 1, 0), bit_actions(na * stride);
  if (!use_factored || coef.kind == Coef::kActionTable) {
    for (std::size_t a = 0; a < na * stride; ++a) ++bit_start[static_cast<std::size_t>(bits[a]) + 1];
    for (Eigen::Index k = 0; k < len; ++k) bit_start[static_cast<std::size_t>(k) + 1] += bit_start[static_cast<std::size_t>(k)];
    std::vector<int> fill(bit_start.begin(), bit_start.end() - 1);
    for (std::size_t a = 0; a < na; ++a) {
      for (std::size_t b = 0; b < stride; ++b) bit_actions[static_cast<std::size_t>(fill[static_cast<std::size_t>(bits[a * stride + b])]++)] = static_cast<int>(a);
    }
  }

  // weights v_a (unnormalized probabilities) and v_a c_a per action, then
  // per-bit sums; returns (sum v, sum v c)
  auto pass = [&](auto st, std::size_t i, double reward, GradAcc& acc, auto weight_of) {
    double z = 0.0, zc = 0.0;
    const double* trow = coef.kind == Coef::kActionTable ? coef.table->row(static_cast<Eigen::Index>(i)).data() : nullptr;
    const double* brow = coef.kind == Coef::kBitWeights ? coef.bits->row(static_cast<Eigen::Index>(i)).data() : nullptr;
    double* v = acc.v.data();
    double* vc = acc.vc.data();
    for (std::size_t a = 0; a < na; ++a) {
      const int* ab = bits + a * st;
      const double va = support && !(*support)[a] ? 0.0 : weight_of(a, ab);
      double c = 0.0;
      if (trow) {
        c = trow[a];
      } else if (brow) {
        for (int k = 0; k < coef.nbits; ++k) c += brow[ab[k]];
        c *= reward;
      }
      v[a] = va;
      vc[a] = va * c;
      z += va;
      zc += va * c;
    }
    for (Eigen::Index k = 0; k < len; ++k) {
      double sb = 0.0, sd = 0.0;
      for (int t = bit_start[static_cast<std::size_t>(k)]; t < bit_start[static_cast<std::size_t>(k) + 1]; ++t) {
        const int a = bit_actions[static_cast<std::size_t>(t)];
        sb += v[a];
        sd += vc[a];
      }
      acc.bar[k] = sb;
      acc.dir[k] = sd;
    }
    return std::pair<double, double>{z, zc};
  };

  auto row_body = [&](auto st, std::size_t k, GradAcc& acc) {
    const std::size_t i = opts.rows.empty() ? k : opts.rows[k];
    const LoggedRow& row = data.rows[i];
    if (needs_propensity && !(row.propensity > 0.0)) {
      throw PreconditionError(std::string(estimator_name(tag)) + ": row " + std::to_string(i) +
                              " has zero logging propensity");
    }
    if (row.context.x.size() != dx) throw InvalidInput("context dimension does not match theta");
    acc.u.noalias() = theta.transpose() * row.context.x;
    if (!acc.u.allFinite()) throw NumericError("non-finite policy logit");
    auto shift_block = [&](int begin, int n) {
      const double mx = acc.u.segment(begin, n).maxCoeff();
      for (int b = begin; b < begin + n; ++b) acc.e[b] = std::exp(acc.u[b] - mx);
    };
    for (int l = 0; l < scheme.dims(); ++l) shift_block(scheme.marginal_offset(l), scheme.card(l));
    shift_block(scheme.marginal_length(), scheme.interaction_length());

    auto product = [&](std::size_t, const int* ab) {
      double v = 1.0;
      for (std::size_t b = 0; b < st; ++b) v *= acc.e[ab[b]];
      return v;
    };
    double z = 0.0, zc = 0.0, p_logged = 0.0;
    if (use_factored) {
      const double* brow = coef.kind == Coef::kBitWeights ? coef.bits->row(static_cast<Eigen::Index>(i)).data() : nullptr;
      double zall = 0.0;
      std::tie(z, zc, zall) = acc.factored->row(acc.e, brow, row.reward, coef.nbits, acc.bar, acc.dir);
      if (z > 1e-250) p_logged = product(row.action, bits + row.action * st) / zall;
    } else {
      std::tie(z, zc) = pass(st, i, row.reward, acc, product);
      if (z > 1e-250) {
        const double inv = 1.0 / z;
        acc.bar *= inv;
        acc.dir *= inv;
        zc *= inv;
        p_logged = support && !(*support)[row.action] ? 0.0 : product(row.action, bits + row.action * st) * inv;
      }
    }
    if (!(z > 1e-250)) {
      // extreme logit spread: normalized probabilities from the guarded softmax
      acc.probs.resize(na);
      policy.action_probs(row.context.x, acc.probs);
      std::tie(z, zc) = pass(st, i, row.reward, acc, [&](std::size_t a, const int*) { return acc.probs[a]; });
      p_logged = acc.probs[row.action];
    }

    double w = row.propensity > 0.0 ? p_logged / row.propensity : 0.0;
    acc.max_w = std::max(acc.max_w, w);
    acc.sum_w += w;
    acc.sum_w2 += w * w;
    if (opts.weight_clip) w = std::min(w, *opts.weight_clip);

    const double extra = point(i, p_logged, w);
    double total = zc;
    if (extra != 0.0) {
      for (std::size_t b = 0; b < st; ++b) acc.dir[bits[row.action * st + b]] += extra;
      total += extra;
    }
    acc.dir.noalias() -= total * acc.bar;
    acc.grad.noalias() += row.context.x * acc.dir.transpose();
    acc.value += total;
  };

  // compile-time bit counts for the common shapes
  auto body = [&](std::size_t k, GradAcc& acc) {
    switch (stride) {
      case 2: return row_body(std::integral_constant<std::size_t, 2>{}, k, acc);
      case 3: return row_body(std::integral_constant<std::size_t, 3>{}, k, acc);
      case 4: return row_body(std::integral_constant<std::size_t, 4>{}, k, acc);
      case 5: return row_body(std::integral_constant<std::size_t, 5>{}, k, acc);
      case 6: return row_body(std::integral_constant<std::size_t, 6>{}, k, acc);
      case 7: return row_body(std::integral_constant<std::size_t, 7>{}, k, acc);
      default: return row_body(stride, k, acc);
    }
  };

  GradAcc acc = chunked_reduce<GradAcc>(count, opts.exec, make, body);
  const double inv_n = 1.0 / static_cast<double>(count);
  GradientEstimate est;
  est.grad = acc.grad * inv_n;
  est.estimator = tag;
  est.value = acc.value * inv_n;
  est.max_importance_weight = acc.max_w;
  est.effective_sample_size = acc.sum_w2 > 0.0 ? acc.sum_w * acc.sum_w / acc.sum_w2 : 0.0;
  if (!est.grad.allFinite()) {
    throw NumericError(std::string(estimator_name(tag)) + " produced a non-finite gradient");
  }
  return est;
}

}  // namespace

GradientEstimate grad_ips(const PolicyParams& policy, const LoggedDataset& data,
                          const EstimatorOptions& opts) {
  return run_kernel(policy, data, opts, Estimator::kIPS, true, CoefSource{},
                    [&](std::size_t i, double, double w) { return w * data.rows[i].reward; });
}

GradientEstimate grad_dr(const PolicyParams& policy, const LoggedDataset& data, const ModelTable& model,
                         const EstimatorOptions& opts) {
  if (model.q.rows() != static_cast<Eigen::Index>(data.size()) ||
      model.q.cols() != static_cast<Eigen::Index>(data.space->size())) {
    throw InvalidInput("model table does not match dataset");
  }
  CoefSource coef{Coef::kActionTable, &model.q, nullptr, 0};
  return run_kernel(policy, data, opts, Estimator::kDR, true, coef, [&](std::size_t i, double, double w) {
    const auto& row = data.rows[i];
    return w * (row.reward - model.q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(row.action)));
  });
}

GradientEstimate grad_dr(const PolicyParams& policy, const LoggedDataset& data, const QModel& model,
                         const EstimatorOptions& opts) {
  return grad_dr(policy, data, prepare_model_table(data, model), opts);
}

GradientEstimate grad_pseudoinverse(const PolicyParams& policy, const LoggedDataset& data,
                                    const PseudoinverseWeights& weights, const EstimatorOptions& opts) {
  if (weights.rows.rows() != static_cast<Eigen::Index>(data.size()) ||
      weights.rows.cols() != data.space->indicator_length(weights.mode)) {
    throw InvalidInput("pseudoinverse weights do not match dataset");
  }
  const IndicatorMode mode = weights.mode;
  const Estimator tag = mode == IndicatorMode::kPI ? Estimator::kPI : Estimator::kLCPI;
  const int nbits = data.space->scheme().dims() + (mode == IndicatorMode::kLCPI ? 1 : 0);
  CoefSource coef{Coef::kBitWeights, nullptr, &weights.rows, nbits};
  return run_kernel(policy, data, opts, tag, false, coef, [](std::size_t, double, double) { return 0.0; });
}

GradientEstimate grad_pseudoinverse(const PolicyParams& policy, const LoggedDataset& data,
                                    IndicatorMode mode, const LoggingDistribution& logging,
                                    const EstimatorOptions& opts) {
  return grad_pseudoinverse(policy, data, prepare_pseudoinverse(data, mode, logging), opts);
}

GradientEstimate grad_pona(const PolicyParams& policy, const LoggedDataset& data, const ModelTable& model,
                           const PseudoinverseWeights& lcpi, double kappa, const EstimatorOptions& opts) {
  if (!(kappa >= 0.0 && kappa <= 1.0)) throw InvalidInput("kappa must lie in [0, 1]");
  if (lcpi.mode != IndicatorMode::kLCPI) throw InvalidInput("PONA needs LCPI-mode pseudoinverse weights");
  if (kappa == 0.0 || kappa == 1.0) {
    GradientEstimate out = kappa == 0.0 ? grad_dr(policy, data, model, opts)
                                        : grad_pseudoinverse(policy, data, lcpi, opts);
    out.estimator = Estimator::kPONA;
    return out;
  }
  const GradientEstimate l = grad_pseudoinverse(policy, data, lcpi, opts);
  const GradientEstimate d = grad_dr(policy, data, model, opts);
  GradientEstimate out = d;
  out.estimator = Estimator::kPONA;
  out.grad = kappa * l.grad + (1.0 - kappa) * d.grad;
  out.value = kappa * l.value + (1.0 - kappa) * d.value;
  return out;
}

}  // namespace opl

#include "opl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <string>

#include "opl/errors.hpp"

namespace opl {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (kappa_grid.empty()) throw ConfigError("kappa_grid must not be empty");
  if (!std::is_sorted(kappa_grid.begin(), kappa_grid.end())) throw ConfigError("kappa_grid must be sorted");
  for (double k : kappa_grid) {
    if (!(k >= 0.0 && k <= 1.0)) throw ConfigError("kappa_grid values must lie in [0, 1]");
  }
  if (!(rho_lower <= rho_upper)) throw ConfigError("rho_lower must be <= rho_upper");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must lie in (0, 1)");
  }
  if (!(ridge_lambda_per_row >= 0.0)) throw ConfigError("ridge_lambda_per_row must be >= 0");
  if (!(pinv_tol > 0.0 && pinv_tol < 1.0)) throw ConfigError("pinv_tol must lie in (0, 1)");
}

GradientEstimate estimate_gradient(const EstimatorSpec& spec, const PolicyParams& policy,
                                   const LoggedDataset& data, const EstimatorInputs& inputs,
                                   const EstimatorOptions& opts) {
  auto need = [&](const void* p, const char* what) {
    if (!p) {
      throw InvalidInput(std::string(estimator_name(spec.kind)) + " estimator needs " + what);
    }
  };
  switch (spec.kind) {
    case Estimator::kIPS:
      return grad_ips(policy, data, opts);
    case Estimator::kDR:
      need(inputs.model, "a q-hat model table");
      return grad_dr(policy, data, *inputs.model, opts);
    case Estimator::kPI:
      need(inputs.pi, "PI-mode pseudoinverse weights");
      return grad_pseudoinverse(policy, data, *inputs.pi, opts);
    case Estimator::kLCPI:
      need(inputs.lcpi, "LCPI-mode pseudoinverse weights");
      return grad_pseudoinverse(policy, data, *inputs.lcpi, opts);
    case Estimator::kPONA:
      need(inputs.model, "a q-hat model table");
      need(inputs.lcpi, "LCPI-mode pseudoinverse weights");
      return grad_pona(policy, data, *inputs.model, *inputs.lcpi, spec.kappa, opts);
  }
  throw InvalidInput("unknown estimator");
}

namespace {

double true_value(const PolicyParams& params, const EnvOracle& env, std::span<const Context> contexts) {
  std::vector<double> p(env.action_count()), q(env.action_count());
  double total = 0.0;
  for (const auto& ctx : contexts) {
    params.action_probs(ctx.x, p);
    env.q_row(ctx, q);
    total += std::inner_product(p.begin(), p.end(), q.begin(), 0.0);
  }
  return total / static_cast<double>(contexts.size());
}

}  // namespace

TrainResult train(const EstimatorSpec& spec, const LoggedDataset& data, const EstimatorInputs& inputs,
                  const TrainConfig& cfg, std::shared_ptr<const std::vector<char>> support,
                  const TraceOracle& oracle) {
  if (data.empty()) throw InvalidInput("cannot train on an empty dataset");
  cfg.validate();
  TrainResult result{PolicyParams(data.space, data.context_dim(), std::move(support)), {}};
  DenseMatrix& theta = result.params.theta();
  DenseMatrix m1 = DenseMatrix::Zero(theta.rows(), theta.cols());
  DenseMatrix m2 = m1;

  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::size_t> batch;
  const bool minibatch = cfg.batch_size > 0 && cfg.batch_size < data.size();

  result.trace.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int it = 0; it < cfg.iterations; ++it) {
    EstimatorOptions opts;
    opts.exec = cfg.exec;
    if (minibatch) {
      Rng rng(derive_seed(cfg.seed, 0xBA7C, static_cast<std::uint64_t>(it)));
      batch = all;
      // partial Fisher-Yates: first batch_size entries form the sample
      for (std::size_t k = 0; k < cfg.batch_size; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, batch.size() - 1);
        std::swap(batch[k], batch[pick(rng)]);
      }
      batch.resize(cfg.batch_size);
      std::sort(batch.begin(), batch.end());
      opts.rows = batch;
    }
    const GradientEstimate est = estimate_gradient(spec, result.params, data, inputs, opts);
    if (!est.grad.allFinite() || !std::isfinite(est.value)) {
      throw NumericError(std::string(estimator_name(spec.kind)) + " gradient is non-finite at iteration " +
                         std::to_string(it));
    }
    TraceRow row{it, est.value, std::numeric_limits<double>::quiet_NaN()};
    if (oracle.env && !oracle.contexts.empty() && it % std::max(1, oracle.every) == 0) {
      row.true_value = true_value(result.params, *oracle.env, oracle.contexts);
    }
    result.trace.push_back(row);

    if (cfg.optimizer == Optimizer::kPlain) {
      theta += cfg.learning_rate * est.grad;
    } else {
      const double t = static_cast<double>(it + 1);
      m1 = cfg.adam_beta1 * m1 + (1.0 - cfg.adam_beta1) * est.grad;
      m2 = cfg.adam_beta2 * m2 + (1.0 - cfg.adam_beta2) * est.grad.cwiseProduct(est.grad);
      const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
      const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
      theta.array() += cfg.learning_rate * (m1.array() / c1) /
                       ((m2.array() / c2).sqrt() + cfg.adam_epsilon);
    }
  }
  return result;
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace) {
  os << "iteration,objective,true_value\n" << std::setprecision(17);
  for (const auto& r : trace) {
    os << r.iteration << ',' << r.objective << ',';
    if (std::isnan(r.true_value)) {
      os << "null";
    } else {
      os << r.true_value;
    }
    os << '\n';
  }
}

double ope_value(const PolicyParams& policy, const LoggedDataset& validation, OpeMethod method,
                 const ModelTable* model) {
  if (validation.empty()) throw InvalidInput("ope_value needs a non-empty validation set");
  if (method == OpeMethod::kDR && (!model || model->q.rows() != static_cast<Eigen::Index>(validation.size()))) {
    throw InvalidInput("DR value needs a model table matching the validation set");
  }
  std::vector<double> p(policy.space().size());
  double total = 0.0;
  for (std::size_t i = 0; i < validation.size(); ++i) {
    const auto& row = validation.rows[i];
    if (!(row.propensity > 0.0)) {
      throw PreconditionError("ope_value: row " + std::to_string(i) + " has zero logging propensity");
    }
    policy.action_probs(row.context.x, p);
    const double w = p[row.action] / row.propensity;
    if (method == OpeMethod::kIPS) {
      total += w * row.reward;
      continue;
    }
    const auto qi = model->q.row(static_cast<Eigen::Index>(i));
    double direct = 0.0;
    for (std::size_t a : validation.partition->existing) direct += p[a] * qi[static_cast<Eigen::Index>(a)];
    total += w * (row.reward - qi[static_cast<Eigen::Index>(row.action)]) + direct;
  }
  return total / static_cast<double>(validation.size());
}

KappaSelection select_kappa(const std::vector<KappaPoint>& points, double lo, double hi) {
  if (points.empty()) throw InvalidInput("select_kappa needs at least one grid point");
  KappaSelection sel;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const auto& p = points[k];
    if (!(p.new_mass >= lo && p.new_mass <= hi)) continue;
    if (!sel.feasible || p.value > points[sel.index].value) {
      sel.index = k;
      sel.feasible = true;
    }
  }
  if (sel.feasible) return sel;
  auto gap = [&](double m) { return m < lo ? lo - m : m - hi; };
  for (std::size_t k = 1; k < points.size(); ++k) {
    if (gap(points[k].new_mass) < gap(points[sel.index].new_mass)) sel.index = k;
  }
  return sel;
}

KappaTuning kappa_grid_search(const LoggedDataset& train_data, const EstimatorInputs& train_inputs,
                              const LoggedDataset& validation, const ModelTable& validation_model,
                              const TrainConfig& cfg) {
  cfg.validate();
  std::vector<Context> contexts;
  contexts.reserve(validation.size());
  for (const auto& r : validation.rows) contexts.push_back(r.context);

  KappaTuning out;
  for (double kappa : cfg.kappa_grid) {
    TrainResult tr = train(EstimatorSpec{Estimator::kPONA, kappa}, train_data, train_inputs, cfg);
    const double mass = new_action_mass(tr.params, *validation.partition, contexts);
    const double value = ope_value(tr.params, validation, OpeMethod::kDR, &validation_model);
    out.points.push_back(KappaPoint{kappa, mass, value, mass >= cfg.rho_lower && mass <= cfg.rho_upper,
                                    std::move(tr.params)});
  }
  out.selection = select_kappa(out.points, cfg.rho_lower, cfg.rho_upper);
  return out;
}

KappaTuning tune_kappa(const LoggedDataset& data, const TrainConfig& cfg, const LoggingDistribution& logging) {
  cfg.validate();
  auto [train_part, valid_part] = split_dataset(data, cfg.validation_fraction, cfg.seed);
  const QModel qhat = fit_qmodel(train_part, QModelKind::kActionFeature,
                                 cfg.ridge_lambda_per_row * static_cast<double>(train_part.size()));
  const ModelTable train_table = prepare_model_table(train_part, qhat);
  const ModelTable valid_table = prepare_model_table(valid_part, qhat);
  const PseudoinverseWeights lcpi =
      prepare_pseudoinverse(train_part, IndicatorMode::kLCPI, logging, cfg.pinv_tol, cfg.exec);
  EstimatorInputs inputs{&train_table, &lcpi, nullptr};
  return kappa_grid_search(train_part, inputs, valid_part, valid_table, cfg);
}

}  // namespace opl

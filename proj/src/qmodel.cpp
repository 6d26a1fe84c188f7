#include "opl/qmodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "opl/errors.hpp"

namespace opl {

QModel::QModel(QModelKind kind, std::shared_ptr<const ActionSpace> space,
               std::shared_ptr<const ActionPartition> partition, int context_dim, double lambda)
    : kind_(kind), space_(std::move(space)), partition_(std::move(partition)), lambda_(lambda) {
  if (!(lambda >= 0.0)) throw InvalidInput("ridge lambda must be >= 0");
  int width = space_->indicator_length(IndicatorMode::kLCPI);
  if (kind_ == QModelKind::kActionId) {
    id_column_.assign(space_->size(), -1);
    width = 0;
    for (std::size_t a : partition_->existing) id_column_[a] = width++;
  }
  weights_ = DenseMatrix::Zero(context_dim + 1, width);
}

bool QModel::supports(std::size_t a) const {
  return kind_ == QModelKind::kActionFeature || id_column_[a] >= 0;
}

std::span<const int> QModel::columns(std::size_t a) const {
  if (kind_ == QModelKind::kActionFeature) return space_->active(a, IndicatorMode::kLCPI);
  if (id_column_[a] < 0) return {};
  return std::span<const int>(&id_column_[a], 1);
}

double QModel::predict(const Vector& x, std::size_t a) const {
  if (a >= space_->size()) throw InvalidInput("action id out of range");
  if (!supports(a)) throw UnsupportedAction("action-id model cannot score new action " + std::to_string(a));
  const Eigen::Index d = weights_.rows() - 1;
  if (x.size() != d) throw InvalidInput("context dimension does not match model");
  double q = 0.0;
  for (int k : columns(a)) q += x.dot(weights_.col(k).head(d)) + weights_(d, k);
  return q;
}

void QModel::predict_row(const Vector& x, std::span<double> out) const {
  const Eigen::Index d = weights_.rows() - 1;
  if (x.size() != d) throw InvalidInput("context dimension does not match model");
  // per-column score, then sum over each action's columns
  const Vector col_score = weights_.topRows(d).transpose() * x + weights_.row(d).transpose();
  for (std::size_t a = 0; a < out.size(); ++a) {
    if (!supports(a)) {
      out[a] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double q = 0.0;
    for (int k : columns(a)) q += col_score[k];
    out[a] = q;
  }
}

namespace {

// Solves (G + lambda I) w = b; with lambda == 0 and a singular G, uses the
// pseudoinverse and reports it through `fallback`.
Vector solve_normal(const DenseMatrix& g, const Vector& b, double lambda, bool& fallback) {
  DenseMatrix a = g;
  a.diagonal().array() += lambda;
  if (lambda > 0.0) {
    Eigen::LLT<DenseMatrix> llt(a);
    if (llt.info() == Eigen::Success) return llt.solve(b);
  } else {
    Eigen::LDLT<DenseMatrix> ldlt(a);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
      const Vector dvec = ldlt.vectorD().cwiseAbs();
      if (dvec.size() > 0 && dvec.minCoeff() > 1e-12 * dvec.maxCoeff()) return ldlt.solve(b);
    }
  }
  fallback = true;
  return pinv(a, kDefaultPinvTol, Symmetry::kSymmetric) * b;
}

}  // namespace

QModel fit_qmodel(const LoggedDataset& data, QModelKind kind, double lambda) {
  if (data.empty()) throw InvalidInput("cannot fit a q-model on an empty dataset");
  const int dx = data.context_dim();
  QModel model(kind, data.space, data.partition, dx, lambda);
  const Eigen::Index d1 = dx + 1;
  const Eigen::Index width = model.design_width();
  bool fallback = false;

  Vector z(d1);
  if (kind == QModelKind::kActionId) {
    // Columns never co-occur, so the normal equations are block diagonal.
    std::vector<DenseMatrix> g(static_cast<std::size_t>(width), DenseMatrix::Zero(d1, d1));
    std::vector<Vector> b(static_cast<std::size_t>(width), Vector::Zero(d1));
    for (const auto& row : data.rows) {
      const auto cols = model.columns(row.action);
      if (cols.empty()) throw PreconditionError("logged row carries a new action");
      z.head(dx) = row.context.x;
      z[dx] = 1.0;
      const auto k = static_cast<std::size_t>(cols[0]);
      g[k].noalias() += z * z.transpose();
      b[k].noalias() += row.reward * z;
    }
    for (Eigen::Index k = 0; k < width; ++k) {
      model.weights().col(k) = solve_normal(g[static_cast<std::size_t>(k)], b[static_cast<std::size_t>(k)], lambda, fallback);
    }
  } else {
    const Eigen::Index p = d1 * width;
    DenseMatrix g = DenseMatrix::Zero(p, p);
    Vector b = Vector::Zero(p);
    DenseMatrix zz(d1, d1);
    for (const auto& row : data.rows) {
      z.head(dx) = row.context.x;
      z[dx] = 1.0;
      zz.noalias() = z * z.transpose();
      const auto cols = model.columns(row.action);
      for (int k1 : cols) {
        b.segment(k1 * d1, d1) += row.reward * z;
        for (int k2 : cols) g.block(k1 * d1, k2 * d1, d1, d1) += zz;
      }
    }
    const Vector w = solve_normal(g, b, lambda, fallback);
    model.weights() = Eigen::Map<const DenseMatrix>(w.data(), d1, width);
  }
  model.set_pinv_fallback(fallback);
  if (!model.weights().allFinite()) throw NumericError("ridge fit produced non-finite weights");
  return model;
}

RegressionPolicy::RegressionPolicy(std::shared_ptr<const QModel> model, double temperature, bool argmax)
    : model_(std::move(model)), temperature_(temperature), argmax_(argmax) {
  if (!(temperature > 0.0)) throw InvalidInput("softmax temperature must be > 0");
}

void RegressionPolicy::probs(const Context& ctx, std::span<double> out) const {
  model_->predict_row(ctx.x, out);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < out.size(); ++a) {
    if (model_->supports(a)) mx = std::max(mx, out[a] / temperature_);
  }
  if (argmax_) {
    std::size_t best = 0;
    bool found = false;
    for (std::size_t a = 0; a < out.size(); ++a) {
      if (model_->supports(a) && (!found || out[a] > out[best])) {
        best = a;
        found = true;
      }
    }
    std::fill(out.begin(), out.end(), 0.0);
    out[best] = 1.0;
    return;
  }
  double z = 0.0;
  for (std::size_t a = 0; a < out.size(); ++a) {
    out[a] = model_->supports(a) ? std::exp(out[a] / temperature_ - mx) : 0.0;
    z += out[a];
  }
  for (double& v : out) v /= z;
}

RegressionPolicy to_policy(std::shared_ptr<const QModel> model, double temperature, bool argmax) {
  return RegressionPolicy(std::move(model), temperature, argmax);
}

}  // namespace opl

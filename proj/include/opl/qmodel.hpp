#pragma once

#include <memory>
#include <span>
#include <vector>

#include "opl/dataset.hpp"
#include "opl/policy.hpp"

namespace opl {

/// kActionId: one column per existing action (cannot score new actions).
/// kActionFeature: one column per LCPI indicator bit (scores every action).
enum class QModelKind { kActionId, kActionFeature };

/// Ridge regression on the bilinear design [x; 1] ⊗ e(a).
class QModel {
 public:
  QModel(QModelKind kind, std::shared_ptr<const ActionSpace> space,
         std::shared_ptr<const ActionPartition> partition, int context_dim, double lambda);

  QModelKind kind() const { return kind_; }
  double lambda() const { return lambda_; }
  int design_width() const { return static_cast<int>(weights_.cols()); }
  /// (context_dim + 1) x design_width; the last row is the intercept.
  DenseMatrix& weights() { return weights_; }
  const DenseMatrix& weights() const { return weights_; }
  bool used_pinv_fallback() const { return pinv_fallback_; }
  void set_pinv_fallback(bool v) { pinv_fallback_ = v; }

  bool supports(std::size_t a) const;
  /// Design columns touched by action a (empty when unsupported).
  std::span<const int> columns(std::size_t a) const;

  /// Throws UnsupportedAction for a new action under kActionId.
  double predict(const Vector& x, std::size_t a) const;
  /// Predictions for every action; unsupported actions get NaN.
  void predict_row(const Vector& x, std::span<double> out) const;

  const ActionSpace& space() const { return *space_; }
  const ActionPartition& partition() const { return *partition_; }

 private:
  QModelKind kind_;
  std::shared_ptr<const ActionSpace> space_;
  std::shared_ptr<const ActionPartition> partition_;
  double lambda_;
  DenseMatrix weights_;
  std::vector<int> id_column_;  // kActionId: column per action, -1 for new
  bool pinv_fallback_ = false;
};

/// Closed-form minimizer of sum_i (r_i − <w, psi_i>)^2 + lambda ||w||^2.
/// With lambda == 0 and singular normal equations, falls back to the
/// pseudoinverse solution and flags used_pinv_fallback().
QModel fit_qmodel(const LoggedDataset& data, QModelKind kind, double lambda);

/// Softmax (or argmax) over q-hat / temperature on the model's support:
/// existing actions for kActionId, all of A for kActionFeature.
class RegressionPolicy final : public Policy {
 public:
  RegressionPolicy(std::shared_ptr<const QModel> model, double temperature, bool argmax = false);
  void probs(const Context& ctx, std::span<double> out) const override;

 private:
  std::shared_ptr<const QModel> model_;
  double temperature_;
  bool argmax_;
};

RegressionPolicy to_policy(std::shared_ptr<const QModel> model, double temperature, bool argmax = false);

}  // namespace opl

#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace opl::oracle {

std::vector<double> indicator(const std::vector<int>& features, const std::vector<int>& cards, int s, bool lcpi) {
  std::vector<double> out;
  for (std::size_t l = 0; l < cards.size(); ++l) {
    for (int v = 0; v < cards[l]; ++v) out.push_back(features[l] == v ? 1.0 : 0.0);
  }
  if (!lcpi) return out;
  int block = 1;
  for (int l = 0; l < s; ++l) block *= cards[static_cast<std::size_t>(l)];
  // walk every prefix combination in row-major order until it matches
  std::vector<int> combo(static_cast<std::size_t>(s), 0);
  for (int k = 0; k < block; ++k) {
    bool match = true;
    for (int l = 0; l < s; ++l) match = match && combo[static_cast<std::size_t>(l)] == features[static_cast<std::size_t>(l)];
    out.push_back(match ? 1.0 : 0.0);
    for (int l = s - 1; l >= 0; --l) {
      if (++combo[static_cast<std::size_t>(l)] < cards[static_cast<std::size_t>(l)]) break;
      combo[static_cast<std::size_t>(l)] = 0;
    }
  }
  return out;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp(logits[i] - mx);
  for (double& v : p) v /= z;
  return p;
}

DenseMatrix indicator_table(const std::vector<int>& cards, int s, bool lcpi) {
  std::size_t count = 1;
  for (int c : cards) count *= static_cast<std::size_t>(c);
  std::vector<std::vector<double>> rows;
  std::vector<int> f(cards.size(), 0);
  for (std::size_t a = 0; a < count; ++a) {
    rows.push_back(indicator(f, cards, s, lcpi));
    for (int l = static_cast<int>(cards.size()) - 1; l >= 0; --l) {
      if (++f[static_cast<std::size_t>(l)] < cards[static_cast<std::size_t>(l)]) break;
      f[static_cast<std::size_t>(l)] = 0;
    }
  }
  DenseMatrix t(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t a = 0; a < count; ++a) {
    for (std::size_t k = 0; k < rows[a].size(); ++k) t(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(k)) = rows[a][k];
  }
  return t;
}

std::vector<double> policy_probs(const DenseMatrix& theta, const Vector& x, const DenseMatrix& ind) {
  std::vector<double> logits(static_cast<std::size_t>(ind.rows()));
  for (Eigen::Index a = 0; a < ind.rows(); ++a) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < theta.rows(); ++i) {
      for (Eigen::Index k = 0; k < theta.cols(); ++k) s += x[i] * theta(i, k) * ind(a, k);
    }
    logits[static_cast<std::size_t>(a)] = s;
  }
  return softmax(logits);
}

DenseMatrix true_pg(const DenseMatrix& theta, const std::vector<Vector>& contexts, const DenseMatrix& q_table,
                    const DenseMatrix& ind) {
  DenseMatrix g = DenseMatrix::Zero(theta.rows(), theta.cols());
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    const Vector& x = contexts[c];
    const auto p = policy_probs(theta, x, ind);
    Vector bar = Vector::Zero(ind.cols());
    for (Eigen::Index a = 0; a < ind.rows(); ++a) bar += p[static_cast<std::size_t>(a)] * ind.row(a).transpose();
    for (Eigen::Index a = 0; a < ind.rows(); ++a) {
      const double w = p[static_cast<std::size_t>(a)] * q_table(static_cast<Eigen::Index>(c), a);
      g += w * x * (ind.row(a).transpose() - bar).transpose();
    }
  }
  return g / static_cast<double>(contexts.size());
}

ExactWorld exact_world(Support support, double local_scale, double gamma, std::uint64_t seed) {
  const std::vector<int> cards{2, 2, 2};
  const int s = 2, dx = 3;
  auto space = std::make_shared<const ActionSpace>(FeatureScheme(cards, s));
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](int rows, int cols) {
    DenseMatrix m(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = unif(rng);
    return m;
  };
  RewardModel model;
  for (int c : cards) model.marginal.push_back(draw(dx, c));
  model.local = local_scale * draw(dx, 4);
  model.full = draw(dx, 8);
  model.gamma = gamma;

  std::vector<char> is_new(space->size(), 0);
  if (support == Support::kLocal) {
    std::fill(is_new.begin(), is_new.end(), 1);
    for (std::size_t a : base_existing_actions(*space)) is_new[a] = 0;
  }
  ExactWorld w;
  w.env = std::make_shared<EnvOracle>(space, ActionPartition::from_mask(is_new), model, 0.7, 0.0, 0.0);
  w.q = DenseMatrix(8, 8);
  for (int c = 0; c < 8; ++c) {
    Context ctx;
    ctx.x = Vector(dx);
    for (int i = 0; i < dx; ++i) ctx.x[i] = normal(rng);
    // q by explicit column lookups
    for (int a = 0; a < 8; ++a) {
      const int f0 = a / 4, f1 = (a / 2) % 2, f2 = a % 2;
      double q = ctx.x.dot(model.marginal[0].col(f0)) + ctx.x.dot(model.marginal[1].col(f1)) +
                 ctx.x.dot(model.marginal[2].col(f2)) + ctx.x.dot(model.local.col(f0 * 2 + f1)) +
                 gamma * ctx.x.dot(model.full.col(a));
      w.q(c, a) = q;
    }
    w.contexts.push_back(std::move(ctx));
  }
  return w;
}

DenseMatrix exact_expectation(const ExactWorld& world, const RowEstimator& est) {
  const EnvOracle& env = *world.env;
  DenseMatrix total;
  const double px = 1.0 / static_cast<double>(world.contexts.size());
  for (std::size_t c = 0; c < world.contexts.size(); ++c) {
    const auto p = env.logging_probs(world.contexts[c]);
    for (std::size_t a = 0; a < p.size(); ++a) {
      if (p[a] == 0.0) continue;
      LoggedDataset one{{}, env.space_ptr(), env.partition_ptr()};
      one.rows.push_back(LoggedRow{world.contexts[c], a, world.q(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(a)), p[a], {}});
      const DenseMatrix g = est(one);
      if (total.size() == 0) total = DenseMatrix::Zero(g.rows(), g.cols());
      total += px * p[a] * g;
    }
  }
  return total;
}

DenseMatrix gamma_dense(const std::vector<double>& logging, const DenseMatrix& ind) {
  DenseMatrix g = DenseMatrix::Zero(ind.cols(), ind.cols());
  for (Eigen::Index a = 0; a < ind.rows(); ++a) {
    const Vector v = ind.row(a).transpose();
    g += logging[static_cast<std::size_t>(a)] * v * v.transpose();
  }
  return g;
}

DenseMatrix fd_grad_log_prob(const PolicyParams& params, const Vector& x, std::size_t a, double h) {
  PolicyParams p = params;
  DenseMatrix g(params.theta().rows(), params.theta().cols());
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      const double t0 = p.theta()(i, j);
      p.theta()(i, j) = t0 + h;
      const double up = std::log(p.action_probs(x)[a]);
      p.theta()(i, j) = t0 - h;
      const double dn = std::log(p.action_probs(x)[a]);
      p.theta()(i, j) = t0;
      g(i, j) = (up - dn) / (2.0 * h);
    }
  }
  return g;
}

DenseMatrix random_gamma(Rng& rng, int max_len) {
  std::uniform_int_distribution<int> pick_d(1, 4), pick_m(2, 5);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  while (true) {
    const int d = pick_d(rng);
    std::vector<int> cards(static_cast<std::size_t>(d));
    for (int& c : cards) c = pick_m(rng);
    const int s = std::uniform_int_distribution<int>(1, d)(rng);
    const bool lcpi = unif(rng) < 0.5;
    int len = std::accumulate(cards.begin(), cards.end(), 0);
    int block = 1;
    for (int l = 0; l < s; ++l) block *= cards[static_cast<std::size_t>(l)];
    if (lcpi) len += block;
    if (len > max_len) continue;
    const DenseMatrix ind = indicator_table(cards, s, lcpi);
    const double keep = 0.3 + 0.7 * unif(rng);
    std::vector<double> logits(static_cast<std::size_t>(ind.rows()));
    std::vector<char> on(logits.size());
    for (std::size_t a = 0; a < logits.size(); ++a) {
      logits[a] = 2.0 * normal(rng);
      on[a] = unif(rng) < keep;
    }
    on[0] = 1;
    std::vector<double> p(logits.size(), 0.0);
    double z = 0.0;
    for (std::size_t a = 0; a < p.size(); ++a) {
      if (on[a]) z += p[a] = std::exp(logits[a]);
    }
    for (double& v : p) v /= z;
    return gamma_dense(p, ind);
  }
}

double PenroseError::max() const { return std::max({mxm, xmx, mx_sym, xm_sym}); }

PenroseError penrose(const DenseMatrix& m, const DenseMatrix& x) {
  PenroseError e;
  const DenseMatrix mx = m * x, xm = x * m;
  e.mxm = (mx * m - m).cwiseAbs().maxCoeff();
  e.xmx = (xm * x - x).cwiseAbs().maxCoeff();
  e.mx_sym = (mx - mx.transpose()).cwiseAbs().maxCoeff();
  e.xm_sym = (xm - xm.transpose()).cwiseAbs().maxCoeff();
  return e;
}

}  // namespace opl::oracle

#include <gtest/gtest.h>

#include <cmath>
#include <tuple>

#include "opl/errors.hpp"
#include "opl/grad_estimators.hpp"
#include "oracles.hpp"

using namespace opl;

namespace {

struct Setup {
  oracle::ExactWorld world;
  PolicyParams policy;
  DenseMatrix truth;
};

Setup make_setup(oracle::Support support, double local_scale, double gamma, std::uint64_t seed = 11) {
  auto world = oracle::exact_world(support, local_scale, gamma, seed);
  PolicyParams policy(world.env->space_ptr(), 3);
  Rng rng(seed + 100);
  std::normal_distribution<double> normal(0.0, 0.7);
  for (Eigen::Index k = 0; k < policy.theta().size(); ++k) policy.theta().data()[k] = normal(rng);
  std::vector<Vector> xs;
  for (const auto& c : world.contexts) xs.push_back(c.x);
  DenseMatrix truth = oracle::true_pg(policy.theta(), xs, world.q, oracle::indicator_table({2, 2, 2}, 2, true));
  return {std::move(world), std::move(policy), std::move(truth)};
}

double gap(const DenseMatrix& a, const DenseMatrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

// An arbitrary, deliberately wrong reward model.
ModelTable skewed_model(const LoggedDataset& data) {
  ModelTable t{DenseMatrix::Zero(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(data.space->size()))};
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t a : data.partition->existing)
      t.q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) =
          std::sin(1.0 + static_cast<double>(a) + data.rows[i].context.x[0]);
  return t;
}

LoggedDataset sample(const EnvOracle& env, std::size_t n, std::uint64_t seed) { return generate_log(env, n, seed); }

}  // namespace

TEST(ExactExpectation, LcpiUnbiasedDespiteMissingActions) {
  auto s = make_setup(oracle::Support::kLocal, 1.0, 0.0);
  ASSERT_EQ(s.world.env->partition().fresh.size(), 3u);
  const auto logging = logging_source(*s.world.env);
  const DenseMatrix e = oracle::exact_expectation(s.world, [&](const LoggedDataset& d) {
    return grad_pseudoinverse(s.policy, d, IndicatorMode::kLCPI, logging, {Exec::kSerial}).grad;
  });
  EXPECT_LE(gap(e, s.truth), 1e-8);
}

TEST(ExactExpectation, PiUnbiasedWithoutLocalTermAndBiasedWithIt) {
  for (double local : {0.0, 1.0}) {
    auto s = make_setup(oracle::Support::kLocal, local, 0.0);
    const auto logging = logging_source(*s.world.env);
    const DenseMatrix e = oracle::exact_expectation(s.world, [&](const LoggedDataset& d) {
      return grad_pseudoinverse(s.policy, d, IndicatorMode::kPI, logging, {Exec::kSerial}).grad;
    });
    if (local == 0.0)
      EXPECT_LE(gap(e, s.truth), 1e-8);
    else
      EXPECT_GT(gap(e, s.truth), 1e-3);
  }
}

TEST(ExactExpectation, IpsAndDrUnbiasedUnderFullSupport) {
  auto s = make_setup(oracle::Support::kFull, 1.0, 1.0);
  const DenseMatrix ips = oracle::exact_expectation(
      s.world, [&](const LoggedDataset& d) { return grad_ips(s.policy, d, {Exec::kSerial}).grad; });
  const DenseMatrix dr = oracle::exact_expectation(s.world, [&](const LoggedDataset& d) {
    return grad_dr(s.policy, d, skewed_model(d), {Exec::kSerial}).grad;
  });
  EXPECT_LE(gap(ips, s.truth), 1e-8);
  EXPECT_LE(gap(dr, s.truth), 1e-8);
}

TEST(ExactExpectation, IpsBiasedWhenActionsAreMissing) {
  auto s = make_setup(oracle::Support::kLocal, 1.0, 0.0);
  const DenseMatrix ips = oracle::exact_expectation(
      s.world, [&](const LoggedDataset& d) { return grad_ips(s.policy, d, {Exec::kSerial}).grad; });
  EXPECT_GT(gap(ips, s.truth), 1e-3);
}

TEST(Lemma1, ValueVectorRecoversEveryAction) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    auto w = oracle::exact_world(oracle::Support::kLocal, 1.0, 0.0, seed);
    const auto& env = *w.env;
    for (std::size_t c = 0; c < w.contexts.size(); ++c) {
      const auto p = env.logging_probs(w.contexts[c]);
      std::vector<double> q(w.q.cols());
      for (std::size_t a = 0; a < q.size(); ++a) q[a] = w.q(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(a));
      const Vector theta = value_vector(p, q, env.space(), IndicatorMode::kLCPI);
      const Vector solved = pinv(gamma_matrix(p, env.space(), IndicatorMode::kLCPI)) * theta;
      for (std::size_t a = 0; a < q.size(); ++a) {
        const auto ind = oracle::indicator(env.space().features(a), {2, 2, 2}, 2, true);
        const double got = Eigen::Map<const Vector>(ind.data(), static_cast<Eigen::Index>(ind.size())).dot(solved);
        EXPECT_NEAR(got, q[a], 1e-8) << "context " << c << " action " << a;
      }
    }
  }
}

TEST(SingleRow, IpsMatchesHandComputation) {
  auto w = oracle::exact_world(oracle::Support::kFull, 1.0, 1.0);
  PolicyParams policy(w.env->space_ptr(), 3);
  policy.theta()(0, 3) = 0.4;
  LoggedDataset d{{}, w.env->space_ptr(), w.env->partition_ptr()};
  d.rows.push_back({w.contexts[0], 5, 2.5, 0.2, {}});
  const auto probs = policy.action_probs(w.contexts[0].x);
  const DenseMatrix want = probs[5] / 0.2 * 2.5 * policy.grad_log_prob(w.contexts[0].x, 5);
  const auto got = grad_ips(policy, d);
  EXPECT_LE(gap(got.grad, want), 1e-14);
  EXPECT_NEAR(got.value, probs[5] / 0.2 * 2.5, 1e-14);
  EXPECT_NEAR(got.max_importance_weight, probs[5] / 0.2, 1e-14);
}

TEST(Estimators, DrWithZeroModelEqualsIps) {
  const auto w = oracle::exact_world(oracle::Support::kFull, 1.0, 1.0);
  const auto data = sample(*w.env, 200, 3);
  PolicyParams policy(w.env->space_ptr(), 3);
  policy.theta().setConstant(0.1);
  const ModelTable zero{DenseMatrix::Zero(200, 8)};
  EXPECT_LE(gap(grad_dr(policy, data, zero).grad, grad_ips(policy, data).grad), 1e-14);
}

TEST(Estimators, ZeroRewardsGiveZeroGradient) {
  const auto w = oracle::exact_world(oracle::Support::kLocal, 1.0, 0.0);
  auto data = sample(*w.env, 100, 4);
  for (auto& r : data.rows) r.reward = 0.0;
  PolicyParams policy(w.env->space_ptr(), 3);
  policy.theta().setConstant(-0.3);
  const auto logging = logging_source(*w.env);
  EXPECT_EQ(grad_ips(policy, data).grad.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(grad_pseudoinverse(policy, data, IndicatorMode::kLCPI, logging).grad.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(grad_pseudoinverse(policy, data, IndicatorMode::kPI, logging).grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Estimators, ImportanceWeightDiagnostics) {
  const auto w = oracle::exact_world(oracle::Support::kFull, 1.0, 1.0);
  const auto data = sample(*w.env, 300, 5);
  PolicyParams policy(w.env->space_ptr(), 3);
  policy.theta()(1, 2) = 1.5;
  const auto est = grad_ips(policy, data);
  double worst = 0.0, s1 = 0.0, s2 = 0.0;
  for (const auto& r : data.rows) {
    const double wi = policy.action_probs(r.context.x)[r.action] / r.propensity;
    worst = std::max(worst, wi);
    s1 += wi;
    s2 += wi * wi;
  }
  EXPECT_NEAR(est.max_importance_weight, worst, 1e-12);
  EXPECT_NEAR(est.effective_sample_size, s1 * s1 / s2, 1e-9);
}

TEST(Estimators, RejectBadRows) {
  const auto w = oracle::exact_world(oracle::Support::kLocal, 1.0, 0.0);
  auto data = sample(*w.env, 20, 6);
  PolicyParams policy(w.env->space_ptr(), 3);
  data.rows[3].propensity = 0.0;
  EXPECT_THROW(grad_ips(policy, data), PreconditionError);
  EXPECT_THROW(grad_ips(policy, data.subset({})), InvalidInput);
}

TEST(Pona, InterpolatesEntrywise) {
  const auto w = oracle::exact_world(oracle::Support::kLocal, 1.0, 0.5);
  const auto data = sample(*w.env, 400, 7);
  PolicyParams policy(w.env->space_ptr(), 3);
  Rng rng(8);
  std::normal_distribution<double> normal(0.0, 0.5);
  for (Eigen::Index k = 0; k < policy.theta().size(); ++k) policy.theta().data()[k] = normal(rng);
  const auto lcpi_w = prepare_pseudoinverse(data, IndicatorMode::kLCPI, logging_source(*w.env));
  const ModelTable model = skewed_model(data);
  const auto l = grad_pseudoinverse(policy, data, lcpi_w);
  const auto d = grad_dr(policy, data, model);
  for (double kappa : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const auto p = grad_pona(policy, data, model, lcpi_w, kappa);
    EXPECT_EQ(p.estimator, Estimator::kPONA);
    EXPECT_LE(gap(p.grad, kappa * l.grad + (1.0 - kappa) * d.grad), 1e-15) << kappa;
  }
  EXPECT_EQ(grad_pona(policy, data, model, lcpi_w, 0.0).grad, d.grad);
  EXPECT_EQ(grad_pona(policy, data, model, lcpi_w, 1.0).grad, l.grad);
  EXPECT_THROW(grad_pona(policy, data, model, lcpi_w, 1.5), InvalidInput);
  EXPECT_THROW(grad_pona(policy, data, model, lcpi_w, -0.1), InvalidInput);
}

TEST(Estimators, SerialAndParallelAgreeBitwise) {
  const auto w = oracle::exact_world(oracle::Support::kLocal, 1.0, 0.5);
  const auto data = sample(*w.env, 700, 9);
  PolicyParams policy(w.env->space_ptr(), 3);
  policy.theta().setConstant(0.2);
  const auto lcpi_s = prepare_pseudoinverse(data, IndicatorMode::kLCPI, logging_source(*w.env), kDefaultPinvTol, Exec::kSerial);
  const auto lcpi_p = prepare_pseudoinverse(data, IndicatorMode::kLCPI, logging_source(*w.env), kDefaultPinvTol, Exec::kParallel);
  EXPECT_EQ(lcpi_s.rows, lcpi_p.rows);
  EXPECT_EQ(grad_pseudoinverse(policy, data, lcpi_s, {Exec::kSerial}).grad,
            grad_pseudoinverse(policy, data, lcpi_p, {Exec::kParallel}).grad);
  EXPECT_EQ(grad_ips(policy, data, {Exec::kSerial}).grad, grad_ips(policy, data, {Exec::kParallel}).grad);
}

TEST(Estimators, FactoredPathMatchesPerActionPath) {
  for (const auto& [cards, s, order] : std::vector<std::tuple<std::vector<int>, int, std::vector<int>>>{
           {{3, 3, 3, 3, 3}, 2, {}}, {{2, 4, 3}, 2, {2, 0, 1}}, {{3, 2, 2}, 1, {}}, {{2, 3, 2}, 2, {1, 0, 2}}}) {
    SynthConfig c;
    c.context_dim = 3;
    c.cards = cards;
    c.interaction_width = s;
    c.interaction_order = order;
    c.seed = 31;
    c.new_action_fraction = 0.1;
    const EnvOracle env = build_env(c);
    const auto data = generate_log(env, 300, 32);
    const FeatureScheme scheme = c.scheme();
    auto listed = std::make_shared<const ActionSpace>(scheme, enumerate_actions(scheme));
    ASSERT_TRUE(env.space().is_full_enumeration());
    ASSERT_FALSE(listed->is_full_enumeration());
    LoggedDataset copy = data;
    copy.space = listed;
    for (double scale : {0.5, 40.0}) {
      PolicyParams fast(env.space_ptr(), 3), slow(listed, 3);
      Rng rng(33);
      std::normal_distribution<double> normal(0.0, scale);
      for (Eigen::Index k = 0; k < fast.theta().size(); ++k) fast.theta().data()[k] = normal(rng);
      slow.theta() = fast.theta();
      for (auto mode : {IndicatorMode::kPI, IndicatorMode::kLCPI}) {
        const auto w = prepare_pseudoinverse(data, mode, logging_source(env));
        const auto a = grad_pseudoinverse(fast, data, w);
        const auto b = grad_pseudoinverse(slow, copy, w);
        EXPECT_LE(gap(a.grad, b.grad), 1e-12 * std::max(1.0, b.grad.cwiseAbs().maxCoeff()));
        EXPECT_NEAR(a.value, b.value, 1e-12 * std::max(1.0, std::abs(b.value)));
      }
      const auto a = grad_ips(fast, data);
      const auto b = grad_ips(slow, copy);
      EXPECT_LE(gap(a.grad, b.grad), 1e-12 * std::max(1.0, b.grad.cwiseAbs().maxCoeff()));
      EXPECT_NEAR(a.max_importance_weight, b.max_importance_weight, 1e-12 * b.max_importance_weight);
    }
  }
}

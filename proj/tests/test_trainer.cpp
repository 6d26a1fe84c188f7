#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "opl/errors.hpp"
#include "opl/eval_metrics.hpp"
#include "opl/trainer.hpp"

using namespace opl;

namespace {

EnvOracle small_env(std::uint64_t seed = 3) {
  SynthConfig c;
  c.context_dim = 3;
  c.cards = {3, 3, 2};
  c.interaction_width = 2;
  c.noise_sigma = 0.5;
  c.beta = 0.05;
  c.seed = seed;
  return build_env(c);
}

struct Prepared {
  LoggedDataset data;
  ModelTable table;
  PseudoinverseWeights lcpi;
  PseudoinverseWeights pi;
  EstimatorInputs inputs() const { return {&table, &lcpi, &pi}; }
};

Prepared prepare(const EnvOracle& env, std::size_t n, std::uint64_t seed) {
  Prepared p;
  p.data = generate_log(env, n, seed);
  p.table = prepare_model_table(p.data, fit_qmodel(p.data, QModelKind::kActionFeature, 1e-3 * static_cast<double>(n)));
  p.lcpi = prepare_pseudoinverse(p.data, IndicatorMode::kLCPI, logging_source(env));
  p.pi = prepare_pseudoinverse(p.data, IndicatorMode::kPI, logging_source(env));
  return p;
}

KappaPoint point(const PolicyParams& params, double kappa, double mass, double value) {
  return KappaPoint{kappa, mass, value, false, params};
}

}  // namespace

TEST(Train, ZeroIterationsOrZeroRateLeavesThetaAtZero) {
  const EnvOracle env = small_env();
  const auto p = prepare(env, 200, 1);
  TrainConfig cfg;
  cfg.iterations = 0;
  EXPECT_EQ(train({Estimator::kDR}, p.data, p.inputs(), cfg).params.theta().cwiseAbs().maxCoeff(), 0.0);
  cfg.iterations = 5;
  cfg.learning_rate = 0.0;
  for (auto opt : {Optimizer::kAdam, Optimizer::kPlain}) {
    cfg.optimizer = opt;
    const auto r = train({Estimator::kLCPI}, p.data, p.inputs(), cfg);
    EXPECT_EQ(r.params.theta().cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(r.trace.size(), 5u);
  }
}

TEST(Train, Deterministic) {
  const EnvOracle env = small_env();
  const auto p = prepare(env, 300, 2);
  TrainConfig cfg;
  cfg.iterations = 20;
  cfg.batch_size = 64;
  cfg.seed = 9;
  for (Estimator e : {Estimator::kIPS, Estimator::kDR, Estimator::kPI, Estimator::kLCPI}) {
    const auto a = train({e}, p.data, p.inputs(), cfg);
    const auto b = train({e}, p.data, p.inputs(), cfg);
    EXPECT_EQ(a.params.theta(), b.params.theta()) << estimator_name(e);
  }
}

TEST(Train, NonFiniteGradientNamesEstimatorAndIteration) {
  const EnvOracle env = small_env();
  auto p = prepare(env, 50, 3);
  p.data.rows[7].reward = std::numeric_limits<double>::infinity();
  TrainConfig cfg;
  cfg.iterations = 3;
  try {
    train({Estimator::kIPS}, p.data, p.inputs(), cfg);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("ips"), std::string::npos) << e.what();
  }
}

TEST(Train, MissingInputsAreRejected) {
  const EnvOracle env = small_env();
  const auto p = prepare(env, 50, 4);
  EXPECT_THROW(train({Estimator::kDR}, p.data, {}, TrainConfig{}), InvalidInput);
  EXPECT_THROW(train({Estimator::kLCPI}, p.data, {}, TrainConfig{}), InvalidInput);
}

TEST(Train, DrPolicyBeatsLoggingPolicy) {
  const EnvOracle env = small_env(5);
  const auto p = prepare(env, 2000, 6);
  auto support = std::make_shared<std::vector<char>>(env.action_count(), 0);
  for (std::size_t a : env.partition().existing) (*support)[a] = 1;
  const auto r = train({Estimator::kDR}, p.data, p.inputs(), TrainConfig{}, support);
  const EvalSet eval(env, 2000, 7);
  const double learned = evaluate(SoftmaxPolicy(r.params), eval).overall_value;
  const double logging = evaluate(LoggingPolicy(env), eval).overall_value;
  EXPECT_GT(learned, logging);
}

TEST(Train, TraceRecordsTrueValue) {
  const EnvOracle env = small_env();
  const auto p = prepare(env, 100, 8);
  TrainConfig cfg;
  cfg.iterations = 4;
  std::vector<Context> ctx{{Vector::Ones(3), -1}};
  const auto r = train({Estimator::kDR}, p.data, p.inputs(), cfg, nullptr, {&env, ctx, 2});
  ASSERT_EQ(r.trace.size(), 4u);
  EXPECT_FALSE(std::isnan(r.trace[0].true_value));
  EXPECT_TRUE(std::isnan(r.trace[1].true_value));
  std::ostringstream os;
  write_trace_csv(os, r.trace);
  EXPECT_EQ(os.str().rfind("iteration,objective,true_value\n0,", 0), 0u);
  EXPECT_NE(os.str().find(",null\n"), std::string::npos);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.kappa_grid = {0.5, 0.25};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.kappa_grid = {1.2};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.kappa_grid = {};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.rho_lower = 0.5;
  cfg.rho_upper = 0.2;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(OpeValue, MatchesHandFormulas) {
  const EnvOracle env = small_env();
  const auto p = prepare(env, 6, 9);
  PolicyParams policy(env.space_ptr(), 3);  // uniform
  const double u = 1.0 / static_cast<double>(env.action_count());
  double ips = 0.0, dr = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    const auto& r = p.data.rows[i];
    ips += u / r.propensity * r.reward;
    double direct = 0.0;
    for (std::size_t a : env.partition().existing) direct += u * p.table.q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a));
    dr += u / r.propensity * (r.reward - p.table.q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r.action))) + direct;
  }
  EXPECT_NEAR(ope_value(policy, p.data, OpeMethod::kIPS), ips / 6.0, 1e-12);
  EXPECT_NEAR(ope_value(policy, p.data, OpeMethod::kDR, &p.table), dr / 6.0, 1e-12);
  EXPECT_THROW(ope_value(policy, p.data, OpeMethod::kDR), InvalidInput);
}

TEST(SelectKappa, PicksBestFeasibleOrClosestMass) {
  const EnvOracle env = small_env();
  const PolicyParams params(env.space_ptr(), 3);
  const std::vector<KappaPoint> pts{point(params, 0.0, 0.00, 1.0), point(params, 0.5, 0.08, 0.9),
                                    point(params, 1.0, 0.20, 0.7)};
  const double inf = std::numeric_limits<double>::infinity();
  auto s = select_kappa(pts, -inf, inf);
  EXPECT_EQ(s.index, 0u);
  EXPECT_TRUE(s.feasible);
  s = select_kappa(pts, 0.05, inf);
  EXPECT_EQ(s.index, 1u);
  s = select_kappa(pts, 0.15, inf);
  EXPECT_EQ(s.index, 2u);
  s = select_kappa(pts, 0.5, inf);
  EXPECT_EQ(s.index, 2u);
  EXPECT_FALSE(s.feasible);
  s = select_kappa(pts, 0.01, 0.05);
  EXPECT_EQ(s.index, 0u);  // ties in distance go to the first point
  EXPECT_FALSE(s.feasible);
  EXPECT_THROW(select_kappa({}, 0.0, 1.0), InvalidInput);
}

TEST(TuneKappa, SinglePointGridSelectsIt) {
  const EnvOracle env = small_env();
  const auto data = generate_log(env, 300, 10);
  TrainConfig cfg;
  cfg.iterations = 10;
  cfg.kappa_grid = {0.5};
  const auto t = tune_kappa(data, cfg, logging_source(env));
  ASSERT_EQ(t.points.size(), 1u);
  EXPECT_EQ(t.kappa(), 0.5);
  EXPECT_TRUE(t.selection.feasible);
}

TEST(TuneKappa, GridScoresAreConsistent) {
  const EnvOracle env = small_env();
  const auto data = generate_log(env, 400, 11);
  TrainConfig cfg;
  cfg.iterations = 30;
  const auto t = tune_kappa(data, cfg, logging_source(env));
  ASSERT_EQ(t.points.size(), 5u);
  for (const auto& pt : t.points) {
    EXPECT_GE(pt.new_mass, 0.0);
    EXPECT_LE(pt.new_mass, 1.0);
    EXPECT_TRUE(std::isfinite(pt.value));
    EXPECT_LE(pt.value, t.points[t.selection.index].value);
  }
}

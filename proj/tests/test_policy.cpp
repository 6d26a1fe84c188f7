#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "opl/errors.hpp"
#include "opl/policy.hpp"
#include "oracles.hpp"

using namespace opl;

namespace {

std::shared_ptr<const ActionSpace> desk_space() {
  return std::make_shared<const ActionSpace>(FeatureScheme({3, 3, 3, 3, 3}, 2));
}

void randomize(PolicyParams& p, Rng& rng, double scale) {
  if (scale == 0.0) {
    p.theta().setZero();
    return;
  }
  std::normal_distribution<double> normal(0.0, scale);
  for (Eigen::Index k = 0; k < p.theta().size(); ++k) p.theta().data()[k] = normal(rng);
}

Vector random_x(Rng& rng, int dx) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector x(dx);
  for (int i = 0; i < dx; ++i) x[i] = normal(rng);
  return x;
}

}  // namespace

TEST(ActionProbs, ZeroThetaIsUniform) {
  PolicyParams p(desk_space(), 5);
  Rng rng(1);
  for (double v : p.action_probs(random_x(rng, 5))) EXPECT_NEAR(v, 1.0 / 243.0, 1e-15);
}

TEST(ActionProbs, ZeroContextIsUniform) {
  PolicyParams p(desk_space(), 5);
  Rng rng(1);
  randomize(p, rng, 3.0);
  for (double v : p.action_probs(Vector::Zero(5))) EXPECT_NEAR(v, 1.0 / 243.0, 1e-15);
}

TEST(ActionProbs, CraftedLogitsMatchScalarSoftmax) {
  auto space = std::make_shared<const ActionSpace>(FeatureScheme({2, 2}, 1));
  PolicyParams p(space, 1);
  // bits: f0 = 0 at 0, f1 = 0 at 2, interaction (f0 = 0) at 4
  p.theta()(0, 0) = 0.25;
  p.theta()(0, 2) = 0.5;
  p.theta()(0, 4) = 0.25;
  p.theta()(0, 1) = -0.25;
  p.theta()(0, 5) = 0.25;
  // logits: (0,0) = 1, (0,1) = 0.5, (1,0) = 0.5, (1,1) = 0
  const auto probs = p.action_probs(Vector::Ones(1));
  const auto want2 = oracle::softmax({1.0, 0.5, 0.5, 0.0});
  for (std::size_t a = 0; a < 4; ++a) EXPECT_NEAR(probs[a], want2[a], 1e-12);
}

TEST(ActionProbs, MatchesDenseOracleAndSumsToOne) {
  auto space = desk_space();
  PolicyParams p(space, 5);
  const DenseMatrix ind = oracle::indicator_table({3, 3, 3, 3, 3}, 2, true);
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    randomize(p, rng, 1.5);
    const Vector x = random_x(rng, 5);
    const auto got = p.action_probs(x);
    const auto want = oracle::policy_probs(p.theta(), x, ind);
    double z = 0.0;
    for (std::size_t a = 0; a < got.size(); ++a) {
      EXPECT_NEAR(got[a], want[a], 1e-12);
      EXPECT_GT(got[a], 0.0);
      z += got[a];
    }
    EXPECT_NEAR(z, 1.0, 1e-12);
  }
}

TEST(ActionProbs, ExtremeSpreadStaysFinite) {
  PolicyParams p(desk_space(), 5);
  Rng rng(3);
  randomize(p, rng, 200.0);
  const auto probs = p.action_probs(random_x(rng, 5));
  double z = 0.0;
  for (double v : probs) {
    EXPECT_TRUE(std::isfinite(v));
    z += v;
  }
  EXPECT_NEAR(z, 1.0, 1e-12);
}

TEST(ActionProbs, TranslationInvariance) {
  auto space = desk_space();
  PolicyParams p(space, 5);
  Rng rng(4);
  randomize(p, rng, 1.0);
  const Vector x = random_x(rng, 5);
  const auto before = p.action_probs(x);
  // every action has exactly one bit in dimension 0's block: shifting that
  // whole block shifts every logit by the same constant
  PolicyParams q = p;
  for (int k = 0; k < 3; ++k) q.theta().col(k) += Vector::Constant(5, 0.7);
  const auto after = q.action_probs(x);
  for (std::size_t a = 0; a < before.size(); ++a) EXPECT_NEAR(before[a], after[a], 1e-12);
}

TEST(ActionProbs, NonFiniteThrows) {
  PolicyParams p(desk_space(), 5);
  p.theta()(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(p.action_probs(Vector::Ones(5)), NumericError);
}

TEST(ActionProbs, SupportMaskZeroesMaskedActions) {
  auto space = desk_space();
  auto mask = std::make_shared<std::vector<char>>(space->size(), 0);
  for (std::size_t a = 0; a < space->size(); a += 3) (*mask)[a] = 1;
  PolicyParams p(space, 5, mask);
  Rng rng(5);
  randomize(p, rng, 1.0);
  const auto probs = p.action_probs(random_x(rng, 5));
  double z = 0.0;
  for (std::size_t a = 0; a < probs.size(); ++a) {
    if (!(*mask)[a]) EXPECT_EQ(probs[a], 0.0);
    z += probs[a];
  }
  EXPECT_NEAR(z, 1.0, 1e-12);
}

TEST(GradLogProb, ScoreHasZeroMean) {
  auto space = desk_space();
  PolicyParams p(space, 5);
  Rng rng(6);
  for (double scale : {0.0, 0.8}) {
    randomize(p, rng, scale);
    const Vector x = random_x(rng, 5);
    const auto probs = p.action_probs(x);
    DenseMatrix mean = DenseMatrix::Zero(5, 24);
    for (std::size_t a = 0; a < space->size(); ++a) mean += probs[a] * p.grad_log_prob(x, a);
    EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(GradLogProb, MatchesCentralDifferences) {
  auto space = std::make_shared<const ActionSpace>(FeatureScheme({3, 2}, 2));
  PolicyParams p(space, 3);
  Rng rng(7);
  std::uniform_int_distribution<std::size_t> pick(0, space->size() - 1);
  for (int t = 0; t < 25; ++t) {
    randomize(p, rng, 1.0);
    const Vector x = random_x(rng, 3);
    const std::size_t a = pick(rng);
    const DenseMatrix g = p.grad_log_prob(x, a);
    const DenseMatrix fd = oracle::fd_grad_log_prob(p, x, a);
    EXPECT_LE((g - fd).cwiseAbs().maxCoeff(), 1e-4 * std::max(1.0, g.cwiseAbs().maxCoeff()));
  }
}

TEST(GradLogProb, PeakedPolicyArgmaxScoreVanishes) {
  auto space = std::make_shared<const ActionSpace>(FeatureScheme({2, 2}, 2));
  PolicyParams p(space, 2);
  const Vector x = (Vector(2) << 1.0, 0.5).finished();
  p.theta()(0, 4) = 12.0;  // interaction bit of action (0,0)
  const auto probs = p.action_probs(x);
  ASSERT_GT(probs[0], 0.99);
  EXPECT_LT(p.grad_log_prob(x, 0).cwiseAbs().maxCoeff(), 1e-2 * x.norm());
}

TEST(NewActionMass, UniformPolicyGivesNewFraction) {
  auto space = std::make_shared<const ActionSpace>(FeatureScheme({2, 5}, 1));
  std::vector<char> is_new(10, 0);
  is_new[1] = is_new[4] = is_new[7] = 1;
  const auto part = ActionPartition::from_mask(is_new);
  PolicyParams p(space, 2);
  const std::vector<Context> ctx{{Vector::Ones(2), -1}, {-Vector::Ones(2), -1}};
  EXPECT_NEAR(new_action_mass(p, part, ctx), 0.3, 1e-12);
  EXPECT_EQ(new_action_mass(p, ActionPartition::from_mask(std::vector<char>(10, 0)), ctx), 0.0);
  EXPECT_THROW(new_action_mass(p, part, std::span<const Context>{}), InvalidInput);
}

TEST(NewActionMass, BoostedNewActionMatchesSoftmax) {
  auto space = std::make_shared<const ActionSpace>(FeatureScheme({2, 2}, 2));
  std::vector<char> is_new{0, 0, 0, 1};
  const auto part = ActionPartition::from_mask(is_new);
  PolicyParams p(space, 1);
  p.theta()(0, 7) = 10.0;  // interaction bit of (1,1)
  const std::vector<Context> ctx{{Vector::Ones(1), -1}};
  const auto want = oracle::softmax({0.0, 0.0, 0.0, 10.0});
  EXPECT_NEAR(new_action_mass(p, part, ctx), want[3], 1e-12);
}

TEST(Checkpoint, RoundTrip) {
  PolicyParams p(desk_space(), 5);
  Rng rng(8);
  randomize(p, rng, 1.0);
  std::stringstream ss;
  write_params(ss, p);
  PolicyParams q(desk_space(), 5);
  read_params(ss, q);
  EXPECT_EQ(p.theta(), q.theta());
  PolicyParams wrong(desk_space(), 4);
  std::stringstream again;
  write_params(again, p);
  EXPECT_THROW(read_params(again, wrong), ParseError);
}

TEST(Argmax, PicksLowestIdOnTies) {
  std::vector<double> v{0.2, 0.4, 0.4};
  to_argmax(v);
  EXPECT_EQ(v, (std::vector<double>{0.0, 1.0, 0.0}));
}

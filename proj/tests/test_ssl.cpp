#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "nlvos/error.hpp"
#include "nlvos/ssl/objective.hpp"
#include "nlvos/ssl/ssl.hpp"
#include "support/gradient_suite.hpp"

namespace ssl = nlvos::ssl;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlvos::testing::random_matrix;
using nlvos::testing::random_simplex;

namespace {

double entropy(const VectorXd& p) {
  double h = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    if (p(k) > 0) h -= p(k) * std::log(p(k));
  }
  return h;
}

VectorXd naive_softmax(const VectorXd& l) {
  VectorXd e = l.array().exp();
  return e / e.sum();
}

void expect_simplex_columns(const MatrixXd& m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    EXPECT_NEAR(m.col(c).sum(), 1.0, 1e-12);
    EXPECT_GE(m.col(c).minCoeff(), 0.0);
  }
}

MatrixXd unit_columns(MatrixXd m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) m.col(c).normalize();
  return m;
}

}  // namespace

TEST(Sharpen, TwoClassExample) {
  const MatrixXd p = (MatrixXd(2, 1) << 0.8, 0.2).finished();
  const MatrixXd s = ssl::sharpen<double>(p, 0.5);
  EXPECT_NEAR(s(0, 0), 0.9412, 1e-4);
  EXPECT_NEAR(s(1, 0), 0.0588, 1e-4);
  EXPECT_NEAR(s(0, 0), 0.64 / 0.68, 1e-15);
}

TEST(Sharpen, UnitTemperatureIsIdentity) {
  std::mt19937_64 rng(1);
  const MatrixXd p = random_simplex(5, 20, rng);
  EXPECT_LT((ssl::sharpen<double>(p, 1.0) - p).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Sharpen, ReducesEntropyAndPreservesSimplex) {
  std::mt19937_64 rng(2);
  const MatrixXd p = random_simplex(6, 200, rng);
  for (const double t : {0.1, 0.5, 0.9}) {
    const MatrixXd s = ssl::sharpen<double>(p, t);
    expect_simplex_columns(s);
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      EXPECT_LE(entropy(s.col(c)), entropy(p.col(c)) + 1e-12);
      // The argmax is kept.
      Eigen::Index a, b;
      p.col(c).maxCoeff(&a);
      s.col(c).maxCoeff(&b);
      EXPECT_EQ(a, b);
    }
  }
}

TEST(Sharpen, TinyTemperatureApproachesOneHot) {
  const MatrixXd p = (MatrixXd(3, 1) << 0.3, 0.36, 0.34).finished();
  const MatrixXd s = ssl::sharpen<double>(p, 1e-3);
  EXPECT_NEAR(s(1, 0), 1.0, 1e-12);
  expect_simplex_columns(s);
  EXPECT_THROW(ssl::sharpen<double>(p, 0.0), nlvos::ParameterError);
}

TEST(Refine, CleanProbabilityEndpoints) {
  const MatrixXd pred = (MatrixXd(3, 2) << 0.2, 0.5, 0.3, 0.25, 0.5, 0.25).finished();
  const std::vector<int> labels{0, 2};
  const std::vector<double> ones{1.0, 1.0};
  const MatrixXd hard = ssl::refine_labels<double>(labels, ones, pred, 0.5);
  EXPECT_NEAR(hard(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(hard(2, 1), 1.0, 1e-15);
  const std::vector<double> zeros{0.0, 0.0};
  const MatrixXd soft = ssl::refine_labels<double>(labels, zeros, pred, 0.5);
  EXPECT_LT((soft - ssl::sharpen<double>(pred, 0.5)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Refine, MixedExample) {
  // w = 0.5, y = 0, p = (0, 1): mixed (0.5, 0.5) stays uniform after sharpening.
  const MatrixXd pred = (MatrixXd(2, 1) << 0.0, 1.0).finished();
  const std::vector<int> y{0};
  const std::vector<double> w{0.5};
  const MatrixXd t = ssl::refine_labels<double>(y, w, pred, 0.5);
  EXPECT_NEAR(t(0, 0), 0.5, 1e-15);
  // w = 0.6: (0.6, 0.4) -> (0.36, 0.16) / 0.52.
  const std::vector<double> w6{0.6};
  EXPECT_NEAR(ssl::refine_labels<double>(y, w6, pred, 0.5)(0, 0), 0.36 / 0.52, 1e-15);
}

TEST(Refine, RejectsBadInputs) {
  const MatrixXd pred = MatrixXd::Constant(2, 1, 0.5);
  const std::vector<int> y{0};
  const std::vector<double> bad{1.5};
  EXPECT_THROW(ssl::refine_labels<double>(y, bad, pred, 0.5), nlvos::ParameterError);
  const std::vector<int> two{0, 1};
  const std::vector<double> w{0.5};
  EXPECT_THROW(ssl::refine_labels<double>(two, w, pred, 0.5), nlvos::StructuralError);
}

TEST(Refine, OutputsStayOnSimplex) {
  std::mt19937_64 rng(3);
  const MatrixXd pred = random_simplex(4, 100, rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, 3);
  std::vector<int> y;
  std::vector<double> w;
  for (int i = 0; i < 100; ++i) {
    y.push_back(cls(rng));
    w.push_back(u(rng));
  }
  expect_simplex_columns(ssl::refine_labels<double>(y, w, pred, 0.5));
}

TEST(Guess, AveragesThenSharpens) {
  std::mt19937_64 rng(4);
  std::vector<MatrixXd> preds{random_simplex(3, 10, rng), random_simplex(3, 10, rng), random_simplex(3, 10, rng),
                              random_simplex(3, 10, rng)};
  const MatrixXd mean = (preds[0] + preds[1] + preds[2] + preds[3]) / 4.0;
  const MatrixXd g = ssl::guess_labels<double>(preds, 0.5);
  EXPECT_LT((g - ssl::sharpen<double>(mean, 0.5)).cwiseAbs().maxCoeff(), 1e-14);
  expect_simplex_columns(g);
  EXPECT_THROW(ssl::guess_labels<double>(std::span<const MatrixXd>(), 0.5), nlvos::ParameterError);
}

TEST(Mixup, CoefficientIsFolded) {
  EXPECT_EQ(ssl::mix_coefficient(0.3), 0.7);
  EXPECT_EQ(ssl::mix_coefficient(0.8), 0.8);
  const MatrixXd a = MatrixXd::Ones(2, 3), b = MatrixXd::Zero(2, 3);
  const auto m = ssl::mixup<double>(a, a, b, b, 0.3);
  EXPECT_NEAR(m.inputs(0, 0), 0.7, 1e-15);
  EXPECT_NEAR(m.targets(1, 2), 0.7, 1e-15);
  EXPECT_EQ(m.lambda, 0.7);
  EXPECT_EQ(m.labeled.size(), 3u);
  EXPECT_THROW(ssl::mixup<double>(a, a, MatrixXd::Zero(2, 2), MatrixXd::Zero(2, 2), 0.5), nlvos::StructuralError);
}

TEST(Mixup, SampledCoefficientsLieInUpperHalf) {
  std::mt19937_64 rng(5);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double l = ssl::sample_mix_coefficient(4.0, rng);
    ASSERT_GE(l, 0.5);
    ASSERT_LE(l, 1.0);
    sum += l;
  }
  // Beta(1, 1) folded is uniform on [0.5, 1].
  double s1 = 0.0;
  for (int i = 0; i < 20000; ++i) s1 += ssl::sample_mix_coefficient(1.0, rng);
  EXPECT_NEAR(s1 / 20000, 0.75, 0.005);
  EXPECT_LT(sum / 20000, s1 / 20000);
}

TEST(Mixup, ConvexCombinationKeepsSimplexTargets) {
  std::mt19937_64 rng(6);
  const MatrixXd ta = random_simplex(4, 8, rng), tb = random_simplex(4, 8, rng);
  const MatrixXd xa = random_matrix(3, 8, rng), xb = random_matrix(3, 8, rng);
  const auto m = ssl::mixup<double>(xa, ta, xb, tb, 0.37);
  expect_simplex_columns(m.targets);
}

TEST(SslLoss, MatchesDirectOracle) {
  std::mt19937_64 rng(7);
  const MatrixXd ll = random_matrix(3, 4, rng, 2.0), lu = random_matrix(3, 5, rng, 2.0);
  const MatrixXd tl = random_simplex(3, 4, rng), tu = random_simplex(3, 5, rng);
  ssl::LossWeights w;
  w.lambda_u = 7.0;
  w.lambda_reg = 0.5;
  const auto t = ssl::ssl_loss<double>(ll, tl, lu, tu, w);
  double lx = 0;
  for (int i = 0; i < 4; ++i) lx -= tl.col(i).dot(naive_softmax(ll.col(i)).array().log().matrix());
  lx /= 4;
  double lu_v = 0;
  for (int i = 0; i < 5; ++i) lu_v += (naive_softmax(lu.col(i)) - tu.col(i)).squaredNorm();
  lu_v /= 5 * 3;
  VectorXd pbar = VectorXd::Zero(3);
  for (int i = 0; i < 4; ++i) pbar += naive_softmax(ll.col(i));
  for (int i = 0; i < 5; ++i) pbar += naive_softmax(lu.col(i));
  pbar /= 9;
  double reg = 0;
  for (int k = 0; k < 3; ++k) reg += (1.0 / 3) * std::log((1.0 / 3) / pbar(k));
  EXPECT_NEAR(t.l_x, lx, 1e-12);
  EXPECT_NEAR(t.l_u, lu_v, 1e-12);
  EXPECT_NEAR(t.l_reg, reg, 1e-12);
  EXPECT_NEAR(t.value, lx + 7.0 * lu_v + 0.5 * reg, 1e-12);
}

TEST(SslLoss, TermIsolation) {
  std::mt19937_64 rng(8);
  const MatrixXd ll = random_matrix(3, 4, rng), lu = random_matrix(3, 4, rng);
  const MatrixXd tl = random_simplex(3, 4, rng), tu = random_simplex(3, 4, rng);
  ssl::LossWeights w;
  w.lambda_u = 0.0;
  w.lambda_reg = 0.0;
  const auto only_x = ssl::ssl_loss<double>(ll, tl, lu, tu, w);
  EXPECT_EQ(only_x.value, only_x.l_x);
  EXPECT_EQ(only_x.d_unlabeled_logits.cwiseAbs().maxCoeff(), 0.0);
  // No unlabeled part: l_u is zero whatever its weight.
  w.lambda_u = 100.0;
  const auto no_u = ssl::ssl_loss<double>(ll, tl, MatrixXd(3, 0), MatrixXd(3, 0), w);
  EXPECT_EQ(no_u.l_u, 0.0);
  EXPECT_EQ(no_u.value, no_u.l_x);
  EXPECT_THROW(ssl::ssl_loss<double>(MatrixXd(3, 0), MatrixXd(3, 0), lu, tu, w), nlvos::ParameterError);
}

TEST(SslLoss, PerfectUniformBatchHasNoRegularizer) {
  // Balanced confident predictions: mean prediction is uniform.
  const MatrixXd l = (MatrixXd(2, 2) << 30, -30, -30, 30).finished();
  const MatrixXd t = (MatrixXd(2, 2) << 1, 0, 0, 1).finished();
  const auto r = ssl::ssl_loss<double>(l, t, MatrixXd(2, 0), MatrixXd(2, 0), ssl::LossWeights{});
  EXPECT_NEAR(r.l_reg, 0.0, 1e-12);
  EXPECT_NEAR(r.l_x, 0.0, 1e-12);
}

TEST(Contrastive, IdenticalViewsGiveLogOfOthers) {
  const MatrixXd z = unit_columns(MatrixXd::Ones(3, 4));
  EXPECT_NEAR(ssl::contrastive_loss<double>(z, 0.5).value, std::log(3.0), 1e-12);
  const MatrixXd z6 = unit_columns(MatrixXd::Ones(3, 6));
  EXPECT_NEAR(ssl::contrastive_loss<double>(z6, 0.1).value, std::log(5.0), 1e-12);
}

TEST(Contrastive, SinglePairIsZero) {
  std::mt19937_64 rng(9);
  const MatrixXd z = unit_columns(random_matrix(4, 2, rng));
  const auto r = ssl::contrastive_loss<double>(z, 0.5);
  EXPECT_NEAR(r.value, 0.0, 1e-15);
  EXPECT_LT(r.d_projections.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Contrastive, MatchesDirectOracle) {
  std::mt19937_64 rng(10);
  const MatrixXd z = unit_columns(random_matrix(5, 8, rng));
  const double delta = 0.3;
  double expect = 0.0;
  for (int n = 0; n < 8; ++n) {
    const int pos = n ^ 1;
    double denom = 0.0;
    for (int k = 0; k < 8; ++k) {
      if (k != n) denom += std::exp(z.col(n).dot(z.col(k)) / delta);
    }
    expect += -std::log(std::exp(z.col(n).dot(z.col(pos)) / delta) / denom);
  }
  EXPECT_NEAR(ssl::contrastive_loss<double>(z, delta).value, expect / 8, 1e-12);
}

TEST(Contrastive, AlignedPairsScoreBelowMisaligned) {
  // Two samples, views of each identical, samples orthogonal.
  MatrixXd aligned(2, 4);
  aligned << 1, 1, 0, 0, 0, 0, 1, 1;
  MatrixXd swapped(2, 4);
  swapped << 1, 0, 1, 0, 0, 1, 0, 1;
  EXPECT_LT(ssl::contrastive_loss<double>(aligned, 0.5).value, ssl::contrastive_loss<double>(swapped, 0.5).value);
}

TEST(Contrastive, RejectsOddViewCounts) {
  EXPECT_THROW(ssl::contrastive_loss<double>(MatrixXd::Ones(2, 3), 0.5), nlvos::StructuralError);
  EXPECT_THROW(ssl::contrastive_loss<double>(MatrixXd::Ones(2, 2), 0.0), nlvos::ParameterError);
}

TEST(TotalLoss, WeightedSum) {
  ssl::LossWeights w;  // lambda_cl = 1, lambda_spade = 0.1
  EXPECT_NEAR(ssl::total_loss(1.5, 0.5, 1.0, w), 2.1, 1e-15);
  w.lambda_cl = 0.0;
  w.lambda_spade = 0.0;
  EXPECT_EQ(ssl::total_loss(1.5, 0.5, 1.0, w), 1.5);
}

TEST(TotalLoss, NonFiniteTermNamesItself) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  try {
    ssl::total_loss(1.0, nan, 0.0, ssl::LossWeights{});
    FAIL() << "expected TrainingError";
  } catch (const nlvos::TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("l_cl"), std::string::npos);
  }
  EXPECT_THROW(ssl::total_loss(std::numeric_limits<double>::infinity(), 0, 0, ssl::LossWeights{}),
               nlvos::TrainingError);
}

TEST(TotalObjective, ComponentsCombineWithWeights) {
  const auto c = nlvos::testing::random_case(11);
  const auto batch = nlvos::testing::random_step_batch(c, 12);
  ssl::ObjectiveOptions opt;
  opt.weights.lambda_cl = 0.7;
  opt.weights.lambda_spade = 0.3;
  const auto full = ssl::total_objective(c.net, batch, opt);
  EXPECT_TRUE(full.spade_active);
  EXPECT_GT(full.cl, 0.0);
  EXPECT_NEAR(full.total, full.ssl + 0.7 * full.cl + 0.3 * full.spade, 1e-12);

  auto off = opt;
  off.use_contrastive = false;
  off.use_spade = false;
  const auto ssl_only = ssl::total_objective(c.net, batch, off);
  EXPECT_EQ(ssl_only.cl, 0.0);
  EXPECT_EQ(ssl_only.spade, 0.0);
  EXPECT_FALSE(ssl_only.spade_active);
  EXPECT_EQ(ssl_only.total, full.ssl);
}

TEST(TotalObjective, DisabledTermsLeaveGradientUntouched) {
  const auto c = nlvos::testing::random_case(13);
  auto batch = nlvos::testing::random_step_batch(c, 14);
  ssl::ObjectiveOptions off;
  off.use_contrastive = false;
  off.use_spade = false;
  auto g1 = nlvos::nn::GradientBundle<double>::zeros_like(c.net);
  ssl::total_objective(c.net, batch, off, &g1);
  batch.contrastive_views = MatrixXd(c.x.rows(), 0);
  batch.clean_inputs = MatrixXd(c.x.rows(), 0);
  batch.outliers = MatrixXd(c.net.feature_dim(), 0);
  ssl::ObjectiveOptions on;
  auto g2 = nlvos::nn::GradientBundle<double>::zeros_like(c.net);
  ssl::total_objective(c.net, batch, on, &g2);
  EXPECT_LT((g1.flat() - g2.flat()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(TotalObjective, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    const auto total = nlvos::testing::check_total(nlvos::testing::random_case(seed), seed + 100);
    const auto cl = nlvos::testing::check_contrastive(nlvos::testing::random_case(seed), 0.5);
    EXPECT_LE(total.max_rel_error, 1e-4) << "seed " << seed;
    EXPECT_LE(cl.max_rel_error, 1e-4) << "seed " << seed;
    EXPECT_GT(total.checked, 10 * (total.skipped + total.unresolved));
  }
}

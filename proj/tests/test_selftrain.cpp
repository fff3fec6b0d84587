#include "gsdtta/error.hpp"
#include "gsdtta/nn.hpp"
#include "gsdtta/selftrain.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace gsdtta;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

Eigen::MatrixXd random_simplex_rows(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  Eigen::MatrixXd m = random_matrix(r, c, rng).array().exp();
  for (Eigen::Index i = 0; i < r; ++i) m.row(i) /= m.row(i).sum();
  return m;
}

oracle::Mat to_rows(const Eigen::MatrixXd& m) {
  oracle::Mat out(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

BatchDescriptors random_batch(Eigen::Index b, Eigen::Index c, std::mt19937_64& rng) {
  return {random_matrix(b, 16, rng).cwiseAbs(), random_matrix(b, 6, rng), random_simplex_rows(b, c, rng)};
}

Eigen::VectorXd uniform(int c) { return Eigen::VectorXd::Constant(c, 1.0 / c); }

}  // namespace

TEST(Centroids, SingleOneHotSample) {
  BatchDescriptors b{Eigen::MatrixXd::Random(1, 16), Eigen::MatrixXd::Random(1, 6), Eigen::MatrixXd::Zero(1, 8)};
  b.probabilities(0, 3) = 1.0;
  const Centroids c = compute_centroids(b);
  EXPECT_EQ(c.deep.row(3), b.deep.row(0));
  EXPECT_EQ(c.spectral.row(3), b.spectral.row(0));
  for (int k = 0; k < 8; ++k) EXPECT_EQ(c.empty[k], k != 3);
}

TEST(Centroids, UniformProbabilitiesGiveTheBatchMean) {
  std::mt19937_64 rng(1);
  BatchDescriptors b = random_batch(5, 4, rng);
  b.probabilities.setConstant(0.25);
  const Centroids c = compute_centroids(b);
  for (int k = 0; k < 4; ++k) {
    EXPECT_LE((c.deep.row(k) - b.deep.colwise().mean()).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LE((c.spectral.row(k) - b.spectral.colwise().mean()).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Centroids, DisjointAssignment) {
  BatchDescriptors b{Eigen::MatrixXd::Random(2, 16), Eigen::MatrixXd::Random(2, 6), Eigen::MatrixXd::Identity(2, 2)};
  const Centroids c = compute_centroids(b);
  EXPECT_EQ(c.deep, b.deep);
  EXPECT_EQ(c.spectral, b.spectral);
  EXPECT_EQ(c.support, Eigen::VectorXd::Ones(2));
}

TEST(Centroids, OneHotEqualsClassMeans) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    BatchDescriptors b = random_batch(8, 3, rng);
    b.probabilities.setZero();
    std::vector<int> cls(8);
    for (int i = 0; i < 8; ++i) b.probabilities(i, cls[i] = static_cast<int>(rng() % 3)) = 1.0;
    const Centroids c = compute_centroids(b);
    for (int k = 0; k < 3; ++k) {
      Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(16);
      int n = 0;
      for (int i = 0; i < 8; ++i)
        if (cls[i] == k) {
          sum += b.deep.row(i);
          ++n;
        }
      EXPECT_EQ(c.empty[k], n == 0);
      if (n) EXPECT_LE((c.deep.row(k) - sum / n).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(PseudoLabel, AlphaBoundariesIgnoreTheOtherStream) {
  std::mt19937_64 rng(2);
  const BatchDescriptors b = random_batch(12, 4, rng);
  const Centroids c = compute_centroids(b);
  BatchDescriptors shuffled = b;
  shuffled.spectral = b.spectral.colwise().reverse();
  Centroids cs = c;
  cs.spectral = c.spectral.colwise().reverse();
  EXPECT_EQ(pseudo_label(b, c, 1.0).labels, pseudo_label(shuffled, cs, 1.0).labels);
  EXPECT_EQ(pseudo_label(b, c, 1.0).scores, pseudo_label(shuffled, cs, 1.0).scores);
  BatchDescriptors deep_shuffled = b;
  deep_shuffled.deep = b.deep.colwise().reverse();
  Centroids cd = c;
  cd.deep = c.deep.colwise().reverse();
  EXPECT_EQ(pseudo_label(b, c, 0.0).scores, pseudo_label(deep_shuffled, cd, 0.0).scores);
}

TEST(PseudoLabel, ScaleInvariance) {
  std::mt19937_64 rng(3);
  const BatchDescriptors b = random_batch(10, 5, rng);
  BatchDescriptors scaled = b;
  scaled.deep *= 5.0;
  const PseudoLabels a = pseudo_label(b, compute_centroids(b), 0.5);
  const PseudoLabels s = pseudo_label(scaled, compute_centroids(scaled), 0.5);
  EXPECT_LE((a.scores - s.scores).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(a.labels, s.labels);
}

TEST(PseudoLabel, MatchesBruteForce) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const BatchDescriptors b = random_batch(32, 8, rng);
    const double alpha = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const PseudoLabels p = pseudo_label(b, compute_centroids(b), alpha);
    EXPECT_EQ(p.labels, oracle::pseudo_labels(to_rows(b.deep), to_rows(b.spectral), to_rows(b.probabilities), alpha));
  }
}

TEST(PseudoLabel, EmptyClassesAndZeroNorms) {
  BatchDescriptors b{Eigen::MatrixXd::Ones(2, 4), Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Zero(2, 3)};
  b.probabilities.col(1).setOnes();
  const PseudoLabels p = pseudo_label(b, compute_centroids(b), 0.5);
  EXPECT_EQ(p.labels, (std::vector<int>{1, 1}));
  EXPECT_EQ(p.zero_norm_terms, 2);
  EXPECT_THROW(pseudo_label(b, compute_centroids(b), 1.5), UsageError);
  Centroids none = compute_centroids(b);
  none.empty.assign(3, true);
  EXPECT_THROW(pseudo_label(b, none, 0.5), UsageError);
}

TEST(PseudoLabel, LiteralArgminPicksLeastSimilar) {
  std::mt19937_64 rng(6);
  const BatchDescriptors b = random_batch(6, 3, rng);
  const PseudoLabels p = pseudo_label(b, compute_centroids(b), 0.5, LabelRule::kLiteralArgmin);
  for (int i = 0; i < 6; ++i) {
    Eigen::Index arg;
    p.scores.row(i).minCoeff(&arg);
    EXPECT_EQ(p.labels[i], arg);
  }
}

TEST(Losses, AnalyticValues) {
  Eigen::VectorXd onehot = Eigen::VectorXd::Zero(8);
  onehot(2) = 1.0;
  EXPECT_EQ(loss_pl(onehot, 2), 0.0);
  EXPECT_NEAR(loss_pl(uniform(8), 5), std::log(8.0), 1e-12);
  EXPECT_NEAR(loss_pl(onehot, 3), -std::log(1e-12), 1e-9);
  EXPECT_EQ(loss_ent(onehot), 0.0);
  EXPECT_NEAR(loss_ent(uniform(8)), 2.0794415416798357, 1e-12);
  EXPECT_NEAR(loss_ent(uniform(2)), std::log(2.0), 1e-12);
  EXPECT_EQ(loss_div(Eigen::MatrixXd::Identity(1, 4).replicate(3, 1)), 0.0);
  EXPECT_NEAR(loss_div(Eigen::MatrixXd::Identity(8, 8)), -std::log(8.0), 1e-12);
  EXPECT_NEAR(loss_div(Eigen::MatrixXd::Identity(2, 2)), -std::log(2.0), 1e-12);
}

TEST(Losses, ChamferExamples) {
  Points x(1, 3), y(2, 3);
  x << 0, 0, 0;
  y << 1, 0, 0, 3, 0, 0;
  EXPECT_EQ(loss_cd(x, y), 1.0);
  Points a = Points::Random(10, 3);
  EXPECT_EQ(loss_cd(a, a), 0.0);
  Points super(15, 3);
  super.topRows(10) = a;
  super.bottomRows(5) = Points::Random(5, 3).array() + 4.0;
  EXPECT_EQ(loss_cd(a, super), 0.0);
  EXPECT_GT(loss_cd(super, a), 0.0);
}

TEST(Losses, ChamferGradientGoesToTheNearestPoint) {
  Points x(2, 3), y(3, 3);
  x << 0, 0, 0, 1, 1, 1;
  y << 0.5, 0, 0, 5, 5, 5, 1, 1, 2;
  const ChamferGrad g = loss_cd_with_grad(x, y);
  EXPECT_EQ(g.value, (0.25 + 1.0) / 2.0);
  EXPECT_EQ(g.grad.row(1).norm(), 0.0);
  EXPECT_NEAR(g.grad(0, 0), 2.0 * 0.5 / 2.0, 1e-15);
  EXPECT_NEAR(g.grad(2, 2), 2.0 * 1.0 / 2.0, 1e-15);
}

TEST(Losses, CombinedObjectives) {
  EXPECT_EQ(loss_input_adaptation({1.5, 2.0, -1.0, 0.01}, 0.0, 0.0), 1.5);
  EXPECT_NEAR(loss_input_adaptation({1.0, 2.0, -1.0, 0.001}, 0.3, 1000.0), 2.3, 1e-12);
  EXPECT_EQ(loss_model_adaptation({0.7, 2.0, -1.0, 5.0}, 0.0), 0.7);
  EXPECT_NEAR(loss_model_adaptation({0.5, 1.0, -0.5, 0.0}, 3.0), 2.0, 1e-12);
  EXPECT_THROW(loss_input_adaptation({std::nan(""), 0, 0, 0}, 1, 1), NumericError);
}

TEST(Losses, RangesOnRandomInputs) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = 2 + trial % 7;
    const Eigen::MatrixXd p = random_simplex_rows(6, c, rng);
    const double lc = std::log(static_cast<double>(c));
    for (int i = 0; i < 6; ++i) {
      const double h = loss_ent(p.row(i).transpose());
      EXPECT_GE(h, 0.0);
      EXPECT_LE(h, lc + 1e-12);
      EXPECT_GE(loss_pl(p.row(i).transpose(), i % c), 0.0);
    }
    const double d = loss_div(p);
    EXPECT_LE(d, 1e-12);
    EXPECT_GE(d, -lc - 1e-12);
  }
}

TEST(Objective, LogitGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  Eigen::MatrixXd z = random_matrix(5, 4, rng);
  const std::vector<int> labels = {0, 3, 1, 1, 2};
  const double w = 0.7;
  auto probs = [&] {
    Eigen::MatrixXd p = z;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      Eigen::RowVectorXd e = (z.row(i).array() - z.row(i).maxCoeff()).exp();
      p.row(i) = e / e.sum();
    }
    return p;
  };
  auto value = [&] {
    const ClassificationObjective o = classification_objective(probs(), labels, w);
    return o.parts.pl + w * (o.parts.ent + o.parts.div);
  };
  const ClassificationObjective o = classification_objective(probs(), labels, w);
  for (int i = 0; i < 5; ++i)
    for (int k = 0; k < 4; ++k) {
      const auto [fd, kink] = oracle::central_difference(value, z(i, k), 1e-6);
      EXPECT_LE(oracle::rel_error(o.logit_grads[i](k), fd), 1e-6) << i << "," << k;
    }
  // Terms agree with the brute-force definitions.
  const auto p = to_rows(probs());
  double pl = 0, ent = 0;
  for (int i = 0; i < 5; ++i) {
    pl += oracle::cross_entropy(p[i], labels[i]) / 5.0;
    ent += oracle::entropy(p[i]) / 5.0;
  }
  EXPECT_NEAR(o.parts.pl, pl, 1e-12);
  EXPECT_NEAR(o.parts.ent, ent, 1e-12);
  EXPECT_NEAR(o.parts.div, oracle::diversity(p), 1e-12);
}

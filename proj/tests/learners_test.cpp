#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "albench/learners/checkpoint.hpp"
#include "albench/learners/training.hpp"

namespace albench {
namespace {

Matrix random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

/// Central-difference gradient of `loss` at the network's parameters.
template <class LossFn>
Vector numeric_gradient(Network net, LossFn loss, double h = 1e-6) {
  Vector g(static_cast<Eigen::Index>(net.parameter_count()));
  auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = loss(net);
    params[i] = saved - h;
    const double down = loss(net);
    params[i] = saved;
    g[static_cast<Eigen::Index>(i)] = (up - down) / (2 * h);
  }
  return g;
}

double relative_error(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(1e-12, a.norm() + b.norm());
}

TrainingSet gaussian_blobs(Rng& rng, int per_class, int classes, int dim, double spread) {
  TrainingSet d;
  d.labeled_x = Matrix(per_class * classes, dim);
  for (int c = 0; c < classes; ++c) {
    Vector centre = Vector::Zero(dim);
    centre[c % dim] = (c < dim ? 4.0 : -4.0);
    for (int i = 0; i < per_class; ++i) {
      const int r = c * per_class + i;
      for (int k = 0; k < dim; ++k) d.labeled_x(r, k) = centre[k] + spread * rng.normal();
      d.labeled_y.push_back(c);
    }
  }
  return d;
}

double accuracy(const Network& net, const Matrix& x, const std::vector<int>& y) {
  const auto pred = argmax_rows(net.logits(x));
  int hit = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hit += pred[i] == y[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(y.size());
}

// --- schedule & optimiser -----------------------------------------------

TEST(CosineLr, Endpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 3e-2), 3e-2);
  EXPECT_NEAR(cosine_lr(50, 100, 3e-2), 1.5e-2, 1e-15);
  EXPECT_NEAR(cosine_lr(100, 100, 3e-2), 0.0, 1e-15);
  EXPECT_THROW(cosine_lr(101, 100, 3e-2), Error);
}

TEST(Sgd, ZeroDecayIsPlainMomentum) {
  std::vector<double> w{1.0, -2.0};
  Sgd opt(2, 0.5, 0.0);
  Vector g(2);
  g << 1.0, 1.0;
  opt.step(w, g, 0.1);
  EXPECT_DOUBLE_EQ(w[0], 0.9);
  opt.step(w, g, 0.1);
  // Velocity 0.5 * 1 + 1 = 1.5.
  EXPECT_DOUBLE_EQ(w[0], 0.9 - 0.15);
  EXPECT_DOUBLE_EQ(w[1], -2.0 - 0.1 - 0.15);
}

TEST(Sgd, DecayPullsTowardZero) {
  std::vector<double> w{2.0};
  Sgd opt(1, 0.0, 0.5);
  opt.step(w, Vector::Zero(1), 0.1);
  EXPECT_DOUBLE_EQ(w[0], 2.0 - 0.1 * 0.5 * 2.0);
}

// --- gradients ----------------------------------------------------------

TEST(Gradient, CrossEntropyMatchesFiniteDifferences) {
  Rng rng(1);
  for (const auto& hidden : {std::vector<int>{}, std::vector<int>{3}, std::vector<int>{2, 2}}) {
    const NetworkSpec spec{2, hidden, 3, false};
    const Network net = Network::initialized(spec, 5);
    const Matrix x = random_matrix(rng, 6, 2);
    const std::vector<int> y{0, 1, 2, -1, 1, 0};
    const auto analytic = cross_entropy_objective(net, x, y).grad;
    const auto numeric = numeric_gradient(net, [&](const Network& n) { return cross_entropy_objective(n, x, y).loss; });
    EXPECT_LT(relative_error(analytic, numeric), 1e-6) << "hidden layers " << hidden.size();
  }
}

TEST(Gradient, ConsistencyMatchesFiniteDifferences) {
  Rng rng(2);
  const NetworkSpec spec{2, {3}, 3, false};
  const Network net = Network::initialized(spec, 9);
  const Matrix xu = random_matrix(rng, 8, 2);
  auto targets = consistency_targets(random_matrix(rng, 8, 3, 2.0), 0.6, 0.5);
  targets.mask[0] = 0.0;
  targets.mask[3] = 1.0;
  const auto analytic = consistency_objective(net, xu, targets).grad;
  const auto numeric = numeric_gradient(net, [&](const Network& n) { return consistency_objective(n, xu, targets).loss; });
  EXPECT_LT(relative_error(analytic, numeric), 1e-6);
}

TEST(Gradient, RankingHingeMatchesFiniteDifferences) {
  Rng rng(3);
  const NetworkSpec spec{1, {2, 2}, 2, true};
  ASSERT_LE(spec.parameter_count(), 20u);
  const Network net = Network::initialized(spec, 4);
  const Matrix x = random_matrix(rng, 8, 1);
  const std::vector<int> y{0, 1, 1, 0, 1, 0, 0, 1};
  const auto pairs = consecutive_pairs(8);
  // Margin small enough that no pair sits on the hinge kink.
  const auto analytic = ranking_hinge_objective(net, x, y, pairs, 0.3).grad;
  const auto numeric =
      numeric_gradient(net, [&](const Network& n) { return ranking_hinge_objective(n, x, y, pairs, 0.3).loss; });
  EXPECT_LT(relative_error(analytic, numeric), 1e-4);
}

// --- softmax helpers ----------------------------------------------------

TEST(Sharpen, Example) {
  Vector p(2);
  p << 0.6, 0.4;
  const Vector s = sharpen(p, 0.5);
  EXPECT_NEAR(s[0], 0.36 / 0.52, 1e-12);
  EXPECT_NEAR(s[1], 0.16 / 0.52, 1e-12);
}

TEST(Sharpen, AgreesWithTemperatureSoftmax) {
  Rng rng(6);
  const Matrix logits = random_matrix(rng, 5, 4);
  const Matrix p = softmax_rows(logits);
  const Matrix pt = softmax_rows(logits, 0.5);
  for (Eigen::Index r = 0; r < 5; ++r) {
    EXPECT_LT((sharpen(p.row(r).transpose(), 0.5) - pt.row(r).transpose()).norm(), 1e-12);
  }
}

TEST(ConsistencyTargets, MaskDropsLowConfidenceRows) {
  Matrix logits(2, 2);
  logits << 0.0, 0.0, 5.0, 0.0;
  const auto t = consistency_targets(logits, 0.6, 0.5);
  EXPECT_EQ(t.mask[0], 0.0);
  EXPECT_EQ(t.mask[1], 1.0);
}

TEST(ConsistencyObjective, ZeroWhenEverythingMasked) {
  Rng rng(7);
  const Network net = Network::initialized(NetworkSpec{3, {4}, 2, false}, 1);
  ConsistencyTargets t{softmax_rows(random_matrix(rng, 5, 2)), Vector::Zero(5)};
  const auto out = consistency_objective(net, random_matrix(rng, 5, 3), t);
  EXPECT_EQ(out.loss, 0.0);
  EXPECT_EQ(out.grad.norm(), 0.0);
}

// --- training -----------------------------------------------------------

TEST(Fit, ZeroEpochsReturnsInitialisation) {
  Rng rng(8);
  const auto data = gaussian_blobs(rng, 5, 2, 2, 0.5);
  const NetworkSpec spec{2, {4}, 2, false};
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 13;
  EXPECT_EQ(train_supervised(spec, data, cfg), Network::initialized(spec, 13));
}

TEST(Fit, DeterministicInSeed) {
  Rng rng(9);
  const auto data = gaussian_blobs(rng, 10, 3, 3, 1.0);
  const NetworkSpec spec{3, {8, 8}, 3, false};
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 2;
  EXPECT_EQ(train_supervised(spec, data, cfg), train_supervised(spec, data, cfg));
  auto other = cfg;
  other.seed = 3;
  EXPECT_FALSE(train_supervised(spec, data, cfg) == train_supervised(spec, data, other));
}

TEST(Fit, MemorisesTinyLabeledSet) {
  Rng rng(10);
  TrainingSet d;
  d.labeled_x = random_matrix(rng, 12, 4);
  for (int i = 0; i < 12; ++i) d.labeled_y.push_back(i % 3);
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.weight_decay = 0.0;
  const auto net = train_supervised(NetworkSpec{4, {32, 32}, 3, false}, d, cfg);
  EXPECT_EQ(accuracy(net, d.labeled_x, d.labeled_y), 1.0);
}

TEST(Fit, SeparableBlobsGeneralise) {
  Rng rng(11);
  const auto train = gaussian_blobs(rng, 40, 4, 4, 1.0);
  const auto test = gaussian_blobs(rng, 100, 4, 4, 1.0);
  TrainConfig cfg;
  cfg.epochs = 40;
  for (const auto& hidden : {std::vector<int>{}, std::vector<int>{16, 16}}) {
    const auto net = train_supervised(NetworkSpec{4, hidden, 4, false}, train, cfg);
    EXPECT_GE(accuracy(net, test.labeled_x, test.labeled_y), 0.95);
  }
}

TEST(Fit, SslRunsAndFallsBackWithoutUnlabeledData) {
  Rng rng(12);
  auto data = gaussian_blobs(rng, 10, 2, 2, 0.5);
  TrainConfig cfg;
  cfg.epochs = 3;
  const NetworkSpec spec{2, {4}, 2, false};
  // Without unlabeled rows the consistency term vanishes.
  EXPECT_EQ(train_ssl(spec, data, SSLConfig{}, cfg), train_supervised(spec, data, cfg));
  data.unlabeled_x = random_matrix(rng, 30, 2);
  const auto ssl = train_ssl(spec, data, SSLConfig{}, cfg);
  EXPECT_FALSE(ssl == train_supervised(spec, data, cfg));
}

TEST(Fit, InvalidConfigIsRejected) {
  Rng rng(13);
  const auto data = gaussian_blobs(rng, 3, 2, 2, 0.5);
  TrainConfig cfg;
  cfg.momentum = 1.0;
  EXPECT_THROW(train_supervised(NetworkSpec{2, {}, 2, false}, data, cfg), Error);
}

TEST(Ensemble, MembersDifferAndShareShape) {
  Rng rng(14);
  const auto data = gaussian_blobs(rng, 8, 2, 2, 0.7);
  FitOptions opt;
  opt.train.epochs = 2;
  const auto members = train_ensemble(NetworkSpec{2, {4}, 2, false}, data, opt, EnsembleConfig{});
  ASSERT_EQ(members.size(), 5u);
  for (std::size_t m = 1; m < members.size(); ++m) {
    EXPECT_EQ(members[m].spec(), members[0].spec());
    EXPECT_FALSE(members[m] == members[0]);
  }
}

TEST(Ensemble, DuplicateSeedsAreConfigError) {
  EnsembleConfig cfg{3, {1, 2, 1}};
  try {
    cfg.seeds(0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
  }
  EXPECT_THROW((EnsembleConfig{1, {}}.seeds(0)), Error);
}

// The loss head learns to rank: samples with flipped labels (high loss)
// receive higher predicted loss on average than clean ones.
TEST(LossHead, PredictsHigherLossOnNoisyLabels) {
  Rng rng(15);
  auto data = gaussian_blobs(rng, 60, 2, 2, 0.6);
  std::vector<bool> noisy(data.labeled_y.size(), false);
  for (std::size_t i = 0; i < noisy.size(); i += 5) {
    data.labeled_y[i] = 1 - data.labeled_y[i];
    noisy[i] = true;
  }
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.weight_decay = 0.0;
  const auto net = train_loss_head(NetworkSpec{2, {16, 16}, 2, false}, data, cfg);
  const Vector head = net.forward(data.labeled_x).head;
  double sum_noisy = 0, sum_clean = 0;
  int n_noisy = 0, n_clean = 0;
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    (noisy[i] ? sum_noisy : sum_clean) += head[static_cast<Eigen::Index>(i)];
    ++(noisy[i] ? n_noisy : n_clean);
  }
  EXPECT_GT(sum_noisy / n_noisy, sum_clean / n_clean);
}

// --- checkpoints --------------------------------------------------------

TEST(Checkpoint, RoundTripPreservesPredictions) {
  Rng rng(16);
  for (bool head : {false, true}) {
    const auto net = Network::initialized(NetworkSpec{3, {5, 4}, 3, head}, 21);
    std::stringstream ss;
    save_checkpoint(net, ss);
    const auto loaded = load_checkpoint(ss);
    EXPECT_EQ(loaded.spec(), net.spec());
    const Matrix x = random_matrix(rng, 4, 3);
    // Payload is f32, so predictions agree to single precision.
    EXPECT_LT((loaded.logits(x) - net.logits(x)).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(Checkpoint, RejectsBadMagic) {
  std::stringstream ss("NOPE0000");
  EXPECT_THROW(load_checkpoint(ss), Error);
}

}  // namespace
}  // namespace albench

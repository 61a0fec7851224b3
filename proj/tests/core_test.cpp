#include <gtest/gtest.h>

#include "albench/core.hpp"
#include "albench/random.hpp"

namespace albench {
namespace {

Dataset four_sample_set() {
  Dataset d;
  d.num_classes = 2;
  d.features = {{0.0, 1.0}, {1.0, 0.0}, {0.5, 0.5}, {2.0, 2.0}};
  d.labels = {0, 1, 0, 1};
  return d;
}

TEST(ValidateDataset, WellFormedClassificationSetHasNoViolations) {
  EXPECT_TRUE(validate_dataset(four_sample_set()).empty());
}

TEST(ValidateDataset, LengthMismatchIsOneViolation) {
  Dataset d = four_sample_set();
  d.labels.pop_back();
  const auto v = validate_dataset(d);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].rule, "length");
}

TEST(ValidateDataset, MaskClassIdOutOfRange) {
  Dataset d;
  d.task = Task::segmentation;
  d.num_classes = 3;
  Image im{2, 2, 1, std::vector<float>(4, 0.5f)};
  LabelMask ok(2, 2, 1);
  LabelMask bad(2, 2, 0);
  bad.set(1, 1, 3);
  d.images = {im, im};
  d.masks = {ok, bad};
  const auto v = validate_dataset(d);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].rule, "range");
  EXPECT_EQ(v[0].index, Index{1});
}

TEST(ValidateDataset, VoidIdIsNotARangeViolation) {
  Dataset d;
  d.task = Task::segmentation;
  d.num_classes = 2;
  LabelMask m(2, 1, 0, 255);
  m.set(0, 1, 255);
  d.images = {Image{2, 1, 1, {0.0f, 1.0f}}};
  d.masks = {m};
  EXPECT_TRUE(validate_dataset(d).empty());
}

TEST(ValidateDataset, RaggedFeatureVector) {
  Dataset d = four_sample_set();
  d.features[2].push_back(3.0);
  const auto v = validate_dataset(d);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].rule, "dimension");
  EXPECT_EQ(v[0].index, Index{2});
}

TEST(ApplyAcquisition, MovesChosenIntoLabeled) {
  PoolState p;
  p.labeled = {0};
  p.unlabeled = {1, 2};
  const auto q = apply_acquisition(p, {2});
  EXPECT_EQ(q.labeled, (std::set<Index>{0, 2}));
  EXPECT_EQ(q.unlabeled, (std::set<Index>{1}));
  // Input untouched.
  EXPECT_EQ(p.unlabeled, (std::set<Index>{1, 2}));
}

TEST(ApplyAcquisition, EmptyChoiceIsIdentity) {
  PoolState p;
  p.labeled = {0};
  p.unlabeled = {1, 2};
  EXPECT_EQ(apply_acquisition(p, {}), p);
}

TEST(ApplyAcquisition, AlreadyLabeledIsRejected) {
  PoolState p;
  p.labeled = {0};
  p.unlabeled = {1, 2};
  try {
    apply_acquisition(p, {0});
    FAIL() << "expected rejection";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::already_labeled);
    EXPECT_NE(std::string(e.what()).find("already labeled"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find('0'), std::string::npos);
  }
}

TEST(ApplyAcquisition, PolygonRegimeMovesThroughPartial) {
  auto p = PoolState::all_unlabeled(3);
  Polygon poly{1, {{0, 0}, {0, 1}, {1, 1}, {1, 0}}, 0};
  p = apply_polygon_acquisition(p, 1, poly, 4, false);
  EXPECT_TRUE(p.partial_labels.contains(1));
  EXPECT_FALSE(p.unlabeled.contains(1));
  EXPECT_EQ(p.size(), 3u);
  EXPECT_THROW(apply_polygon_acquisition(p, 1, poly, 4, false), Error);
  poly.component = 1;
  p = apply_polygon_acquisition(p, 1, poly, 5, true);
  EXPECT_TRUE(p.labeled.contains(1));
  EXPECT_FALSE(p.partial_labels.contains(1));
  EXPECT_EQ(p.total_clicks(), 9);
}

// Random acquisition sequences conserve the partition size and click totals.
TEST(PoolStateProperty, SizeAndClicksConserved) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5 + rng.below(40);
    auto p = PoolState::all_unlabeled(n);
    std::int64_t expected_clicks = 0;
    while (!p.unlabeled.empty()) {
      std::set<Index> chosen;
      std::map<Index, std::int64_t> costs;
      for (Index i : p.unlabeled) {
        if (rng.below(3) == 0) {
          chosen.insert(i);
          costs[i] = static_cast<std::int64_t>(rng.below(50));
          expected_clicks += costs[i];
        }
      }
      p = apply_acquisition(p, chosen, costs);
      ASSERT_EQ(p.size(), n);
      ASSERT_EQ(p.total_clicks(), expected_clicks);
      for (Index i : p.labeled) ASSERT_FALSE(p.unlabeled.contains(i));
    }
  }
}

TEST(Serialization, PoolStateRoundTrip) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    PoolState p = PoolState::all_unlabeled(30);
    for (Index i = 0; i < 30; ++i) {
      const auto r = rng.below(3);
      if (r == 0) {
        p = apply_acquisition(p, {i}, {{i, static_cast<std::int64_t>(rng.below(100))}});
      } else if (r == 1) {
        Polygon poly{static_cast<int>(rng.below(5)), {{0, 0}, {0, 3}, {2, 3}}, static_cast<int>(rng.below(4))};
        p = apply_polygon_acquisition(p, i, poly, 3, false);
        p.partial_labels[i].tolerance = 10.0;
      }
    }
    const Json j = p;
    EXPECT_EQ(Json::parse(j.dump()).get<PoolState>(), p);
  }
}

TEST(Serialization, ExperimentRecordRoundTrip) {
  ExperimentRecord r;
  r.preset = "cifar10-low";
  r.strategy = "entropy";
  r.learner = "mlp";
  r.seed = 0xfedcba9876543210ULL;
  r.trial = 2;
  r.metric = Metric::miou;
  r.points = {{0, 250, 250, 0.125, std::nullopt}, {1, 500, 500, 1.0 / 3.0, 0.7}};
  r.acquisitions = {{0, 4, -1, 1}, {1, 7, 2, 33}};
  const Json j = r;
  EXPECT_EQ(Json::parse(j.dump()).get<ExperimentRecord>(), r);
  EXPECT_TRUE(validate_record(r).empty());
}

TEST(ExperimentRecord, NonIncreasingCycleIsReported) {
  ExperimentRecord r;
  r.points = {{0, 10, 10, 0.5, std::nullopt}, {0, 20, 20, 0.5, std::nullopt}};
  EXPECT_EQ(validate_record(r).size(), 1u);
}

TEST(PolygonSetJson, BareArraySchema) {
  PolygonSet s;
  s.polygons = {Polygon{3, {{0, 0}, {0, 2}, {2, 2}, {2, 0}}, -1}};
  s.recount();
  const Json j = s;
  EXPECT_EQ(j.dump(), R"([{"class":3,"ring":[[0,0],[0,2],[2,2],[2,0]]}])");
  EXPECT_EQ(j.get<PolygonSet>().clicks, 4);
}

TEST(Budget, AllowanceArithmetic) {
  Budget b{BudgetUnit::samples, 5000, 2500, 6};
  EXPECT_EQ(b.total(), 20000);
  EXPECT_EQ(b.allowance(0), 5000);
  EXPECT_EQ(b.allowance(3), 12500);
  EXPECT_FALSE(affordable(4, 3));
  EXPECT_TRUE(affordable(3, 3));
}

TEST(ValidateBundle, RejectsOffSimplexRows) {
  PredictionBundle b;
  b.indices = {0, 1};
  b.probs = Eigen::MatrixXd(2, 2);
  *b.probs << 0.5, 0.5, 0.7, 0.4;
  EXPECT_THROW(validate_bundle(b), Error);
  (*b.probs)(1, 1) = 0.3;
  EXPECT_NO_THROW(validate_bundle(b));
}

TEST(ValidateBundle, RequiresAField) {
  PredictionBundle b;
  EXPECT_THROW(validate_bundle(b), Error);
}

}  // namespace
}  // namespace albench

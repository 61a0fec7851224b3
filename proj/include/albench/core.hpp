#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "albench/error.hpp"
#include "json.hpp"

namespace albench {

/// Stable position of a sample in its dataset's ordered item list.
using Index = std::size_t;
using ClassId = int;
using Json = nlohmann::json;

enum class Task { classification, segmentation };

/// Dense class-id raster. Pixels are stored row-major.
struct LabelMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
  std::optional<ClassId> void_id;

  LabelMask() = default;
  LabelMask(int w, int h, ClassId fill = 0, std::optional<ClassId> void_label = std::nullopt)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, static_cast<std::uint8_t>(fill)),
        void_id(void_label) {}

  ClassId at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  void set(int row, int col, ClassId id) {
    pixels[static_cast<std::size_t>(row) * width + col] = static_cast<std::uint8_t>(id);
  }
  bool is_void(ClassId id) const { return void_id && *void_id == id; }
  std::size_t size() const { return pixels.size(); }

  friend bool operator==(const LabelMask& a, const LabelMask& b) {
    return a.width == b.width && a.height == b.height && a.pixels == b.pixels;
  }
};

/// H x W x C image, interleaved channels, values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> values;

  float at(int row, int col, int ch) const {
    return values[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
};

/// Non-negative per-pixel raster (entropy maps).
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  double at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
};

struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
  friend auto operator<=>(const Point&, const Point&) = default;
};

/// Closed ring of pixel-corner coordinates; the closing edge is implicit.
using Ring = std::vector<Point>;

struct Polygon {
  ClassId class_id = 0;
  Ring ring;
  /// Connected-component index the ring was traced from, -1 when unknown.
  int component = -1;
  friend bool operator==(const Polygon&, const Polygon&) = default;
};

struct PolygonSet {
  std::vector<Polygon> polygons;
  std::int64_t clicks = 0;
  double tolerance = 0.0;

  void recount() {
    clicks = 0;
    for (const auto& p : polygons) clicks += static_cast<std::int64_t>(p.ring.size());
  }
  friend bool operator==(const PolygonSet&, const PolygonSet&) = default;
};

struct Dataset {
  Task task = Task::classification;
  int num_classes = 0;
  std::vector<std::vector<double>> features;
  std::vector<ClassId> labels;
  std::vector<Image> images;
  std::vector<LabelMask> masks;

  std::size_t size() const {
    return task == Task::classification ? features.size() : images.size();
  }
  std::size_t feature_dim() const { return features.empty() ? 0 : features.front().size(); }
};

struct Violation {
  std::optional<Index> index;
  std::string rule;
  std::string message;
};

inline std::vector<Violation> validate_dataset(const Dataset& d) {
  std::vector<Violation> out;
  auto add = [&](std::optional<Index> i, std::string rule, std::string msg) {
    out.push_back({i, std::move(rule), std::move(msg)});
  };
  if (d.num_classes <= 0) add(std::nullopt, "num_classes", "num_classes must be positive");

  if (d.task == Task::classification) {
    if (d.features.size() != d.labels.size()) {
      add(std::nullopt, "length",
          "items length " + std::to_string(d.features.size()) + " != targets length " +
              std::to_string(d.labels.size()));
    }
    const std::size_t dim = d.feature_dim();
    for (Index i = 0; i < d.features.size(); ++i) {
      if (d.features[i].size() != dim) {
        add(i, "dimension", "feature vector has " + std::to_string(d.features[i].size()) +
                                " entries, expected " + std::to_string(dim));
      }
      if (!std::all_of(d.features[i].begin(), d.features[i].end(),
                       [](double v) { return std::isfinite(v); })) {
        add(i, "finite", "feature vector contains a non-finite value");
      }
    }
    for (Index i = 0; i < d.labels.size(); ++i) {
      if (d.labels[i] < 0 || d.labels[i] >= d.num_classes) {
        add(i, "range", "target " + std::to_string(d.labels[i]) + " outside [0, " +
                            std::to_string(d.num_classes) + ")");
      }
    }
    return out;
  }

  if (d.images.size() != d.masks.size()) {
    add(std::nullopt, "length",
        "items length " + std::to_string(d.images.size()) + " != targets length " +
            std::to_string(d.masks.size()));
  }
  const int channels = d.images.empty() ? 0 : d.images.front().channels;
  for (Index i = 0; i < d.images.size(); ++i) {
    const auto& im = d.images[i];
    if (im.channels != channels) add(i, "dimension", "image channel count differs");
    if (im.values.size() != static_cast<std::size_t>(im.width) * im.height * im.channels) {
      add(i, "dimension", "image buffer size does not match its shape");
    }
    if (!std::all_of(im.values.begin(), im.values.end(),
                     [](float v) { return v >= 0.0f && v <= 1.0f; })) {
      add(i, "range", "image value outside [0, 1]");
    }
    if (i < d.masks.size() &&
        (d.masks[i].width != im.width || d.masks[i].height != im.height)) {
      add(i, "dimension", "mask shape differs from image shape");
    }
  }
  for (Index i = 0; i < d.masks.size(); ++i) {
    const auto& m = d.masks[i];
    for (auto px : m.pixels) {
      if (px >= d.num_classes && !m.is_void(px)) {
        add(i, "range", "mask class id " + std::to_string(px) + " outside [0, " +
                            std::to_string(d.num_classes) + ")");
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pool partition

struct PoolState {
  std::set<Index> labeled;
  std::set<Index> unlabeled;
  /// Polygon-regime images with some (not all) components annotated.
  std::map<Index, PolygonSet> partial_labels;
  std::map<Index, std::int64_t> spent_clicks;

  static PoolState all_unlabeled(std::size_t n) {
    PoolState p;
    for (Index i = 0; i < n; ++i) p.unlabeled.insert(p.unlabeled.end(), i);
    return p;
  }

  std::size_t size() const { return labeled.size() + unlabeled.size() + partial_labels.size(); }

  std::int64_t total_clicks() const {
    std::int64_t sum = 0;
    for (const auto& [_, c] : spent_clicks) sum += c;
    return sum;
  }

  friend bool operator==(const PoolState&, const PoolState&) = default;
};

/// Moves `chosen` from the unlabeled pool into the labeled set and records
/// per-index click costs. The input state is left untouched.
inline PoolState apply_acquisition(const PoolState& p, const std::set<Index>& chosen,
                                   const std::map<Index, std::int64_t>& costs = {}) {
  for (Index i : chosen) {
    if (p.labeled.contains(i)) fail(ErrorCode::already_labeled, "index " + std::to_string(i) + " already labeled");
    if (!p.unlabeled.contains(i) && !p.partial_labels.contains(i)) {
      fail(ErrorCode::invalid_argument, "index " + std::to_string(i) + " is not in the pool");
    }
  }
  for (const auto& [i, c] : costs) {
    require(chosen.contains(i), ErrorCode::invalid_argument,
            "cost given for index " + std::to_string(i) + " which was not chosen");
    require(c >= 0, ErrorCode::invalid_argument, "negative cost for index " + std::to_string(i));
  }
  PoolState next = p;
  for (Index i : chosen) {
    next.unlabeled.erase(i);
    next.partial_labels.erase(i);
    next.labeled.insert(i);
  }
  for (const auto& [i, c] : costs) next.spent_clicks[i] += c;
  return next;
}

/// Polygon regime: annotate one component of image `i`. When `completes_image`
/// is set the image moves to the labeled set (its polygons are then implied by
/// the full annotation).
inline PoolState apply_polygon_acquisition(const PoolState& p, Index i, const Polygon& polygon,
                                           std::int64_t cost, bool completes_image) {
  if (p.labeled.contains(i)) fail(ErrorCode::already_labeled, "index " + std::to_string(i) + " already labeled");
  require(p.unlabeled.contains(i) || p.partial_labels.contains(i), ErrorCode::invalid_argument,
          "index " + std::to_string(i) + " is not in the pool");
  require(cost >= 0, ErrorCode::invalid_argument, "negative cost");
  if (auto it = p.partial_labels.find(i); it != p.partial_labels.end()) {
    for (const auto& q : it->second.polygons) {
      if (polygon.component >= 0 && q.component == polygon.component) {
        fail(ErrorCode::already_labeled, "component " + std::to_string(polygon.component) +
                                             " of index " + std::to_string(i) + " already labeled");
      }
    }
  }
  PoolState next = p;
  next.unlabeled.erase(i);
  next.spent_clicks[i] += cost;
  if (completes_image) {
    next.partial_labels.erase(i);
    next.labeled.insert(i);
  } else {
    auto& set = next.partial_labels[i];
    set.polygons.push_back(polygon);
    set.recount();
  }
  return next;
}

// ---------------------------------------------------------------------------
// Budgets

enum class BudgetUnit { samples, clicks };

struct Budget {
  BudgetUnit unit = BudgetUnit::samples;
  std::int64_t initial = 0;
  std::int64_t per_cycle = 0;
  int cycles = 1;

  std::int64_t total() const { return initial + static_cast<std::int64_t>(cycles) * per_cycle; }
  /// Cumulative allowance after cycle `c` (cycle 0 is the initial labeling).
  std::int64_t allowance(int c) const { return initial + static_cast<std::int64_t>(c) * per_cycle; }

  friend bool operator==(const Budget&, const Budget&) = default;
};

/// All-or-nothing charging: a unit is bought whole or not at all.
inline bool affordable(std::int64_t cost, std::int64_t remaining) { return cost <= remaining; }

// ---------------------------------------------------------------------------
// Model outputs consumed by query strategies

enum class BundleField { probs, features, pred_loss, ensemble_votes, entropy_maps, disc_scores };

inline const std::vector<std::pair<BundleField, std::string>>& bundle_field_names() {
  static const std::vector<std::pair<BundleField, std::string>> names = {
      {BundleField::probs, "probs"},
      {BundleField::features, "features"},
      {BundleField::pred_loss, "pred_loss"},
      {BundleField::ensemble_votes, "ensemble_votes"},
      {BundleField::entropy_maps, "entropy_maps"},
      {BundleField::disc_scores, "disc_scores"},
  };
  return names;
}

inline std::string to_string(BundleField f) {
  for (const auto& [field, name] : bundle_field_names()) {
    if (field == f) return name;
  }
  return "?";
}

inline std::optional<BundleField> parse_bundle_field(std::string_view name) {
  for (const auto& [field, n] : bundle_field_names()) {
    if (n == name) return field;
  }
  return std::nullopt;
}

using FieldSet = std::set<BundleField>;

constexpr double kSimplexTolerance = 1e-6;

struct PredictionBundle {
  /// Row r of every populated field describes sample indices[r].
  std::vector<Index> indices;
  std::optional<Eigen::MatrixXd> probs;
  std::optional<Eigen::MatrixXd> features;
  std::optional<Eigen::VectorXd> pred_loss;
  std::optional<Eigen::MatrixXi> ensemble_votes;
  std::optional<std::vector<Raster>> entropy_maps;
  std::optional<Eigen::VectorXd> disc_scores;

  std::size_t rows() const { return indices.size(); }

  bool has(BundleField f) const {
    switch (f) {
      case BundleField::probs: return probs.has_value();
      case BundleField::features: return features.has_value();
      case BundleField::pred_loss: return pred_loss.has_value();
      case BundleField::ensemble_votes: return ensemble_votes.has_value();
      case BundleField::entropy_maps: return entropy_maps.has_value();
      case BundleField::disc_scores: return disc_scores.has_value();
    }
    return false;
  }

  FieldSet fields() const {
    FieldSet out;
    for (const auto& [f, _] : bundle_field_names()) {
      if (has(f)) out.insert(f);
    }
    return out;
  }
};

/// Checks every populated field against its invariants; throws on the first
/// breach. Bundles from external adapters go through the same gate.
inline void validate_bundle(const PredictionBundle& b, std::optional<int> num_classes = std::nullopt) {
  const auto n = static_cast<Eigen::Index>(b.rows());
  require(!b.fields().empty(), ErrorCode::missing_field, "prediction bundle has no populated field");
  auto rows_match = [&](Eigen::Index rows, const char* name) {
    require(rows == n, ErrorCode::invalid_argument,
            std::string(name) + " has " + std::to_string(rows) + " rows, expected " + std::to_string(n));
  };
  if (b.probs) {
    rows_match(b.probs->rows(), "probs");
    if (num_classes) {
      require(b.probs->cols() == *num_classes, ErrorCode::invalid_argument,
              "probs width " + std::to_string(b.probs->cols()) + " != num_classes");
    }
    for (Eigen::Index r = 0; r < b.probs->rows(); ++r) {
      const auto row = b.probs->row(r);
      require(row.allFinite() && (row.array() >= 0.0).all() &&
                  std::abs(row.sum() - 1.0) <= kSimplexTolerance,
              ErrorCode::invalid_distribution,
              "probs row " + std::to_string(r) + " is not on the probability simplex");
    }
  }
  if (b.features) {
    rows_match(b.features->rows(), "features");
    require(b.features->allFinite(), ErrorCode::invalid_argument, "features contain non-finite values");
  }
  if (b.pred_loss) {
    rows_match(b.pred_loss->size(), "pred_loss");
    require(b.pred_loss->allFinite(), ErrorCode::invalid_argument, "pred_loss contains non-finite values");
  }
  if (b.ensemble_votes) {
    rows_match(b.ensemble_votes->rows(), "ensemble_votes");
    if (num_classes && b.ensemble_votes->size() > 0) {
      require(b.ensemble_votes->minCoeff() >= 0 && b.ensemble_votes->maxCoeff() < *num_classes,
              ErrorCode::invalid_argument, "ensemble vote outside [0, num_classes)");
    }
  }
  if (b.entropy_maps) {
    rows_match(static_cast<Eigen::Index>(b.entropy_maps->size()), "entropy_maps");
    for (const auto& m : *b.entropy_maps) {
      require(m.values.size() == static_cast<std::size_t>(m.width) * m.height,
              ErrorCode::invalid_argument, "entropy map buffer does not match its shape");
      for (double v : m.values) {
        require(std::isfinite(v) && v >= 0.0, ErrorCode::invalid_argument, "negative entropy value");
      }
    }
  }
  if (b.disc_scores) {
    rows_match(b.disc_scores->size(), "disc_scores");
    require((b.disc_scores->array() >= 0.0).all() && (b.disc_scores->array() <= 1.0).all(),
            ErrorCode::invalid_argument, "discriminator score outside [0, 1]");
  }
}

// ---------------------------------------------------------------------------
// Learning-curve records

enum class Metric { accuracy, miou };

struct CurvePoint {
  int cycle = 0;
  std::int64_t spent = 0;
  std::size_t labeled = 0;
  double value = 0.0;
  /// Segmentation only: mIoU against the polygon-approximated ground truth.
  std::optional<double> value_approx;
  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct Acquisition {
  int cycle = 0;
  Index index = 0;
  int component = -1;
  std::int64_t cost = 0;
  friend bool operator==(const Acquisition&, const Acquisition&) = default;
};

struct ExperimentRecord {
  std::string preset;
  std::string strategy;
  std::string learner;
  std::uint64_t seed = 0;
  int trial = 0;
  Metric metric = Metric::accuracy;
  std::vector<CurvePoint> points;
  std::vector<Acquisition> acquisitions;
  /// Empty when the trial completed.
  std::string failure;

  bool ok() const { return failure.empty(); }
  friend bool operator==(const ExperimentRecord&, const ExperimentRecord&) = default;
};

inline std::vector<std::string> validate_record(const ExperimentRecord& r) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i < r.points.size(); ++i) {
    if (r.points[i].cycle <= r.points[i - 1].cycle) {
      out.push_back("cycle index not strictly increasing at point " + std::to_string(i));
    }
    if (r.points[i].spent < r.points[i - 1].spent) {
      out.push_back("cumulative budget decreases at point " + std::to_string(i));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(Json& j, const Point& p) { j = Json::array({p.x, p.y}); }
inline void from_json(const Json& j, Point& p) {
  p.x = j.at(0).get<int>();
  p.y = j.at(1).get<int>();
}

inline void to_json(Json& j, const Polygon& p) {
  j = Json{{"class", p.class_id}, {"ring", p.ring}};
  if (p.component >= 0) j["component"] = p.component;
}
inline void from_json(const Json& j, Polygon& p) {
  p.class_id = j.at("class").get<int>();
  p.ring = j.at("ring").get<Ring>();
  p.component = j.value("component", -1);
}

/// PolygonSets serialize as a bare array `[{class, ring:[[x,y],...]}]`.
inline void to_json(Json& j, const PolygonSet& s) { j = s.polygons; }
inline void from_json(const Json& j, PolygonSet& s) {
  s.polygons = j.get<std::vector<Polygon>>();
  s.recount();
}

inline void to_json(Json& j, const PoolState& p) {
  Json partial = Json::array();
  for (const auto& [i, set] : p.partial_labels) {
    partial.push_back({{"index", i}, {"tolerance", set.tolerance}, {"polygons", set}});
  }
  Json clicks = Json::array();
  for (const auto& [i, c] : p.spent_clicks) clicks.push_back(Json::array({i, c}));
  j = Json{{"labeled", p.labeled},
           {"unlabeled", p.unlabeled},
           {"partial_labels", partial},
           {"spent_clicks", clicks}};
}
inline void from_json(const Json& j, PoolState& p) {
  p.labeled = j.at("labeled").get<std::set<Index>>();
  p.unlabeled = j.at("unlabeled").get<std::set<Index>>();
  p.partial_labels.clear();
  for (const auto& e : j.at("partial_labels")) {
    PolygonSet set = e.at("polygons").get<PolygonSet>();
    set.tolerance = e.at("tolerance").get<double>();
    p.partial_labels.emplace(e.at("index").get<Index>(), std::move(set));
  }
  p.spent_clicks.clear();
  for (const auto& e : j.at("spent_clicks")) {
    p.spent_clicks.emplace(e.at(0).get<Index>(), e.at(1).get<std::int64_t>());
  }
}

inline void to_json(Json& j, const CurvePoint& p) {
  j = Json{{"cycle", p.cycle}, {"spent", p.spent}, {"labeled", p.labeled}, {"value", p.value}};
  if (p.value_approx) j["value_approx_gt"] = *p.value_approx;
}
inline void from_json(const Json& j, CurvePoint& p) {
  p.cycle = j.at("cycle").get<int>();
  p.spent = j.at("spent").get<std::int64_t>();
  p.labeled = j.at("labeled").get<std::size_t>();
  p.value = j.at("value").get<double>();
  p.value_approx = j.contains("value_approx_gt") ? std::optional(j["value_approx_gt"].get<double>())
                                                 : std::nullopt;
}

inline void to_json(Json& j, const Acquisition& a) {
  j = Json{{"cycle", a.cycle}, {"index", a.index}, {"cost", a.cost}};
  if (a.component >= 0) j["component"] = a.component;
}
inline void from_json(const Json& j, Acquisition& a) {
  a.cycle = j.at("cycle").get<int>();
  a.index = j.at("index").get<Index>();
  a.cost = j.at("cost").get<std::int64_t>();
  a.component = j.value("component", -1);
}

inline std::string to_string(Metric m) { return m == Metric::accuracy ? "accuracy" : "mIoU"; }

inline void to_json(Json& j, const ExperimentRecord& r) {
  j = Json{{"preset", r.preset},   {"strategy", r.strategy},         {"learner", r.learner},
           {"seed", r.seed},       {"trial", r.trial},               {"metric", to_string(r.metric)},
           {"points", r.points},   {"acquisitions", r.acquisitions}, {"failure", r.failure}};
}
inline void from_json(const Json& j, ExperimentRecord& r) {
  r.preset = j.at("preset").get<std::string>();
  r.strategy = j.at("strategy").get<std::string>();
  r.learner = j.at("learner").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.trial = j.at("trial").get<int>();
  const auto metric = j.at("metric").get<std::string>();
  require(metric == "accuracy" || metric == "mIoU", ErrorCode::invalid_argument, "unknown metric " + metric);
  r.metric = metric == "accuracy" ? Metric::accuracy : Metric::miou;
  r.points = j.at("points").get<std::vector<CurvePoint>>();
  r.acquisitions = j.at("acquisitions").get<std::vector<Acquisition>>();
  r.failure = j.value("failure", "");
}

}  // namespace albench

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "albench/core.hpp"

namespace albench {

constexpr double kDefaultTolerance = 10.0;

// ---------------------------------------------------------------------------
// Connected components

struct Component {
  ClassId class_id = 0;
  /// Row-major linear pixel indices, ascending.
  std::vector<std::size_t> pixels;
  int min_row = 0;
  int min_col = 0;
};

/// 4-connected components of a mask plus a per-pixel component id (-1 on
/// void pixels). Components are ordered by their first pixel in raster order,
/// i.e. by (min row, min col within that row).
struct Components {
  int width = 0;
  int height = 0;
  std::vector<Component> list;
  std::vector<int> pixel_component;

  std::size_t size() const { return list.size(); }
  const Component& operator[](std::size_t i) const { return list[i]; }
  bool contains(int component, int row, int col) const {
    return row >= 0 && col >= 0 && row < height && col < width &&
           pixel_component[static_cast<std::size_t>(row) * width + col] == component;
  }
};

inline Components connected_components(const LabelMask& mask) {
  Components out;
  out.width = mask.width;
  out.height = mask.height;
  out.pixel_component.assign(mask.size(), -1);
  std::deque<std::size_t> frontier;
  for (std::size_t seed = 0; seed < mask.size(); ++seed) {
    const ClassId cls = mask.pixels[seed];
    if (out.pixel_component[seed] >= 0 || mask.is_void(cls)) continue;
    const int id = static_cast<int>(out.list.size());
    Component comp;
    comp.class_id = cls;
    comp.min_row = static_cast<int>(seed / mask.width);
    comp.min_col = static_cast<int>(seed % mask.width);
    out.pixel_component[seed] = id;
    frontier.push_back(seed);
    while (!frontier.empty()) {
      const std::size_t p = frontier.front();
      frontier.pop_front();
      comp.pixels.push_back(p);
      const int r = static_cast<int>(p / mask.width);
      const int c = static_cast<int>(p % mask.width);
      const int nr[4] = {r - 1, r + 1, r, r};
      const int nc[4] = {c, c, c - 1, c + 1};
      for (int k = 0; k < 4; ++k) {
        if (nr[k] < 0 || nc[k] < 0 || nr[k] >= mask.height || nc[k] >= mask.width) continue;
        const std::size_t q = static_cast<std::size_t>(nr[k]) * mask.width + nc[k];
        if (out.pixel_component[q] >= 0 || mask.pixels[q] != cls) continue;
        out.pixel_component[q] = id;
        frontier.push_back(q);
      }
    }
    std::sort(comp.pixels.begin(), comp.pixels.end());
    out.list.push_back(std::move(comp));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Contour tracing on the pixel-corner lattice

namespace detail {

struct Dir {
  int dx;
  int dy;
  friend bool operator==(const Dir&, const Dir&) = default;
};

/// Pixel (row, col) on the interior side of the unit edge leaving vertex
/// (x, y) in direction d, and the pixel on the exterior side.
inline std::pair<std::pair<int, int>, std::pair<int, int>> edge_sides(Point v, Dir d) {
  if (d == Dir{0, 1}) return {{v.y, v.x}, {v.y, v.x - 1}};
  if (d == Dir{1, 0}) return {{v.y - 1, v.x}, {v.y, v.x}};
  if (d == Dir{0, -1}) return {{v.y - 1, v.x - 1}, {v.y - 1, v.x}};
  return {{v.y, v.x - 1}, {v.y - 1, v.x - 1}};
}

}  // namespace detail

/// Outer boundary of component `id` as a ring of pixel corners (x, y). The
/// ring runs counter-clockwise as displayed (y axis pointing down), starts at
/// the vertex smallest in (y, x) order and keeps only direction changes. At
/// pinch vertices the walk turns toward the current pixel, so diagonal-only
/// contact never joins pixels (4-connectivity).
inline Ring trace_contour(const Components& comps, int id) {
  require(id >= 0 && static_cast<std::size_t>(id) < comps.size(), ErrorCode::invalid_argument,
          "component " + std::to_string(id) + " does not exist");
  const auto& comp = comps[static_cast<std::size_t>(id)];
  require(!comp.pixels.empty(), ErrorCode::invalid_argument, "empty component");
  const Point start{comp.min_col, comp.min_row};
  auto valid = [&](Point v, detail::Dir d) {
    const auto [in, out] = detail::edge_sides(v, d);
    return comps.contains(id, in.first, in.second) && !comps.contains(id, out.first, out.second);
  };

  Ring ring{start};
  detail::Dir d{0, 1};
  Point v = start;
  const std::size_t cap = 4 * (static_cast<std::size_t>(comps.width) + 1) * (comps.height + 1) + 8;
  for (std::size_t guard = 0; guard < cap; ++guard) {
    v = {v.x + d.dx, v.y + d.dy};
    if (v == start) return ring;
    const detail::Dir candidates[3] = {{d.dy, -d.dx}, d, {-d.dy, d.dx}};
    detail::Dir next = d;
    bool found = false;
    for (const auto& c : candidates) {
      if (valid(v, c)) {
        next = c;
        found = true;
        break;
      }
    }
    require(found, ErrorCode::runtime, "contour tracing lost the boundary");
    if (!(next == d)) ring.push_back(v);
    d = next;
  }
  fail(ErrorCode::runtime, "contour tracing did not close");
}

inline Ring trace_contour(const LabelMask& mask, int id) { return trace_contour(connected_components(mask), id); }

/// Shoelace signed area (negative for rings produced by trace_contour).
inline double signed_area(const Ring& ring) {
  double twice = 0.0;
  for (std::size_t i = 0; i < ring.size(); ++i) {
    const Point& a = ring[i];
    const Point& b = ring[(i + 1) % ring.size()];
    twice += static_cast<double>(a.x) * b.y - static_cast<double>(b.x) * a.y;
  }
  return 0.5 * twice;
}

// ---------------------------------------------------------------------------
// Ramer-Douglas-Peucker

inline double point_segment_distance(Point p, Point a, Point b) {
  const double vx = b.x - a.x;
  const double vy = b.y - a.y;
  const double wx = p.x - a.x;
  const double wy = p.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 == 0.0 ? 0.0 : (wx * vx + wy * vy) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(wx - t * vx, wy - t * vy);
}

/// Classic RDP on the open chain `pts`: marks the vertices to keep. A vertex
/// survives iff some recursion step finds it strictly farther than epsilon
/// from the current chord segment.
inline std::vector<bool> rdp_chain(std::span<const Point> pts, double epsilon) {
  std::vector<bool> keep(pts.size(), false);
  if (pts.empty()) return keep;
  keep.front() = keep.back() = true;
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, pts.size() - 1}};
  while (!stack.empty()) {
    const auto [first, last] = stack.back();
    stack.pop_back();
    if (last <= first + 1) continue;
    double dmax = -1.0;
    std::size_t arg = first;
    for (std::size_t i = first + 1; i < last; ++i) {
      const double d = point_segment_distance(pts[i], pts[first], pts[last]);
      if (d > dmax) {
        dmax = d;
        arg = i;
      }
    }
    if (dmax > epsilon) {
      keep[arg] = true;
      stack.emplace_back(first, arg);
      stack.emplace_back(arg, last);
    }
  }
  return keep;
}

/// Closed-ring RDP: split at the two mutually farthest vertices, simplify both
/// open chains, rejoin in the original vertex order. A result with fewer than
/// three vertices gets back the vertex farthest from the split chord.
inline Ring rdp_simplify(const Ring& ring, double epsilon) {
  require(epsilon >= 0.0, ErrorCode::invalid_argument, "tolerance must be non-negative");
  const std::size_t n = ring.size();
  if (n <= 3) return ring;
  std::size_t bi = 0, bj = 1;
  std::int64_t best = -1;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const std::int64_t dx = ring[i].x - ring[j].x;
      const std::int64_t dy = ring[i].y - ring[j].y;
      const std::int64_t d2 = dx * dx + dy * dy;
      if (d2 > best) {
        best = d2;
        bi = i;
        bj = j;
      }
    }
  }
  std::vector<bool> keep(n, false);
  {
    const std::vector<Point> chain(ring.begin() + static_cast<std::ptrdiff_t>(bi),
                                   ring.begin() + static_cast<std::ptrdiff_t>(bj) + 1);
    const auto k = rdp_chain(chain, epsilon);
    for (std::size_t t = 0; t < k.size(); ++t) keep[bi + t] = keep[bi + t] || k[t];
  }
  {
    std::vector<Point> chain;
    std::vector<std::size_t> where;
    for (std::size_t t = bj; t != bi; t = (t + 1) % n) {
      chain.push_back(ring[t]);
      where.push_back(t);
    }
    chain.push_back(ring[bi]);
    where.push_back(bi);
    const auto k = rdp_chain(chain, epsilon);
    for (std::size_t t = 0; t < k.size(); ++t) keep[where[t]] = keep[where[t]] || k[t];
  }
  Ring out;
  for (std::size_t i = 0; i < n; ++i) {
    if (keep[i]) out.push_back(ring[i]);
  }
  if (out.size() < 3) {
    double dmax = -1.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == bi || i == bj) continue;
      const double d = point_segment_distance(ring[i], ring[bi], ring[bj]);
      if (d > dmax) {
        dmax = d;
        arg = i;
      }
    }
    keep[arg] = true;
    out.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (keep[i]) out.push_back(ring[i]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Polygonization and rasterization

/// Components -> outer rings -> RDP. Polygons come out in overwrite order:
/// larger enclosed area first (an enclosing component always precedes the
/// components inside its holes), ties by component order.
inline PolygonSet polygonize(const Components& comps, double epsilon) {
  struct Item {
    double area;
    Polygon polygon;
  };
  std::vector<Item> items;
  items.reserve(comps.size());
  for (std::size_t id = 0; id < comps.size(); ++id) {
    const Ring exact = trace_contour(comps, static_cast<int>(id));
    items.push_back({std::abs(signed_area(exact)),
                     Polygon{comps[id].class_id, rdp_simplify(exact, epsilon), static_cast<int>(id)}});
  }
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.area > b.area; });
  PolygonSet out;
  out.tolerance = epsilon;
  for (auto& it : items) out.polygons.push_back(std::move(it.polygon));
  out.recount();
  return out;
}

inline PolygonSet polygonize(const LabelMask& mask, double epsilon) {
  return polygonize(connected_components(mask), epsilon);
}

/// Even-odd scanline fill sampled at pixel centres; later polygons overwrite
/// earlier ones, unfilled pixels take `background`.
inline LabelMask rasterize(const PolygonSet& set, int width, int height, ClassId background,
                           std::optional<ClassId> void_id = std::nullopt) {
  LabelMask out(width, height, background, void_id);
  std::vector<double> xs;
  for (const auto& poly : set.polygons) {
    const auto& ring = poly.ring;
    require(ring.size() >= 3, ErrorCode::invalid_argument, "degenerate ring with fewer than 3 vertices");
    int ymin = std::numeric_limits<int>::max();
    int ymax = std::numeric_limits<int>::min();
    for (const auto& p : ring) {
      require(p.x >= 0 && p.y >= 0 && p.x <= width && p.y <= height, ErrorCode::invalid_argument,
              "polygon vertex outside the raster");
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
    for (int row = ymin; row < ymax; ++row) {
      const double yc = row + 0.5;
      xs.clear();
      for (std::size_t i = 0; i < ring.size(); ++i) {
        const Point a = ring[i];
        const Point b = ring[(i + 1) % ring.size()];
        if ((a.y <= row) == (b.y <= row)) continue;
        xs.push_back(a.x + (yc - a.y) * static_cast<double>(b.x - a.x) / static_cast<double>(b.y - a.y));
      }
      std::sort(xs.begin(), xs.end());
      for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
        const int c0 = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
        const int c1 = std::min(width, static_cast<int>(std::ceil(xs[k + 1] - 0.5)));
        for (int c = c0; c < c1; ++c) out.set(row, c, poly.class_id);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// mIoU

/// Ground truth x prediction counts over 8-bit class ids.
class ConfusionMatrix {
 public:
  static constexpr int kBins = 256;

  ConfusionMatrix() : counts_(static_cast<std::size_t>(kBins) * kBins, 0) {}

  /// Pixels that are void in either mask are skipped.
  void add(const LabelMask& pred, const LabelMask& gt) {
    require(pred.width == gt.width && pred.height == gt.height, ErrorCode::invalid_argument,
            "mask size mismatch");
    const auto void_id = gt.void_id ? gt.void_id : pred.void_id;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const int g = gt.pixels[i];
      const int p = pred.pixels[i];
      if (void_id && (g == *void_id || p == *void_id)) continue;
      ++counts_[static_cast<std::size_t>(g) * kBins + p];
    }
  }

  std::int64_t count(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt) * kBins + pred]; }

  /// Intersection over union for class c, nullopt when c is absent from gt.
  std::optional<double> iou(int c) const {
    std::int64_t gt_total = 0, pred_total = 0;
    for (int k = 0; k < kBins; ++k) {
      gt_total += count(c, k);
      pred_total += count(k, c);
    }
    if (gt_total == 0) return std::nullopt;
    const std::int64_t tp = count(c, c);
    return static_cast<double>(tp) / static_cast<double>(gt_total + pred_total - tp);
  }

  /// Mean IoU over classes present in the ground truth; 1 when none is.
  double miou() const {
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < kBins; ++c) {
      if (auto v = iou(c)) {
        sum += *v;
        ++present;
      }
    }
    return present == 0 ? 1.0 : sum / present;
  }

 private:
  std::vector<std::int64_t> counts_;
};

inline double miou(const LabelMask& pred, const LabelMask& gt) {
  ConfusionMatrix cm;
  cm.add(pred, gt);
  return cm.miou();
}

// ---------------------------------------------------------------------------
// Tolerance sweep

struct SweepEntry {
  double tolerance = 0.0;
  double mean_clicks = 0.0;
  double miou = 0.0;
};

struct ToleranceSweep {
  std::vector<SweepEntry> entries;
};

/// Corpus-wide (global confusion) mIoU of rasterized polygon labels against
/// the originals, and mean clicks per image, at each tolerance.
inline ToleranceSweep tolerance_sweep(std::span<const LabelMask> masks, std::span<const double> tolerances,
                                      ClassId background = 0) {
  require(!tolerances.empty(), ErrorCode::invalid_argument, "at least one tolerance is required");
  for (std::size_t i = 1; i < tolerances.size(); ++i) {
    require(tolerances[i] > tolerances[i - 1], ErrorCode::invalid_argument, "tolerances must strictly increase");
  }
  std::vector<ConfusionMatrix> cms(tolerances.size());
  std::vector<double> clicks(tolerances.size(), 0.0);
  for (const auto& mask : masks) {
    const auto comps = connected_components(mask);
    for (std::size_t t = 0; t < tolerances.size(); ++t) {
      const auto set = polygonize(comps, tolerances[t]);
      clicks[t] += static_cast<double>(set.clicks);
      cms[t].add(rasterize(set, mask.width, mask.height, background, mask.void_id), mask);
    }
  }
  ToleranceSweep out;
  const double n = masks.empty() ? 1.0 : static_cast<double>(masks.size());
  for (std::size_t t = 0; t < tolerances.size(); ++t) {
    out.entries.push_back({tolerances[t], clicks[t] / n, cms[t].miou()});
  }
  return out;
}

inline void write_sweep_csv(const ToleranceSweep& sweep, std::ostream& os) {
  os << "tolerance,mean_clicks,miou\n";
  for (const auto& e : sweep.entries) os << e.tolerance << ',' << e.mean_clicks << ',' << e.miou << '\n';
}

// ---------------------------------------------------------------------------
// Click pricing and polygon selection

enum class Regime { image, polygon };

inline std::int64_t price_acquisition(const LabelMask& mask, Regime regime, std::optional<int> component,
                                      double epsilon = kDefaultTolerance) {
  const auto set = polygonize(mask, epsilon);
  if (regime == Regime::image) return set.clicks;
  require(component.has_value(), ErrorCode::invalid_argument, "polygon regime needs a component");
  for (const auto& p : set.polygons) {
    if (p.component == *component) return static_cast<std::int64_t>(p.ring.size());
  }
  fail(ErrorCode::invalid_argument, "region " + std::to_string(*component) + " is not a component of the mask");
}

/// Unlabeled component with the most pixels of entropy strictly above tau;
/// ties go to the earlier component.
inline int select_polygon(const Raster& entropy_map, const Components& comps, const std::set<int>& labeled,
                          double tau) {
  require(entropy_map.width == comps.width && entropy_map.height == comps.height, ErrorCode::invalid_argument,
          "entropy map does not match the mask");
  int best = -1;
  std::int64_t best_score = -1;
  for (std::size_t id = 0; id < comps.size(); ++id) {
    if (labeled.contains(static_cast<int>(id))) continue;
    std::int64_t score = 0;
    for (auto p : comps[id].pixels) score += entropy_map.values[p] > tau ? 1 : 0;
    if (score > best_score) {
      best_score = score;
      best = static_cast<int>(id);
    }
  }
  require(best >= 0, ErrorCode::invalid_argument, "image has no unlabeled components");
  return best;
}

/// Per-image annotation cache for one tolerance: what the simulated
/// annotator would draw, its price, and the resulting label rasters.
class AnnotationOracle {
 public:
  static constexpr ClassId kIgnore = 255;

  AnnotationOracle(std::span<const LabelMask> masks, double epsilon, ClassId background = 0)
      : epsilon_(epsilon) {
    for (const auto& m : masks) {
      auto comps = connected_components(m);
      auto set = polygonize(comps, epsilon);
      approx_.push_back(rasterize(set, m.width, m.height, background, m.void_id));
      comps_.push_back(std::move(comps));
      sets_.push_back(std::move(set));
    }
  }

  double tolerance() const { return epsilon_; }
  std::size_t size() const { return sets_.size(); }
  const PolygonSet& polygons(Index i) const { return sets_.at(i); }
  const Components& components(Index i) const { return comps_.at(i); }
  const LabelMask& approximated(Index i) const { return approx_.at(i); }
  std::int64_t image_cost(Index i) const { return sets_.at(i).clicks; }

  const Polygon& polygon_for(Index i, int component) const {
    for (const auto& p : sets_.at(i).polygons) {
      if (p.component == component) return p;
    }
    fail(ErrorCode::invalid_argument, "region " + std::to_string(component) + " is not a component of image " +
                                          std::to_string(i));
  }

  std::int64_t polygon_cost(Index i, int component) const {
    return static_cast<std::int64_t>(polygon_for(i, component).ring.size());
  }

  /// Labels from a subset of polygons; everything else is kIgnore. Polygons
  /// keep the full set's overwrite order.
  LabelMask partial_labels(Index i, const std::set<int>& components) const {
    PolygonSet subset;
    for (const auto& p : sets_.at(i).polygons) {
      if (components.contains(p.component)) subset.polygons.push_back(p);
    }
    const auto& m = approx_.at(i);
    return rasterize(subset, m.width, m.height, kIgnore, kIgnore);
  }

 private:
  double epsilon_;
  std::vector<Components> comps_;
  std::vector<PolygonSet> sets_;
  std::vector<LabelMask> approx_;
};

}  // namespace albench

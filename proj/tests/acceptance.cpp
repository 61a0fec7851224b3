// Acceptance suite: one PASS/FAIL/SKIP line per criterion; exit status is
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "albench/factory.hpp"
#include "albench/learners/network.hpp"
#include "test_support.hpp"

namespace albench::acceptance {
namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
  Verdict verdict = Verdict::pass;
  std::string detail;
};

/// Collects failure messages; the first few end up in the report line.
class Tally {
 public:
  void check(bool ok, const std::string& what) {
    ++checks_;
    if (!ok) failures_.push_back(what);
  }
  bool ok() const { return failures_.empty(); }
  std::size_t checks() const { return checks_; }

  Outcome outcome(const std::string& detail) const {
    if (ok()) return {Verdict::pass, detail};
    std::string msg = std::to_string(failures_.size()) + " violation(s); first: " + failures_.front();
    return {Verdict::fail, msg + "; " + detail};
  }

 private:
  std::size_t checks_ = 0;
  std::vector<std::string> failures_;
};

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string scientific(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Scoring formulas

Outcome formula_exactness() {
  namespace mp = boost::multiprecision;
  Tally t;
  Rng rng(101);

  for (int n = 0; n < 1000; ++n) {
    const int members = 2 + static_cast<int>(rng.below(9));
    const int classes = 1 + static_cast<int>(rng.below(6));
    std::vector<int> votes(static_cast<std::size_t>(members));
    for (auto& v : votes) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    // Modal frequency as the longest run of the sorted votes.
    auto sorted = votes;
    std::sort(sorted.begin(), sorted.end());
    int modal = 0;
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
      modal = std::max(modal, static_cast<int>(j - i));
      i = j;
    }
    const double expected = 1.0 - static_cast<double>(modal) / static_cast<double>(members);
    t.check(variation_ratio(votes) == expected, "variation ratio of vote vector " + std::to_string(n));
  }

  double worst = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const int k = 2 + static_cast<int>(rng.below(15));
    std::vector<double> p(static_cast<std::size_t>(k));
    double sum = 0.0;
    for (auto& v : p) {
      // Roughly one entry in five is an exact zero.
      v = rng.below(5) == 0 ? 0.0 : std::pow(rng.uniform(), 3.0);
      sum += v;
    }
    if (sum == 0.0) p[0] = sum = 1.0;
    for (auto& v : p) v /= sum;
    mp::cpp_bin_float_50 h = 0;
    for (double v : p) {
      if (v > 0.0) {
        const mp::cpp_bin_float_50 x(v);
        h -= x * mp::log(x);
      }
    }
    const double err = std::abs(shannon_entropy(std::span<const double>(p)) - h.convert_to<double>());
    worst = std::max(worst, err);
    t.check(err <= 1e-12, "entropy error " + scientific(err) + " on vector " + std::to_string(n));
  }

  // Margin 1; true losses ordered l_i > l_j.
  t.check(ranking_hinge(2, 1, 3, 0, 1) == 0.0, "hinge, prediction ordered beyond the margin");
  t.check(ranking_hinge(2, 1, 0, 0, 1) == 1.0, "hinge, equal predictions");
  t.check(ranking_hinge(2, 1, 0, 3, 1) == 4.0, "hinge, predictions reversed");

  return t.outcome("1000 vote vectors exact, entropy max error " + scientific(worst) + " vs 50-digit oracle, 3 hinge cases");
}

// ---------------------------------------------------------------------------
// Core-set

double coverage_radius(const Eigen::MatrixXd& pool, const Eigen::MatrixXd& centers) {
  double r = 0.0;
  for (Eigen::Index i = 0; i < pool.rows(); ++i) {
    r = std::max(r, std::sqrt((centers.rowwise() - pool.row(i)).rowwise().squaredNorm().minCoeff()));
  }
  return r;
}

Outcome coreset_bound() {
  Tally t;
  Rng rng(202);
  double worst_ratio = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    const int n = 2 + static_cast<int>(rng.below(11));
    const int dim = 1 + static_cast<int>(rng.below(3));
    const int seeds = 1 + static_cast<int>(rng.below(3));
    const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min(3, n))));
    Eigen::MatrixXd pool(n, dim), labeled(seeds, dim);
    for (Eigen::Index i = 0; i < pool.size(); ++i) pool.data()[i] = rng.uniform(-10, 10);
    for (Eigen::Index i = 0; i < labeled.size(); ++i) labeled.data()[i] = rng.uniform(-10, 10);

    PredictionBundle b;
    b.features = pool;
    for (int i = 0; i < n; ++i) b.indices.push_back(static_cast<Index>(i));
    const auto picks = select_coreset_greedy(b, labeled, static_cast<std::size_t>(k)).indices();

    auto centers_with = [&](const std::vector<Index>& chosen) {
      Eigen::MatrixXd c(seeds + static_cast<Eigen::Index>(chosen.size()), dim);
      c.topRows(seeds) = labeled;
      for (std::size_t i = 0; i < chosen.size(); ++i) c.row(seeds + static_cast<Eigen::Index>(i)) = pool.row(static_cast<Eigen::Index>(chosen[i]));
      return c;
    };
    const double greedy = coverage_radius(pool, centers_with(picks));

    double best = std::numeric_limits<double>::infinity();
    std::vector<Index> chosen;
    std::function<void(Index)> enumerate = [&](Index start) {
      if (chosen.size() == static_cast<std::size_t>(k)) {
        best = std::min(best, coverage_radius(pool, centers_with(chosen)));
        return;
      }
      for (Index i = start; i < static_cast<Index>(n); ++i) {
        chosen.push_back(i);
        enumerate(i + 1);
        chosen.pop_back();
      }
    };
    enumerate(0);
    if (best > 0.0) worst_ratio = std::max(worst_ratio, greedy / best);
    t.check(greedy <= 2.0 * best + 1e-12, "instance " + std::to_string(inst) + ": greedy " + fixed(greedy) +
                                              " > 2 x optimum " + fixed(best));
  }
  return t.outcome("200 instances vs exhaustive optimum, worst greedy/optimal radius " + fixed(worst_ratio, 3));
}

// ---------------------------------------------------------------------------
// Polygon geometry

/// Positions in `exact` of the vertices kept in `simplified` (an in-order
/// subsequence).
std::vector<bool> kept_positions(const Ring& exact, const Ring& simplified) {
  std::vector<bool> keep(exact.size(), false);
  std::size_t s = 0;
  for (std::size_t i = 0; i < exact.size() && s < simplified.size(); ++i) {
    if (exact[i] == simplified[s]) {
      keep[i] = true;
      ++s;
    }
  }
  if (s != simplified.size()) return {};
  return keep;
}

Outcome geometry_round_trip() {
  Tally t;
  Rng rng(303);
  const std::vector<double> tolerances{0.0, 2.0, 5.0, 10.0};
  std::size_t audited = 0;
  for (int m = 0; m < 100; ++m) {
    const int w = 16 + static_cast<int>(rng.below(49));
    const int h = 16 + static_cast<int>(rng.below(49));
    const auto mask = testing::random_blob_mask(rng, w, h, 2 + static_cast<int>(rng.below(4)),
                                                1 + static_cast<int>(rng.below(8)));
    const auto comps = connected_components(mask);
    t.check(rasterize(polygonize(comps, 0.0), w, h, 0) == mask, "mask " + std::to_string(m) + " round trip at 0");

    std::int64_t previous = std::numeric_limits<std::int64_t>::max();
    for (double eps : tolerances) {
      const auto set = polygonize(comps, eps);
      t.check(set.clicks <= previous, "mask " + std::to_string(m) + ": clicks grow at tolerance " + fixed(eps, 0));
      previous = set.clicks;
      if (eps == 0.0) continue;
      for (const auto& poly : set.polygons) {
        const Ring exact = trace_contour(comps, poly.component);
        const auto keep = kept_positions(exact, poly.ring);
        t.check(!keep.empty(), "mask " + std::to_string(m) + ": simplified ring is not a subsequence");
        if (keep.empty()) continue;
        const std::size_t n = exact.size();
        for (std::size_t i = 0; i < n; ++i) {
          if (keep[i]) continue;
          std::size_t prev = (i + n - 1) % n, next = (i + 1) % n;
          while (!keep[prev]) prev = (prev + n - 1) % n;
          while (!keep[next]) next = (next + 1) % n;
          const double d = point_segment_distance(exact[i], exact[prev], exact[next]);
          ++audited;
          t.check(d <= eps + 1e-9, "mask " + std::to_string(m) + ": discarded vertex at distance " + fixed(d, 3) +
                                       " > " + fixed(eps, 0));
        }
      }
    }
  }
  return t.outcome("100 blob masks exact at tolerance 0, " + std::to_string(audited) +
                   " discarded vertices audited at 2/5/10, clicks non-increasing");
}

// ---------------------------------------------------------------------------
// Objective gradients

Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

template <class Loss>
Vector central_difference(Network net, Loss loss, double step = 1e-6) {
  Vector g(static_cast<Eigen::Index>(net.parameter_count()));
  auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + step;
    const double up = loss(net);
    params[i] = saved - step;
    const double down = loss(net);
    params[i] = saved;
    g[static_cast<Eigen::Index>(i)] = (up - down) / (2.0 * step);
  }
  return g;
}

/// Every parameter, biases included, drawn at random. Zero biases would put
/// rows behind a fully inactive layer exactly on the ReLU kink.
Network random_network(NetworkSpec spec, Rng& rng) {
  Network net(std::move(spec));
  for (auto& p : net.parameters()) p = 0.8 * rng.normal();
  return net;
}

double relative_error(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(1e-12, a.norm() + b.norm());
}

Outcome gradient_checks() {
  Tally t;
  Rng rng(404);
  constexpr int kInstances = 24;
  double worst[3] = {0.0, 0.0, 0.0};
  for (int inst = 0; inst < kInstances; ++inst) {
    const int dim = 1 + static_cast<int>(rng.below(3));
    const int classes = 2 + static_cast<int>(rng.below(3));
    std::vector<int> hidden;
    for (int l = 0, layers = static_cast<int>(rng.below(3)); l < layers; ++l) hidden.push_back(2 + static_cast<int>(rng.below(3)));
    const int rows = 4 + 2 * static_cast<int>(rng.below(4));
    const Matrix x = random_matrix(rng, rows, dim);
    std::vector<int> y(static_cast<std::size_t>(rows));
    for (auto& v : y) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    const auto tag = "instance " + std::to_string(inst);

    {
      const Network net = random_network({dim, hidden, classes, false}, rng);
      const auto analytic = cross_entropy_objective(net, x, y).grad;
      const auto numeric = central_difference(net, [&](const Network& n) { return cross_entropy_objective(n, x, y).loss; });
      const double e = relative_error(analytic, numeric);
      worst[0] = std::max(worst[0], e);
      t.check(e < 1e-4, "supervised " + tag + " relative error " + scientific(e));
    }
    {
      const Network net = random_network({dim, hidden, classes, false}, rng);
      const auto targets = consistency_targets(random_matrix(rng, rows, classes, 2.0), rng.uniform(0.4, 0.8),
                                               rng.uniform(0.3, 1.0));
      const auto analytic = consistency_objective(net, x, targets).grad;
      const auto numeric =
          central_difference(net, [&](const Network& n) { return consistency_objective(n, x, targets).loss; });
      const double e = relative_error(analytic, numeric);
      worst[1] = std::max(worst[1], e);
      t.check(e < 1e-4, "consistency " + tag + " relative error " + scientific(e));
    }
    {
      const Network net = random_network({dim, hidden, classes, true}, rng);
      const auto pairs = consecutive_pairs(static_cast<std::size_t>(rows));
      const double margin = 0.3;
      const auto analytic = ranking_hinge_objective(net, x, y, pairs, margin).grad;
      const auto numeric = central_difference(
          net, [&](const Network& n) { return ranking_hinge_objective(n, x, y, pairs, margin).loss; });
      const double e = relative_error(analytic, numeric);
      worst[2] = std::max(worst[2], e);
      t.check(e < 1e-4, "hinge " + tag + " relative error " + scientific(e));
    }
  }
  return t.outcome(std::to_string(kInstances) + " instances per objective; worst relative error supervised " +
                   scientific(worst[0]) + ", consistency " + scientific(worst[1]) + ", hinge " + scientific(worst[2]));
}

// ---------------------------------------------------------------------------
// Budget safety and determinism

std::string serialize(const std::vector<ExperimentRecord>& records) {
  std::string out;
  for (const auto& r : records) out += Json(r).dump() + "\n";
  return out;
}

/// Price of one acquisition, recomputed from the ground-truth mask.
std::int64_t expected_cost(const ExperimentConfig& cfg, const Split& split, const Acquisition& a) {
  if (cfg.preset.budget.unit == BudgetUnit::samples) return 1;
  const auto& mask = split.train.masks.at(a.index);
  const auto comps = connected_components(mask);
  // Whole images cost every vertex; a component-free image is therefore free.
  if (a.component < 0) return polygonize(comps, cfg.tolerance).clicks;
  return static_cast<std::int64_t>(rdp_simplify(trace_contour(comps, a.component), cfg.tolerance).size());
}

void audit_budget(const ExperimentConfig& cfg, const Split& split, const ExperimentRecord& r, Tally& t,
                  const std::string& tag) {
  t.check(r.ok(), tag + " failed: " + r.failure);
  if (!r.ok()) return;
  const auto& budget = cfg.preset.budget;
  std::map<int, std::int64_t> per_cycle;
  std::set<Index> whole;
  std::set<std::pair<Index, int>> parts;
  for (const auto& a : r.acquisitions) {
    per_cycle[a.cycle] += a.cost;
    t.check(a.cost == expected_cost(cfg, split, a), tag + ": acquisition of " + std::to_string(a.index) + " mispriced");
    t.check(!whole.contains(a.index), tag + ": index " + std::to_string(a.index) + " acquired after completion");
    if (a.component < 0) {
      whole.insert(a.index);
    } else {
      t.check(parts.insert({a.index, a.component}).second,
              tag + ": component " + std::to_string(a.component) + " of " + std::to_string(a.index) + " bought twice");
    }
  }
  t.check(r.points.size() == static_cast<std::size_t>(budget.cycles) + 1, tag + ": wrong number of curve points");
  std::int64_t spent = 0;
  for (const auto& p : r.points) {
    spent += per_cycle[p.cycle];
    t.check(spent <= budget.allowance(p.cycle), tag + ": cycle " + std::to_string(p.cycle) + " spends " +
                                                    std::to_string(spent) + " of " +
                                                    std::to_string(budget.allowance(p.cycle)));
    t.check(p.spent == spent, tag + ": recorded spend disagrees with acquisitions");
  }
}

Json random_experiment(Rng& rng, int n) {
  const auto pick = [&](std::uint64_t k) { return rng.below(k); };
  Json j;
  j["seed"] = rng.next() % 1000000;
  j["trials"] = 1;
  const bool segmentation = n % 5 == 4;
  if (!segmentation) {
    const bool moons = pick(2) == 0;
    const int classes = moons ? 2 : 2 + static_cast<int>(pick(3));
    if (moons) {
      j["dataset"] = {{"kind", "two_moons"}, {"train_size", 60 + pick(100)}, {"test_size", 40}, {"noise", 0.15}};
    } else {
      j["dataset"] = {{"kind", "blobs"},       {"train_size", 60 + pick(100)}, {"test_size", 40},
                      {"num_classes", classes}, {"dim", 2 + pick(3)},          {"spread", 1.5}};
    }
    j["dataset"]["seed"] = pick(1000);
    j["preset"] = {{"base", "cifar10-low"},
                   {"initial", classes + static_cast<int>(pick(10))},
                   {"per_cycle", 1 + pick(12)},
                   {"cycles", 1 + pick(4)}};
    if (pick(3) == 0) j["preset"]["mode"] = "ssl";
    const std::vector<std::string> all{"entropy", "coreset", "ens_varr", "learn_loss"};
    Json roster = Json::array({"random"});
    for (const auto& s : all) {
      if (pick(2) == 0) roster.push_back(s);
    }
    j["roster"] = roster;
    j["learner"] = {{"kind", pick(2) == 0 ? "logistic" : "mlp"}, {"hidden", {8}}, {"steps", 20}, {"batch_labeled", 16},
                    {"batch_unlabeled", 32}};
  } else {
    const bool polygon = pick(2) == 0;
    j["dataset"] = {{"kind", "seg_blobs"}, {"train_size", 12 + pick(8)}, {"test_size", 4}, {"num_classes", 3},
                    {"width", 12},         {"height", 12},               {"seed", pick(1000)}};
    j["preset"] = {{"base", polygon ? "seg-clicks-polygon" : "seg-clicks"},
                   {"initial", 20 + pick(40)},
                   {"per_cycle", 5 + pick(60)},
                   {"cycles", 1 + pick(3)}};
    j["roster"] = polygon ? Json::array({"random", "seg_entropy"}) : Json::array({"random", "seg_entropy", "learn_loss"});
    j["annotation"] = {{"tolerance", static_cast<double>(pick(3))}};
    j["learner"] = {{"kind", "logistic"}, {"steps", 10}, {"batch_labeled", 64}};
  }
  return j;
}

Outcome budget_safety() {
  Tally t;
  Rng rng(505);
  std::size_t trials = 0;
  for (int n = 0; n < 50; ++n) {
    const Json j = random_experiment(rng, n);
    const auto tag = "experiment " + std::to_string(n);
    try {
      const auto cfg = parse_experiment_config(j);
      const auto split = load_split(cfg.dataset);
      const auto first = run_experiment(cfg, split, make_learner_factory(cfg));
      for (const auto& r : first) audit_budget(cfg, split, r, t, tag + " " + r.strategy);
      trials += first.size();
      // Replay from scratch: config re-parsed, data regenerated.
      const auto cfg2 = parse_experiment_config(j);
      const auto split2 = load_split(cfg2.dataset);
      const auto second = run_experiment(cfg2, split2, make_learner_factory(cfg2));
      t.check(serialize(first) == serialize(second), tag + ": replay differs");
    } catch (const std::exception& e) {
      t.check(false, tag + " threw: " + e.what());
    }
  }
  return t.outcome("50 experiments, " + std::to_string(trials) + " strategy trials, each replayed byte-identically");
}

// ---------------------------------------------------------------------------
// Two-moons protocol reproduction

/// Log class-conditional density of the two-moons generator (up to a shared
/// constant): noise-convolved uniform arc, integrated by the midpoint rule.
double moon_log_density(double x, double y, int cls, double noise, int steps) {
  std::vector<double> terms(static_cast<std::size_t>(steps));
  for (int s = 0; s < steps; ++s) {
    const double a = std::numbers::pi * (s + 0.5) / steps;
    const double cx = cls == 0 ? std::cos(a) : 1.0 - std::cos(a);
    const double cy = cls == 0 ? std::sin(a) : 0.5 - std::sin(a);
    terms[static_cast<std::size_t>(s)] = -((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2.0 * noise * noise);
  }
  const double top = *std::max_element(terms.begin(), terms.end());
  double sum = 0.0;
  for (double v : terms) sum += std::exp(v - top);
  return top + std::log(sum);
}

/// Points on the Bayes boundary (equal class densities): sign changes of the
/// log-odds on a grid, located by linear interpolation along grid edges.
std::vector<std::array<double, 2>> bayes_boundary(double noise) {
  constexpr double kStep = 0.01, kX0 = -1.75, kY0 = -1.25;
  constexpr int kNx = 451, kNy = 301;
  std::vector<double> odds(static_cast<std::size_t>(kNx * kNy));
  for (int a = 0; a < kNx; ++a) {
    for (int b = 0; b < kNy; ++b) {
      const double x = kX0 + a * kStep, y = kY0 + b * kStep;
      odds[static_cast<std::size_t>(a * kNy + b)] =
          moon_log_density(x, y, 0, noise, 400) - moon_log_density(x, y, 1, noise, 400);
    }
  }
  std::vector<std::array<double, 2>> out;
  for (int a = 0; a < kNx; ++a) {
    for (int b = 0; b < kNy; ++b) {
      const double v = odds[static_cast<std::size_t>(a * kNy + b)];
      for (auto [da, db] : {std::pair{1, 0}, std::pair{0, 1}}) {
        if (a + da >= kNx || b + db >= kNy) continue;
        const double w = odds[static_cast<std::size_t>((a + da) * kNy + b + db)];
        if ((v < 0.0) == (w < 0.0)) continue;
        const double t = v / (v - w);
        out.push_back({kX0 + (a + t * da) * kStep, kY0 + (b + t * db) * kStep});
      }
    }
  }
  return out;
}

/// The 20% of pool indices with the smallest Euclidean distance to the Bayes
/// boundary.
std::set<Index> near_boundary(const Dataset& pool, double noise) {
  const auto boundary = bayes_boundary(noise);
  std::vector<std::pair<double, Index>> dist;
  for (Index i = 0; i < pool.size(); ++i) {
    const auto& f = pool.features[i];
    double d = std::numeric_limits<double>::infinity();
    for (const auto& p : boundary) d = std::min(d, std::hypot(f[0] - p[0], f[1] - p[1]));
    dist.push_back({d, i});
  }
  std::sort(dist.begin(), dist.end());
  std::set<Index> out;
  for (std::size_t r = 0; r < pool.size() / 5; ++r) out.insert(dist[r].second);
  return out;
}

/// Share of the acquisitions of `strategy` in `region`, per query cycle
/// (key 0 holds the total over all query cycles).
std::map<int, double> share_in(const std::vector<ExperimentRecord>& records, const std::string& strategy,
                               const std::set<Index>& region) {
  std::map<int, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& r : records) {
    if (r.strategy != strategy) continue;
    for (const auto& a : r.acquisitions) {
      if (a.cycle == 0) continue;
      const std::size_t hit = region.contains(a.index) ? 1 : 0;
      for (int key : {0, a.cycle}) {
        counts[key].first += hit;
        ++counts[key].second;
      }
    }
  }
  std::map<int, double> out;
  for (const auto& [c, n] : counts) out[c] = static_cast<double>(n.first) / static_cast<double>(n.second);
  return out;
}

Outcome two_moons_protocol() {
  constexpr double kNoise = 0.1;
  Json base = {
      {"preset", {{"base", "cifar10-low"}, {"initial", 10}, {"per_cycle", 10}, {"cycles", 5}}},
      {"dataset", {{"kind", "two_moons"}, {"train_size", 1000}, {"test_size", 500}, {"noise", kNoise}, {"seed", 5}}},
      {"learner", {{"kind", "mlp"}, {"hidden", {32, 32}}, {"steps", 300}, {"batch_labeled", 16}, {"batch_unlabeled", 128}}},
      {"trials", 10},
      {"seed", 7},
  };
  Json supervised = base;
  supervised["roster"] = {"random", "entropy"};
  Json ssl = base;
  ssl["roster"] = {"random"};
  ssl["ssl"] = {{"enabled", true}, {"confidence_mask", 0.6}, {"temperature", 0.5}, {"perturbation", "gaussian_noise"},
                {"sigma", 0.15}};

  const auto sup_cfg = parse_experiment_config(supervised);
  const auto ssl_cfg = parse_experiment_config(ssl);
  const auto split = load_split(sup_cfg.dataset);
  const auto sup_records = run_experiment(sup_cfg, split, make_learner_factory(sup_cfg));
  const auto ssl_records = run_experiment(ssl_cfg, split, make_learner_factory(ssl_cfg));

  Tally t;
  for (const auto* set : {&sup_records, &ssl_records}) {
    for (const auto& r : *set) t.check(r.ok(), r.strategy + " trial " + std::to_string(r.trial) + " failed: " + r.failure);
  }
  if (!t.ok()) return t.outcome("two-moons runs incomplete");

  const auto sup = summarize(sup_records);
  const auto semi = summarize(ssl_records);
  const double sup_random = sup.find("random")->curve.back().mean_value;
  const double sup_entropy = sup.find("entropy")->curve.back().mean_value;
  const double ssl_random = semi.find("random")->curve.back().mean_value;
  t.check(ssl_random > sup_random, "SSL-random " + fixed(ssl_random) + " does not beat supervised-random " + fixed(sup_random));

  const auto region = near_boundary(split.train, kNoise);
  const auto entropy_shares = share_in(sup_records, "entropy", region);
  const auto random_shares = share_in(sup_records, "random", region);
  const double entropy_share = entropy_shares.at(0);
  const double random_share = random_shares.at(0);
  t.check(entropy_share >= 0.6, "entropy places " + fixed(entropy_share, 3) + " of picks near the boundary");
  std::string by_cycle;
  for (const auto& [c, v] : entropy_shares) {
    if (c > 0) by_cycle += (by_cycle.empty() ? "" : "/") + fixed(v, 2);
  }

  return t.outcome("final accuracy: supervised-random " + fixed(sup_random) + ", SSL-random " + fixed(ssl_random) +
                   " (SSL delta " + fixed(ssl_random - sup_random) + "), entropy " + fixed(sup_entropy) +
                   " (delta vs random " + fixed(sup_entropy - sup_random) + "); picks in nearest-20% band: entropy " +
                   fixed(entropy_share, 3) + " (by cycle " + by_cycle + "), random " + fixed(random_share, 3));
}

// ---------------------------------------------------------------------------
// Tolerance sweep on a real segmentation corpus

Outcome voc_tolerance_sweep() {
  const char* root = std::getenv("ALBENCH_VOC_DIR");
  if (root == nullptr || *root == '\0') return {Verdict::skip, "ALBENCH_VOC_DIR not set"};
  namespace fs = std::filesystem;
  fs::path dir = root;
  for (const char* sub : {"SegmentationClass", "VOC2012/SegmentationClass", "VOCdevkit/VOC2012/SegmentationClass"}) {
    if (fs::is_directory(dir / sub)) {
      dir /= sub;
      break;
    }
  }
  const auto masks = read_mask_dir(dir, ClassId{255});
  if (masks.empty()) return {Verdict::fail, "no masks under " + dir.string()};
  const std::vector<double> tolerance{10.0};
  const auto e = tolerance_sweep(masks, tolerance).entries.front();
  Tally t;
  t.check(std::abs(e.miou - 0.9506) <= 0.01, "mIoU " + fixed(e.miou) + " outside 0.9506 +- 0.01");
  t.check(std::abs(e.mean_clicks - 33.0) <= 3.0, "mean clicks " + fixed(e.mean_clicks, 2) + " outside 33 +- 3");
  return t.outcome(std::to_string(masks.size()) + " masks at tolerance 10: mIoU " + fixed(e.miou) + ", mean clicks " +
                   fixed(e.mean_clicks, 2));
}

// ---------------------------------------------------------------------------
// Preset arithmetic

/// Instant learner: uniform probabilities and constant auxiliary outputs, so
/// full-size presets run in seconds.
class ConstantLearner final : public Learner {
 public:
  explicit ConstantLearner(const Split& s) : split_(s) {}
  std::string name() const override { return "constant"; }
  FieldSet fields() const override {
    return {BundleField::probs, BundleField::features, BundleField::ensemble_votes, BundleField::pred_loss};
  }
  void train(const TrainRequest& req) override { members_ = std::max(2, req.ensemble_size); }
  PredictionBundle predict(std::span<const Index> idx, const FieldSet& f, SplitKind split) override {
    const auto rows = static_cast<Eigen::Index>(idx.size());
    const int k = split_.train.num_classes;
    const auto& d = split == SplitKind::train ? split_.train : split_.test;
    PredictionBundle b;
    b.indices.assign(idx.begin(), idx.end());
    if (f.contains(BundleField::probs)) b.probs = Eigen::MatrixXd::Constant(rows, k, 1.0 / k);
    if (f.contains(BundleField::features)) {
      b.features = Eigen::MatrixXd(rows, 2);
      for (Eigen::Index r = 0; r < rows; ++r) {
        (*b.features)(r, 0) = d.features[idx[r]][0];
        (*b.features)(r, 1) = d.features[idx[r]][1];
      }
    }
    if (f.contains(BundleField::ensemble_votes)) b.ensemble_votes = Eigen::MatrixXi::Zero(rows, members_);
    if (f.contains(BundleField::pred_loss)) b.pred_loss = Eigen::VectorXd::Zero(rows);
    return b;
  }
  std::vector<LabelMask> predict_masks(std::span<const Index>, SplitKind) override { return {}; }

 private:
  const Split& split_;
  int members_ = 2;
};

Outcome preset_arithmetic() {
  Tally t;
  std::string sizes;
  for (const auto& [name, pool, classes] :
       {std::tuple{"cifar-large", 20500, 10}, std::tuple{"cifar10-low", 2500, 10}, std::tuple{"cifar100-low", 4500, 100}}) {
    const auto cfg = parse_experiment_config(Json{
        {"preset", name},
        {"dataset", {{"kind", "blobs"}, {"train_size", pool}, {"test_size", 10}, {"num_classes", classes}, {"seed", 1}}},
        {"seed", 3}});
    const auto split = load_split(cfg.dataset);
    const auto records = run_experiment(cfg, split, [](const Split& s, int) { return std::make_unique<ConstantLearner>(s); });
    std::map<std::string, int> trials;
    for (const auto& r : records) {
      t.check(r.ok(), std::string(name) + " " + r.strategy + " failed: " + r.failure);
      ++trials[r.strategy];
    }
    for (const auto& spec : cfg.roster) {
      const int expected = is_ensemble(spec.kind) ? 2 : 3;
      t.check(trials[spec.name()] == expected, std::string(name) + " runs " + spec.name() + " for " +
                                                   std::to_string(trials[spec.name()]) + " trials");
    }
    std::vector<std::size_t> labeled;
    for (const auto& p : records.front().points) labeled.push_back(p.labeled);
    for (const auto& r : records) {
      std::vector<std::size_t> other;
      for (const auto& p : r.points) other.push_back(p.labeled);
      t.check(other == labeled, std::string(name) + " " + r.strategy + " labels a different schedule");
    }
    std::string seq;
    for (auto n : labeled) seq += (seq.empty() ? "" : ",") + std::to_string(n);
    sizes += std::string(sizes.empty() ? "" : "; ") + name + " {" + seq + "}";
    if (std::string(name) == "cifar-large") {
      t.check(labeled == std::vector<std::size_t>{5000, 7500, 10000, 12500, 15000, 17500, 20000},
              "cifar-large schedule " + seq);
    } else {
      t.check(labeled.back() == (std::string(name) == "cifar10-low" ? 2000u : 4000u), std::string(name) + " total " + seq);
    }
  }
  return t.outcome(sizes + "; ensembles 2 trials, others 3");
}

// ---------------------------------------------------------------------------

struct Criterion {
  const char* id;
  double seconds_limit;  // 0: no limit
  Outcome (*run)();
};

int main_impl() {
  set_log_sink([](LogLevel level, const std::string& msg) {
    if (level == LogLevel::warning) std::cerr << "[albench warning] " << msg << '\n';
  });
  const std::vector<Criterion> criteria{
      {"formula-exactness", 1.0, formula_exactness},
      {"coreset-two-approximation", 30.0, coreset_bound},
      {"geometry-round-trip", 30.0, geometry_round_trip},
      {"gradient-checks", 0.0, gradient_checks},
      {"budget-safety-determinism", 0.0, budget_safety},
      {"two-moons-protocol", 300.0, two_moons_protocol},
      {"voc-tolerance-sweep", 0.0, voc_tolerance_sweep},
      {"preset-arithmetic", 0.0, preset_arithmetic},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Verdict::fail, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.verdict == Verdict::pass && c.seconds_limit > 0.0 && secs >= c.seconds_limit) {
      o = {Verdict::fail, "runtime " + fixed(secs, 2) + " s exceeds " + fixed(c.seconds_limit, 0) + " s; " + o.detail};
    }
    const char* label = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::fail ? "FAIL" : "SKIP";
    std::cout << label << "  " << c.id << "  (" << fixed(secs, 2) << " s)  " << o.detail << std::endl;
    failed += o.verdict == Verdict::fail ? 1 : 0;
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace
}  // namespace albench::acceptance

int main() { return albench::acceptance::main_impl(); }

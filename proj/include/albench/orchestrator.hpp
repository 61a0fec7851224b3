#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "albench/annotation.hpp"
#include "albench/dataset_io.hpp"
#include "albench/learner.hpp"
#include "albench/log.hpp"
#include "albench/strategies.hpp"

namespace albench {

// ---------------------------------------------------------------------------
// Presets

enum class LearnerMode { supervised, ssl };

struct Preset {
  std::string name;
  Task task = Task::classification;
  Budget budget;
  int trials = 3;
  int ensemble_trials = 2;
  LearnerMode mode = LearnerMode::supervised;
  Regime regime = Regime::image;
  std::vector<std::string> roster;

  int trials_for(StrategyKind k) const { return is_ensemble(k) ? ensemble_trials : trials; }
};

inline const std::vector<Preset>& builtin_presets() {
  static const std::vector<Preset> presets = [] {
    const std::vector<std::string> cls{"random", "entropy", "coreset", "ens_varr", "learn_loss"};
    const std::vector<std::string> seg{"random", "seg_entropy", "ens_ent", "learn_loss"};
    return std::vector<Preset>{
        {"cifar-large", Task::classification, {BudgetUnit::samples, 5000, 2500, 6}, 3, 2, LearnerMode::supervised,
         Regime::image, cls},
        {"cifar10-low", Task::classification, {BudgetUnit::samples, 250, 250, 7}, 3, 2, LearnerMode::supervised,
         Regime::image, cls},
        {"cifar100-low", Task::classification, {BudgetUnit::samples, 500, 500, 7}, 3, 2, LearnerMode::supervised,
         Regime::image, cls},
        {"seg-clicks", Task::segmentation, {BudgetUnit::clicks, 5000, 5000, 5}, 3, 2, LearnerMode::supervised,
         Regime::image, seg},
        {"seg-clicks-polygon", Task::segmentation, {BudgetUnit::clicks, 5000, 5000, 5}, 3, 2,
         LearnerMode::supervised, Regime::polygon, {"random", "seg_entropy"}},
    };
  }();
  return presets;
}

inline const Preset& find_preset(const std::string& name) {
  for (const auto& p : builtin_presets()) {
    if (p.name == name) return p;
  }
  fail(ErrorCode::config, "unknown preset '" + name + "'");
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct ExperimentConfig {
  Preset preset;
  Json dataset;
  std::vector<StrategySpec> roster;
  Json learner = Json{{"kind", "mlp"}};
  /// Consistency-term settings handed to the learner when the mode is ssl.
  Json ssl = Json::object();
  double tolerance = kDefaultTolerance;
  ClassId background = 0;
  std::uint64_t seed = 0;
  /// Overrides every per-strategy trial count when set.
  std::optional<int> trials;
  std::filesystem::path output;

  int trials_for(const StrategySpec& s) const { return trials ? *trials : preset.trials_for(s.kind); }
};

inline StrategySpec parse_strategy(const Json& j, double default_threshold) {
  StrategySpec s;
  if (j.is_string()) {
    s.kind = parse_strategy_kind(j.get<std::string>());
  } else {
    require(j.is_object() && j.contains("name"), ErrorCode::config, "roster entries are names or {name, ...}");
    s.kind = parse_strategy_kind(j.at("name").get<std::string>());
    if (j.contains("threshold")) s.params["threshold"] = j.at("threshold").get<double>();
    if (j.contains("ensemble_size")) s.params["ensemble_size"] = j.at("ensemble_size").get<double>();
    s.distance = j.value("distance", s.distance);
  }
  if (!s.params.contains("threshold")) s.params["threshold"] = default_threshold;
  return s;
}

inline Preset parse_preset(const Json& j) {
  if (j.is_string()) return find_preset(j.get<std::string>());
  require(j.is_object(), ErrorCode::config, "preset must be a name or an object");
  Preset p = j.contains("base") ? find_preset(j.at("base").get<std::string>()) : Preset{};
  p.name = j.value("name", p.name.empty() ? std::string("custom") : p.name + "-custom");
  if (j.contains("task")) {
    const auto t = j.at("task").get<std::string>();
    require(t == "classification" || t == "segmentation", ErrorCode::config, "unknown task '" + t + "'");
    p.task = t == "classification" ? Task::classification : Task::segmentation;
  }
  if (j.contains("unit")) {
    const auto u = j.at("unit").get<std::string>();
    require(u == "samples" || u == "clicks", ErrorCode::config, "unknown budget unit '" + u + "'");
    p.budget.unit = u == "samples" ? BudgetUnit::samples : BudgetUnit::clicks;
  }
  p.budget.initial = j.value("initial", p.budget.initial);
  p.budget.per_cycle = j.value("per_cycle", p.budget.per_cycle);
  p.budget.cycles = j.value("cycles", p.budget.cycles);
  p.trials = j.value("trials", p.trials);
  p.ensemble_trials = j.value("ensemble_trials", p.ensemble_trials);
  if (j.contains("mode")) {
    const auto m = j.at("mode").get<std::string>();
    require(m == "supervised" || m == "ssl", ErrorCode::config, "unknown learner mode '" + m + "'");
    p.mode = m == "ssl" ? LearnerMode::ssl : LearnerMode::supervised;
  }
  if (j.contains("regime")) {
    const auto r = j.at("regime").get<std::string>();
    require(r == "image" || r == "polygon", ErrorCode::config, "unknown regime '" + r + "'");
    p.regime = r == "image" ? Regime::image : Regime::polygon;
  }
  if (j.contains("roster")) p.roster = j.at("roster").get<std::vector<std::string>>();
  return p;
}

/// Reads the experiment JSON. Relative paths resolve against `base`.
inline ExperimentConfig parse_experiment_config(const Json& j, const std::filesystem::path& base = {}) {
  try {
    ExperimentConfig c;
    require(j.contains("preset"), ErrorCode::config, "config needs a preset");
    require(j.contains("dataset"), ErrorCode::config, "config needs a dataset section");
    c.preset = parse_preset(j.at("preset"));
    c.dataset = j.at("dataset");
    if (j.contains("learner")) c.learner = j.at("learner");
    const auto ann = j.value("annotation", Json::object());
    c.tolerance = ann.value("tolerance", kDefaultTolerance);
    c.background = ann.value("background", 0);
    const double tau = ann.value("threshold", kDefaultEntropyThreshold);
    if (j.contains("ssl")) {
      const auto& s = j.at("ssl");
      c.ssl = s;
      if (s.contains("enabled")) c.preset.mode = s.at("enabled").get<bool>() ? LearnerMode::ssl : LearnerMode::supervised;
    }
    c.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("trials")) c.trials = j.at("trials").get<int>();
    if (j.contains("output")) {
      std::filesystem::path out = j.at("output").value("dir", std::string("albench-out"));
      c.output = out.is_relative() && !base.empty() ? base / out : out;
    }
    const Json roster = j.contains("roster") ? j.at("roster") : Json(c.preset.roster);
    for (const auto& e : roster) c.roster.push_back(parse_strategy(e, tau));
    const bool has_random =
        std::any_of(c.roster.begin(), c.roster.end(), [](const auto& s) { return s.kind == StrategyKind::random; });
    if (!has_random) {
      log_info("roster lacks the random baseline; adding it");
      c.roster.insert(c.roster.begin(), parse_strategy("random", tau));
    }
    std::set<std::string> seen;
    for (const auto& s : c.roster) {
      require(seen.insert(s.name()).second, ErrorCode::config, "strategy '" + s.name() + "' listed twice");
    }
    require(c.tolerance >= 0.0, ErrorCode::config, "annotation.tolerance must be non-negative");
    require(c.preset.budget.cycles >= 1 && c.preset.budget.initial > 0 && c.preset.budget.per_cycle >= 0,
            ErrorCode::config, "budget needs initial > 0, per_cycle >= 0, cycles >= 1");
    require(!c.trials || *c.trials >= 1, ErrorCode::config, "trials must be positive");
    require(c.preset.trials >= 1 && c.preset.ensemble_trials >= 1, ErrorCode::config, "trials must be positive");
    return c;
  } catch (const Json::exception& e) {
    fail(ErrorCode::config, std::string("malformed config: ") + e.what());
  }
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::config, "cannot open config " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    fail(ErrorCode::config, path.string() + ": " + e.what());
  }
  return parse_experiment_config(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Initial labeled set

/// floor(B/K) or ceil(B/K) samples per class; the classes receiving the
/// remainder and the members of each class are drawn from `seed`.
inline std::vector<Index> init_class_balanced(const Dataset& d, std::size_t budget, std::uint64_t seed) {
  require(d.num_classes > 0, ErrorCode::invalid_argument, "dataset has no classes");
  require(budget <= d.size(), ErrorCode::budget, "initial budget exceeds the pool");
  const auto k = static_cast<std::size_t>(d.num_classes);
  std::vector<std::vector<Index>> by_class(k);
  for (Index i = 0; i < d.labels.size(); ++i) by_class.at(static_cast<std::size_t>(d.labels[i])).push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> classes(k);
  std::iota(classes.begin(), classes.end(), 0);
  rng.shuffle(classes);
  std::vector<std::size_t> quota(k, budget / k);
  for (std::size_t r = 0; r < budget % k; ++r) ++quota[classes[r]];
  std::vector<std::string> short_classes;
  for (std::size_t c = 0; c < k; ++c) {
    if (by_class[c].size() < quota[c]) short_classes.push_back(std::to_string(c));
  }
  if (!short_classes.empty()) {
    std::string list;
    for (const auto& s : short_classes) list += (list.empty() ? "" : ", ") + s;
    fail(ErrorCode::budget, "classes with fewer samples than their quota: " + list);
  }
  std::vector<Index> out;
  for (std::size_t c = 0; c < k; ++c) {
    auto members = by_class[c];
    rng.shuffle(members);
    out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]));
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Trial loop

using LearnerFactory = std::function<std::unique_ptr<Learner>(const Split&, int trial)>;

/// Everything shared by the trials of one experiment.
struct ExperimentContext {
  const ExperimentConfig* config = nullptr;
  const Split* split = nullptr;
  LearnerFactory make_learner;
  std::optional<AnnotationOracle> train_oracle;
  std::optional<AnnotationOracle> test_oracle;

  ExperimentContext(const ExperimentConfig& cfg, const Split& s, LearnerFactory factory)
      : config(&cfg), split(&s), make_learner(std::move(factory)) {
    require(s.train.task == cfg.preset.task, ErrorCode::config,
            "preset '" + cfg.preset.name + "' does not match the dataset task");
    const bool seg = s.train.task == Task::segmentation;
    require(seg || cfg.preset.budget.unit == BudgetUnit::samples, ErrorCode::config,
            "click budgets need a segmentation dataset");
    require(seg || cfg.preset.regime == Regime::image, ErrorCode::config,
            "the polygon regime needs a segmentation dataset");
    require(cfg.preset.regime == Regime::image || cfg.preset.budget.unit == BudgetUnit::clicks, ErrorCode::config,
            "the polygon regime is priced in clicks");
    for (const auto& spec : cfg.roster) validate_strategy(spec, s.train.num_classes);
    if (seg) {
      train_oracle.emplace(s.train.masks, cfg.tolerance, cfg.background);
      test_oracle.emplace(s.test.masks, cfg.tolerance, cfg.background);
    }
  }

  bool segmentation() const { return split->train.task == Task::segmentation; }
};

namespace detail {

inline TrainMode train_mode(StrategyKind k) {
  if (is_ensemble(k)) return TrainMode::ensemble;
  if (k == StrategyKind::learn_loss) return TrainMode::loss_head;
  return TrainMode::supervised;
}

class TrialRunner {
 public:
  TrialRunner(const ExperimentContext& ctx, const StrategySpec& spec, int trial)
      : ctx_(ctx), cfg_(*ctx.config), spec_(spec), trial_(trial) {
    trial_seed_ = derive_seed(cfg_.seed, static_cast<std::uint64_t>(trial));
    strategy_seed_ = derive_seed(trial_seed_, stable_hash(spec.name()));
    record_.preset = cfg_.preset.name;
    record_.strategy = spec.name();
    record_.seed = trial_seed_;
    record_.trial = trial;
    record_.metric = ctx.segmentation() ? Metric::miou : Metric::accuracy;
  }

  ExperimentRecord run() {
    try {
      learner_ = ctx_.make_learner(*ctx_.split, trial_);
      record_.learner = learner_->name();
      check_capabilities();
      pool_ = PoolState::all_unlabeled(ctx_.split->train.size());
      initial_labeling();
      retrain(0);
      record_point(0);
      for (int c = 1; c <= cfg_.preset.budget.cycles; ++c) {
        acquire(c);
        retrain(c);
        record_point(c);
      }
    } catch (const std::exception& e) {
      record_.failure = e.what();
      log_warning("trial " + std::to_string(trial_) + " of " + spec_.name() + " failed: " + e.what());
    }
    learner_.reset();
    return record_;
  }

 private:
  const Budget& budget() const { return cfg_.preset.budget; }
  bool clicks() const { return budget().unit == BudgetUnit::clicks; }

  void check_capabilities() const {
    const auto have = learner_->fields();
    for (auto f : required_fields(spec_.kind)) {
      require(have.contains(f), ErrorCode::config,
              "strategy '" + spec_.name() + "' needs '" + to_string(f) + "', which learner '" + learner_->name() +
                  "' cannot produce");
    }
  }

  std::int64_t image_cost(Index i) const { return clicks() ? ctx_.train_oracle->image_cost(i) : 1; }

  void take_image(int cycle, Index i, std::int64_t cost) {
    pool_ = clicks() ? apply_acquisition(pool_, {i}, {{i, cost}}) : apply_acquisition(pool_, {i});
    record_.acquisitions.push_back({cycle, i, -1, cost});
    spent_ += cost;
  }

  void initial_labeling() {
    const auto& train = ctx_.split->train;
    if (!ctx_.segmentation()) {
      const auto initial = init_class_balanced(train, static_cast<std::size_t>(budget().initial), trial_seed_);
      walk_images(0, initial, budget().allowance(0));
      return;
    }
    // Whole random images until the initial allowance is covered.
    std::vector<Index> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(trial_seed_);
    rng.shuffle(order);
    walk_images(0, order, budget().allowance(0));
  }

  /// Buys whole images down the ranking, skipping the unaffordable. The pool
  /// transition is applied once for the whole walk.
  void walk_images(int cycle, std::span<const Index> ranking, std::int64_t allowance) {
    std::set<Index> chosen;
    std::map<Index, std::int64_t> costs;
    for (Index i : ranking) {
      const std::int64_t remaining = allowance - spent_;
      if (remaining <= 0) break;
      const auto cost = image_cost(i);
      if (!affordable(cost, remaining)) continue;
      chosen.insert(i);
      if (clicks()) costs.emplace(i, cost);
      record_.acquisitions.push_back({cycle, i, -1, cost});
      spent_ += cost;
    }
    pool_ = apply_acquisition(pool_, chosen, costs);
  }

  std::vector<Index> candidates() const {
    std::vector<Index> out(pool_.unlabeled.begin(), pool_.unlabeled.end());
    for (const auto& [i, _] : pool_.partial_labels) out.push_back(i);
    std::sort(out.begin(), out.end());
    return out;
  }

  void acquire(int cycle) {
    const std::int64_t allowance = budget().allowance(cycle);
    const auto pool = candidates();
    if (pool.empty() || allowance - spent_ <= 0) return;
    FieldSet want = required_fields(spec_.kind);
    const bool polygon = cfg_.preset.regime == Regime::polygon;
    PredictionBundle bundle;
    if (!want.empty()) {
      bundle = learner_->predict(pool, want, SplitKind::train);
      validate_bundle(bundle, ctx_.split->train.num_classes);
      require(bundle.indices == pool, ErrorCode::runtime, "bundle rows do not follow the requested indices");
    } else {
      bundle.indices = pool;
    }
    Eigen::MatrixXd labeled_features;
    if (spec_.kind == StrategyKind::coreset) {
      const std::vector<Index> labeled(pool_.labeled.begin(), pool_.labeled.end());
      auto lb = learner_->predict(labeled, {BundleField::features}, SplitKind::train);
      validate_bundle(lb);
      labeled_features = std::move(*lb.features);
    }
    const std::size_t k = clicks() ? pool.size()
                                   : std::min<std::size_t>(pool.size(), static_cast<std::size_t>(allowance - spent_));
    const auto query_seed = derive_seed(strategy_seed_, static_cast<std::uint64_t>(cycle));
    const auto ranking = query(spec_, bundle, k, query_seed, labeled_features).indices();
    if (!polygon) {
      walk_images(cycle, ranking, allowance);
    } else {
      walk_polygons(cycle, ranking, bundle, allowance, query_seed);
    }
    require(spent_ <= allowance, ErrorCode::runtime, "spend exceeds the cumulative allowance");
  }

  /// One component per image per pass over the ranking; passes repeat while
  /// some unit was bought and budget remains.
  void walk_polygons(int cycle, const std::vector<Index>& ranking, const PredictionBundle& bundle,
                     std::int64_t allowance, std::uint64_t seed) {
    const auto& oracle = *ctx_.train_oracle;
    std::map<Index, std::size_t> row_of;
    for (std::size_t r = 0; r < bundle.indices.size(); ++r) row_of[bundle.indices[r]] = r;
    Rng rng(derive_seed(seed, 1));
    bool bought = true;
    while (bought && allowance - spent_ > 0) {
      bought = false;
      for (Index i : ranking) {
        const std::int64_t remaining = allowance - spent_;
        if (remaining <= 0) break;
        if (pool_.labeled.contains(i)) continue;
        const auto& comps = oracle.components(i);
        if (comps.size() == 0) {
          take_image(cycle, i, 0);
          bought = true;
          continue;
        }
        std::set<int> done;
        if (auto it = pool_.partial_labels.find(i); it != pool_.partial_labels.end()) {
          for (const auto& p : it->second.polygons) done.insert(p.component);
        }
        int comp;
        if (bundle.entropy_maps) {
          comp = select_polygon((*bundle.entropy_maps)[row_of.at(i)], comps, done,
                                spec_.threshold());
        } else {
          std::vector<int> open;
          for (int c = 0; c < static_cast<int>(comps.size()); ++c) {
            if (!done.contains(c)) open.push_back(c);
          }
          comp = open[rng.below(open.size())];
        }
        const auto cost = oracle.polygon_cost(i, comp);
        if (!affordable(cost, remaining)) continue;
        const bool completes = done.size() + 1 == comps.size();
        pool_ = apply_polygon_acquisition(pool_, i, oracle.polygon_for(i, comp), cost, completes);
        record_.acquisitions.push_back({cycle, i, comp, cost});
        spent_ += cost;
        bought = true;
      }
    }
  }

  void retrain(int cycle) {
    TrainRequest req;
    req.labeled.assign(pool_.labeled.begin(), pool_.labeled.end());
    req.mode = train_mode(spec_.kind);
    req.ensemble_size = spec_.ensemble_size();
    req.ssl = cfg_.preset.mode == LearnerMode::ssl;
    if (req.ssl) req.unlabeled.assign(pool_.unlabeled.begin(), pool_.unlabeled.end());
    req.seed = derive_seed(strategy_seed_, 0x1000u + static_cast<std::uint64_t>(cycle));
    if (ctx_.segmentation()) {
      const auto& oracle = *ctx_.train_oracle;
      for (Index i : pool_.labeled) req.masks.emplace(i, oracle.approximated(i));
      for (const auto& [i, set] : pool_.partial_labels) {
        std::set<int> comps;
        for (const auto& p : set.polygons) comps.insert(p.component);
        req.masks.emplace(i, oracle.partial_labels(i, comps));
      }
    }
    learner_->train(req);
  }

  void record_point(int cycle) {
    CurvePoint p{cycle, spent_, pool_.labeled.size(), 0.0, std::nullopt};
    const auto& test = ctx_.split->test;
    std::vector<Index> all(test.size());
    std::iota(all.begin(), all.end(), 0);
    if (!ctx_.segmentation()) {
      auto b = learner_->predict(all, {BundleField::probs}, SplitKind::test);
      validate_bundle(b, test.num_classes);
      const auto pred = argmax_rows(*b.probs);
      std::size_t hit = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == test.labels[i] ? 1 : 0;
      p.value = static_cast<double>(hit) / static_cast<double>(pred.size());
    } else {
      const auto masks = learner_->predict_masks(all, SplitKind::test);
      require(masks.size() == all.size(), ErrorCode::runtime, "mask count does not match the request");
      ConfusionMatrix exact, approx;
      for (std::size_t i = 0; i < masks.size(); ++i) {
        exact.add(masks[i], test.masks[i]);
        approx.add(masks[i], ctx_.test_oracle->approximated(i));
      }
      p.value = exact.miou();
      p.value_approx = approx.miou();
    }
    require(p.spent <= budget().allowance(cycle), ErrorCode::runtime, "spend exceeds the cumulative allowance");
    record_.points.push_back(p);
  }

  const ExperimentContext& ctx_;
  const ExperimentConfig& cfg_;
  const StrategySpec& spec_;
  int trial_;
  std::uint64_t trial_seed_ = 0;
  std::uint64_t strategy_seed_ = 0;
  std::unique_ptr<Learner> learner_;
  PoolState pool_;
  std::int64_t spent_ = 0;
  ExperimentRecord record_;
};

}  // namespace detail

/// One strategy, one trial: initial labeling, then `cycles` rounds of
/// predict, query, annotate, retrain, evaluate. A failing trial returns its
/// partial record with `failure` set.
inline ExperimentRecord run_trial(const ExperimentContext& ctx, const StrategySpec& spec, int trial) {
  return detail::TrialRunner(ctx, spec, trial).run();
}

// ---------------------------------------------------------------------------
// Summaries

struct SummaryPoint {
  int cycle = 0;
  double mean_spent = 0.0;
  double mean_labeled = 0.0;
  double mean_value = 0.0;
  double std_value = 0.0;
  std::optional<double> mean_value_approx;
  std::optional<double> delta_vs_random;
};

struct StrategySummary {
  std::string strategy;
  int trials = 0;
  std::vector<std::string> failures;
  std::vector<SummaryPoint> curve;
  std::optional<double> final_delta_vs_random;
};

struct Summary {
  std::string preset;
  Metric metric = Metric::accuracy;
  std::vector<StrategySummary> strategies;

  const StrategySummary* find(const std::string& name) const {
    for (const auto& s : strategies) {
      if (s.strategy == name) return &s;
    }
    return nullptr;
  }
};

/// Mean curve per strategy over its completed trials, plus the difference to
/// the random baseline at every cycle. Strategies are listed random first,
/// then by name.
inline Summary summarize(const std::vector<ExperimentRecord>& records) {
  require(!records.empty(), ErrorCode::invalid_argument, "no records to summarize");
  std::map<std::string, std::vector<const ExperimentRecord*>> groups;
  for (const auto& r : records) groups[r.strategy].push_back(&r);
  require(groups.contains("random"), ErrorCode::invalid_argument, "records lack the random baseline");
  Summary out;
  out.preset = records.front().preset;
  out.metric = records.front().metric;
  std::vector<std::string> names{"random"};
  for (const auto& [name, _] : groups) {
    if (name != "random") names.push_back(name);
  }
  for (const auto& name : names) {
    StrategySummary s;
    s.strategy = name;
    std::vector<const ExperimentRecord*> ok;
    for (const auto* r : groups[name]) {
      ++s.trials;
      if (r->ok()) {
        ok.push_back(r);
      } else {
        s.failures.push_back("trial " + std::to_string(r->trial) + ": " + r->failure);
      }
    }
    if (!ok.empty()) {
      const std::size_t n_points = ok.front()->points.size();
      for (const auto* r : ok) {
        require(r->points.size() == n_points, ErrorCode::invalid_argument,
                "strategy '" + name + "' has trials with different cycle counts");
      }
      for (std::size_t c = 0; c < n_points; ++c) {
        SummaryPoint p;
        p.cycle = ok.front()->points[c].cycle;
        double approx_sum = 0.0;
        bool has_approx = true;
        for (const auto* r : ok) {
          const auto& q = r->points[c];
          require(q.cycle == p.cycle, ErrorCode::invalid_argument, "trials disagree on cycle indices");
          p.mean_spent += static_cast<double>(q.spent);
          p.mean_labeled += static_cast<double>(q.labeled);
          p.mean_value += q.value;
          has_approx = has_approx && q.value_approx.has_value();
          if (q.value_approx) approx_sum += *q.value_approx;
        }
        const auto n = static_cast<double>(ok.size());
        p.mean_spent /= n;
        p.mean_labeled /= n;
        p.mean_value /= n;
        if (has_approx) p.mean_value_approx = approx_sum / n;
        double var = 0.0;
        for (const auto* r : ok) var += (r->points[c].value - p.mean_value) * (r->points[c].value - p.mean_value);
        p.std_value = ok.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
        s.curve.push_back(p);
      }
    }
    out.strategies.push_back(std::move(s));
  }
  const auto& base = out.strategies.front().curve;
  for (auto& s : out.strategies) {
    if (s.curve.empty() || s.curve.size() != base.size()) continue;
    for (std::size_t c = 0; c < s.curve.size(); ++c) s.curve[c].delta_vs_random = s.curve[c].mean_value - base[c].mean_value;
    s.final_delta_vs_random = s.curve.back().delta_vs_random;
  }
  return out;
}

inline Json summary_json(const Summary& s) {
  Json j{{"preset", s.preset}, {"metric", to_string(s.metric)}, {"strategies", Json::array()}};
  for (const auto& st : s.strategies) {
    Json curve = Json::array();
    for (const auto& p : st.curve) {
      Json q{{"cycle", p.cycle},           {"mean_spent", p.mean_spent}, {"mean_labeled", p.mean_labeled},
             {"mean_value", p.mean_value}, {"std_value", p.std_value}};
      if (p.mean_value_approx) q["mean_value_approx_gt"] = *p.mean_value_approx;
      q["delta_vs_random"] = p.delta_vs_random ? Json(*p.delta_vs_random) : Json(nullptr);
      curve.push_back(std::move(q));
    }
    j["strategies"].push_back({{"strategy", st.strategy},
                               {"trials", st.trials},
                               {"failures", st.failures},
                               {"final_delta_vs_random",
                                st.final_delta_vs_random ? Json(*st.final_delta_vs_random) : Json(nullptr)},
                               {"curve", curve}});
  }
  return j;
}

inline void write_summary_csv(const Summary& s, std::ostream& os) {
  os << "strategy,cycle,trials,mean_spent,mean_labeled,mean_value,std_value,mean_value_approx_gt,delta_vs_random\n";
  os.precision(10);
  for (const auto& st : s.strategies) {
    for (const auto& p : st.curve) {
      os << st.strategy << ',' << p.cycle << ',' << (st.trials - static_cast<int>(st.failures.size())) << ','
         << p.mean_spent << ',' << p.mean_labeled << ',' << p.mean_value << ',' << p.std_value << ',';
      if (p.mean_value_approx) os << *p.mean_value_approx;
      os << ',';
      if (p.delta_vs_random) os << *p.delta_vs_random;
      os << '\n';
    }
  }
}

/// One row per (strategy, trial, cycle), for external plotting.
inline void write_plot_data(const std::vector<ExperimentRecord>& records, std::ostream& os) {
  os << "strategy,trial,cycle,spent,labeled,value,value_approx_gt\n";
  os.precision(10);
  for (const auto& r : records) {
    for (const auto& p : r.points) {
      os << r.strategy << ',' << r.trial << ',' << p.cycle << ',' << p.spent << ',' << p.labeled << ',' << p.value
         << ',';
      if (p.value_approx) os << *p.value_approx;
      os << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Output directory

inline std::string record_file_name(const ExperimentRecord& r) {
  return r.strategy + "_trial" + std::to_string(r.trial) + ".json";
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot write " + path.string());
  out << text;
}

inline void write_outputs(const std::filesystem::path& dir, const std::vector<ExperimentRecord>& records) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "records");
  for (const auto& r : records) write_text(dir / "records" / record_file_name(r), Json(r).dump(2) + "\n");
  const auto summary = summarize(records);
  write_text(dir / "summary.json", summary_json(summary).dump(2) + "\n");
  std::ostringstream csv;
  write_summary_csv(summary, csv);
  write_text(dir / "summary.csv", csv.str());
}

/// Records under <dir>/records, ordered by file name.
inline std::vector<ExperimentRecord> read_records(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const auto rec_dir = fs::is_directory(dir / "records") ? dir / "records" : dir;
  require(fs::is_directory(rec_dir), ErrorCode::io, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(rec_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json" && e.path().filename() != "summary.json") {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<ExperimentRecord> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    try {
      out.push_back(Json::parse(in).get<ExperimentRecord>());
    } catch (const Json::exception& e) {
      fail(ErrorCode::io, f.string() + ": " + e.what());
    }
  }
  require(!out.empty(), ErrorCode::io, "no records found in " + rec_dir.string());
  return out;
}

/// Every roster strategy must be servable by the learner.
inline void check_learner_fields(const ExperimentConfig& cfg, const Learner& learner) {
  const auto have = learner.fields();
  for (const auto& spec : cfg.roster) {
    for (auto f : required_fields(spec.kind)) {
      require(have.contains(f), ErrorCode::config,
              "strategy '" + spec.name() + "' needs '" + to_string(f) + "', which learner '" + learner.name() +
                  "' cannot produce");
    }
  }
}

/// Every (strategy, trial) pair of the roster; records come back in roster
/// order. Writes the output directory when the config names one.
inline std::vector<ExperimentRecord> run_experiment(const ExperimentConfig& cfg, const Split& split,
                                                    LearnerFactory factory) {
  const ExperimentContext ctx(cfg, split, std::move(factory));
  check_learner_fields(cfg, *ctx.make_learner(split, 0));
  std::vector<ExperimentRecord> records;
  for (const auto& spec : cfg.roster) {
    for (int t = 0; t < cfg.trials_for(spec); ++t) {
      log_info("running " + spec.name() + " trial " + std::to_string(t));
      records.push_back(run_trial(ctx, spec, t));
    }
  }
  if (!cfg.output.empty()) write_outputs(cfg.output, records);
  return records;
}

}  // namespace albench

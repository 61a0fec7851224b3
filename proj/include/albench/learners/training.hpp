#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "albench/learners/network.hpp"
#include "albench/log.hpp"

namespace albench {

enum class Schedule { cosine, constant };

struct TrainConfig {
  double base_lr = 3e-2;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int epochs = 150;
  /// When positive, training runs for exactly this many SGD steps instead of
  /// `epochs` passes over the labeled set.
  int steps = 0;
  int batch_labeled = 64;
  int batch_unlabeled = 320;
  Schedule schedule = Schedule::cosine;
  std::uint64_t seed = 0;

  void validate() const {
    require(base_lr > 0.0, ErrorCode::config, "base_lr must be positive");
    require(momentum >= 0.0 && momentum < 1.0, ErrorCode::config, "momentum must lie in [0, 1)");
    require(weight_decay >= 0.0, ErrorCode::config, "weight_decay must be non-negative");
    require(epochs >= 0 && steps >= 0, ErrorCode::config, "epochs and steps must be non-negative");
    require(batch_labeled > 0 && batch_unlabeled >= 0, ErrorCode::config, "invalid batch sizes");
  }
};

struct GaussianNoise {
  double sigma = 0.1;
};
struct InputDropout {
  double rate = 0.1;
};
using Perturbation = std::variant<GaussianNoise, InputDropout>;

struct SSLConfig {
  double confidence_mask = 0.6;
  double temperature = 0.5;
  double unlabeled_weight = 1.0;
  Perturbation perturbation = GaussianNoise{};

  void validate() const {
    require(confidence_mask > 0.0 && confidence_mask < 1.0, ErrorCode::config, "confidence_mask must lie in (0, 1)");
    require(temperature > 0.0, ErrorCode::config, "temperature must be positive");
    require(unlabeled_weight >= 0.0, ErrorCode::config, "unlabeled_weight must be non-negative");
  }
};

struct EnsembleConfig {
  int size = 5;
  /// Empty means derive one seed per member from the training seed.
  std::vector<std::uint64_t> member_seeds;

  std::vector<std::uint64_t> seeds(std::uint64_t base) const {
    require(size >= 2, ErrorCode::config, "ensemble size must be at least 2");
    std::vector<std::uint64_t> out = member_seeds;
    if (out.empty()) {
      for (int m = 0; m < size; ++m) out.push_back(derive_seed(base, static_cast<std::uint64_t>(m)));
    }
    require(static_cast<int>(out.size()) == size, ErrorCode::config, "member seed count differs from ensemble size");
    require(std::set<std::uint64_t>(out.begin(), out.end()).size() == out.size(), ErrorCode::config,
            "duplicate ensemble member seeds");
    return out;
  }
};

struct LossHeadConfig {
  double margin = 1.0;
  double weight = 1.0;
};

/// Rows of `labeled_x` with targets `labeled_y` (targets < 0 are ignored
/// pixels); `unlabeled_x` feeds the consistency term.
struct TrainingSet {
  Matrix labeled_x;
  std::vector<int> labeled_y;
  Matrix unlabeled_x;
};

inline double cosine_lr(long step, long total_steps, double base_lr) {
  require(total_steps > 0, ErrorCode::invalid_argument, "cosine schedule needs a positive step count");
  require(step >= 0 && step <= total_steps, ErrorCode::invalid_argument, "step outside [0, total_steps]");
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

/// SGD with heavy-ball momentum; weight decay is folded into the gradient.
class Sgd {
 public:
  Sgd(std::size_t n, double momentum, double weight_decay)
      : velocity_(Vector::Zero(static_cast<Eigen::Index>(n))), momentum_(momentum), weight_decay_(weight_decay) {}

  void step(std::span<double> params, const Vector& grad, double lr) {
    Eigen::Map<Vector> w(params.data(), static_cast<Eigen::Index>(params.size()));
    velocity_ = momentum_ * velocity_ + grad + weight_decay_ * w;
    w -= lr * velocity_;
  }

 private:
  Vector velocity_;
  double momentum_;
  double weight_decay_;
};

inline Matrix perturb(const Matrix& x, const Perturbation& p, Rng& rng) {
  Matrix out = x;
  if (const auto* g = std::get_if<GaussianNoise>(&p)) {
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] += g->sigma * rng.normal();
  } else {
    const double rate = std::get<InputDropout>(p).rate;
    const double keep = 1.0 - rate;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      out.data()[i] = rng.uniform() < rate ? 0.0 : out.data()[i] / keep;
    }
  }
  return out;
}

struct FitOptions {
  TrainConfig train;
  std::optional<SSLConfig> ssl;
  std::optional<LossHeadConfig> loss_head;
};

namespace detail {

inline Matrix gather_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

inline void warn_missing_classes(std::span<const int> y, int num_classes) {
  std::set<int> seen;
  for (int t : y) {
    if (t >= 0) seen.insert(t);
  }
  if (static_cast<int>(seen.size()) < num_classes) {
    log_warning("labeled set covers " + std::to_string(seen.size()) + " of " + std::to_string(num_classes) +
                " classes; training proceeds");
  }
}

}  // namespace detail

/// Mini-batch SGD over the labeled rows with the configured schedule, plus
/// the consistency and loss-ranking terms when requested. Deterministic in
/// (spec, data, options).
inline Network fit(const NetworkSpec& spec, const TrainingSet& data, const FitOptions& opt) {
  opt.train.validate();
  require(data.labeled_x.rows() > 0, ErrorCode::invalid_argument, "labeled set is empty");
  require(static_cast<Eigen::Index>(data.labeled_y.size()) == data.labeled_x.rows(), ErrorCode::invalid_argument,
          "labeled target count mismatch");
  NetworkSpec net_spec = spec;
  if (opt.loss_head) net_spec.loss_head = true;
  Network net = Network::initialized(net_spec, opt.train.seed);
  detail::warn_missing_classes(data.labeled_y, spec.num_classes);

  std::optional<SSLConfig> ssl = opt.ssl;
  if (ssl) {
    ssl->validate();
    if (data.unlabeled_x.rows() == 0 && ssl->unlabeled_weight > 0.0) {
      log_warning("no unlabeled samples for the consistency term; falling back to supervised training");
      ssl.reset();
    }
  }

  const auto n = static_cast<std::size_t>(data.labeled_x.rows());
  const std::size_t batch = std::min<std::size_t>(n, static_cast<std::size_t>(opt.train.batch_labeled));
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const long total = opt.train.steps > 0 ? opt.train.steps
                                         : static_cast<long>(opt.train.epochs) * static_cast<long>(steps_per_epoch);
  if (total == 0) return net;

  Rng rng(derive_seed(opt.train.seed, 0x7472616eULL));
  Sgd sgd(net.parameter_count(), opt.train.momentum, opt.train.weight_decay);
  std::vector<std::size_t> order(n);
  std::vector<std::size_t> u_order(static_cast<std::size_t>(data.unlabeled_x.rows()));
  std::iota(u_order.begin(), u_order.end(), 0);
  if (opt.loss_head && batch % 2 == 1) {
    log_warning("odd labeled batch size; the last sample of each batch is left unpaired for the loss head");
  }

  long step = 0;
  while (step < total) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (std::size_t start = 0; start < n && step < total; start += batch, ++step) {
      const std::size_t end = std::min(n, start + batch);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      const Matrix xb = detail::gather_rows(data.labeled_x, rows);
      std::vector<int> yb(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) yb[i] = data.labeled_y[rows[i]];

      LossAndGrad total_grad = cross_entropy_objective(net, xb, yb);
      if (opt.loss_head) {
        const auto pairs = consecutive_pairs(rows.size());
        const auto hinge = ranking_hinge_objective(net, xb, yb, pairs, opt.loss_head->margin);
        total_grad.grad += opt.loss_head->weight * hinge.grad;
      }
      if (ssl && ssl->unlabeled_weight > 0.0 && !u_order.empty()) {
        const std::size_t ub = std::min(u_order.size(), static_cast<std::size_t>(opt.train.batch_unlabeled));
        if (ub > 0) {
          for (std::size_t i = 0; i < ub; ++i) std::swap(u_order[i], u_order[i + rng.below(u_order.size() - i)]);
          const Matrix xu = detail::gather_rows(data.unlabeled_x, std::span(u_order.data(), ub));
          const auto targets = consistency_targets(net.logits(xu), ssl->confidence_mask, ssl->temperature);
          const auto cons = consistency_objective(net, perturb(xu, ssl->perturbation, rng), targets);
          total_grad.grad += ssl->unlabeled_weight * cons.grad;
        }
      }
      const double lr = opt.train.schedule == Schedule::cosine ? cosine_lr(step, total, opt.train.base_lr)
                                                               : opt.train.base_lr;
      sgd.step(net.parameters(), total_grad.grad, lr);
    }
  }
  return net;
}

inline Network train_supervised(const NetworkSpec& spec, const TrainingSet& data, const TrainConfig& cfg) {
  return fit(spec, data, FitOptions{cfg, std::nullopt, std::nullopt});
}

inline Network train_ssl(const NetworkSpec& spec, const TrainingSet& data, const SSLConfig& ssl,
                         const TrainConfig& cfg) {
  return fit(spec, data, FitOptions{cfg, ssl, std::nullopt});
}

inline Network train_loss_head(const NetworkSpec& spec, const TrainingSet& data, const TrainConfig& cfg,
                               double margin = 1.0, double weight = 1.0) {
  require(margin > 0.0, ErrorCode::invalid_argument, "hinge margin must be positive");
  return fit(spec, data, FitOptions{cfg, std::nullopt, LossHeadConfig{margin, weight}});
}

/// Independently seeded members; member 0 is the reporting model.
inline std::vector<Network> train_ensemble(const NetworkSpec& spec, const TrainingSet& data, FitOptions opt,
                                           const EnsembleConfig& ens) {
  const auto seeds = ens.seeds(opt.train.seed);
  std::vector<Network> members;
  members.reserve(seeds.size());
  for (auto s : seeds) {
    opt.train.seed = s;
    members.push_back(fit(spec, data, opt));
  }
  return members;
}

}  // namespace albench

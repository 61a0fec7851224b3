#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "albench/core.hpp"
#include "albench/random.hpp"

namespace albench {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Fully connected classifier: `hidden` ReLU layers then a linear softmax
/// output. No hidden layers gives multinomial logistic regression. The
/// optional loss head is a linear scalar read-out of the penultimate features.
struct NetworkSpec {
  int input_dim = 0;
  std::vector<int> hidden;
  int num_classes = 0;
  bool loss_head = false;

  int feature_dim() const { return hidden.empty() ? input_dim : hidden.back(); }

  std::vector<std::pair<int, int>> layer_shapes() const {
    std::vector<std::pair<int, int>> shapes;
    int in = input_dim;
    for (int h : hidden) {
      shapes.emplace_back(h, in);
      in = h;
    }
    shapes.emplace_back(num_classes, in);
    return shapes;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto [out, in] : layer_shapes()) n += static_cast<std::size_t>(out) * in + out;
    if (loss_head) n += static_cast<std::size_t>(feature_dim()) + 1;
    return n;
  }

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

class Network {
 public:
  struct Forward {
    /// activations[0] is the input; activations[l] the output of hidden layer l.
    std::vector<Matrix> activations;
    Matrix logits;
    Vector head;

    const Matrix& features() const { return activations.back(); }
  };

  Network() = default;

  explicit Network(NetworkSpec spec) : spec_(std::move(spec)), params_(spec_.parameter_count(), 0.0) {
    require(spec_.input_dim > 0 && spec_.num_classes > 0, ErrorCode::invalid_argument,
            "network needs positive input and class dimensions");
    for (int h : spec_.hidden) require(h > 0, ErrorCode::invalid_argument, "hidden width must be positive");
  }

  /// He-normal weights, zero biases.
  static Network initialized(NetworkSpec spec, std::uint64_t seed) {
    Network net(std::move(spec));
    Rng rng(seed);
    std::size_t offset = 0;
    for (auto [out, in] : net.spec_.layer_shapes()) {
      const double scale = std::sqrt(2.0 / in);
      for (int i = 0; i < out * in; ++i) net.params_[offset++] = scale * rng.normal();
      offset += static_cast<std::size_t>(out);
    }
    if (net.spec_.loss_head) {
      const double scale = std::sqrt(1.0 / net.spec_.feature_dim());
      for (int i = 0; i < net.spec_.feature_dim(); ++i) net.params_[offset++] = scale * rng.normal();
    }
    return net;
  }

  const NetworkSpec& spec() const { return spec_; }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  Forward forward(const Matrix& x) const {
    require(x.cols() == spec_.input_dim, ErrorCode::invalid_argument,
            "input has " + std::to_string(x.cols()) + " columns, network expects " +
                std::to_string(spec_.input_dim));
    Forward f;
    f.activations.reserve(spec_.hidden.size() + 1);
    f.activations.push_back(x);
    const auto shapes = spec_.layer_shapes();
    std::size_t offset = 0;
    for (std::size_t l = 0; l < shapes.size(); ++l) {
      auto [w, b] = layer(offset, shapes[l]);
      Matrix z = f.activations.back() * w.transpose();
      z.rowwise() += b.transpose();
      if (l + 1 < shapes.size()) {
        f.activations.push_back(z.cwiseMax(0.0));
      } else {
        f.logits = std::move(z);
      }
      offset += static_cast<std::size_t>(shapes[l].first) * (shapes[l].second + 1);
    }
    if (spec_.loss_head) {
      const auto fd = spec_.feature_dim();
      Eigen::Map<const Vector> w(params_.data() + offset, fd);
      f.head = (f.features() * w).array() + params_[offset + fd];
    }
    return f;
  }

  /// Back-propagates upstream gradients on the logits (and optionally on the
  /// loss-head output) to a flat parameter gradient.
  Vector backward(const Forward& f, const Matrix& d_logits, const Vector* d_head = nullptr) const {
    Vector grad = Vector::Zero(static_cast<Eigen::Index>(params_.size()));
    const auto shapes = spec_.layer_shapes();
    std::vector<std::size_t> offsets(shapes.size());
    std::size_t offset = 0;
    for (std::size_t l = 0; l < shapes.size(); ++l) {
      offsets[l] = offset;
      offset += static_cast<std::size_t>(shapes[l].first) * (shapes[l].second + 1);
    }
    const std::size_t head_offset = offset;

    Matrix dz = d_logits;
    for (std::size_t li = shapes.size(); li-- > 0;) {
      const auto [out, in] = shapes[li];
      const Matrix& a_in = f.activations[li];
      Eigen::Map<Matrix> gw(grad.data() + offsets[li], out, in);
      Eigen::Map<Vector> gb(grad.data() + offsets[li] + static_cast<std::size_t>(out) * in, out);
      gw = dz.transpose() * a_in;
      gb = dz.colwise().sum().transpose();
      if (li == 0 && !(spec_.loss_head && d_head && spec_.hidden.empty())) break;
      auto [w, b] = layer(offsets[li], shapes[li]);
      Matrix da = dz * w;
      if (li + 1 == shapes.size() && spec_.loss_head && d_head) {
        const auto fd = spec_.feature_dim();
        Eigen::Map<const Vector> hw(params_.data() + head_offset, fd);
        da += (*d_head) * hw.transpose();
        Eigen::Map<Vector> ghw(grad.data() + head_offset, fd);
        ghw = f.features().transpose() * (*d_head);
        grad[static_cast<Eigen::Index>(head_offset) + fd] = d_head->sum();
      }
      if (li == 0) break;
      dz = da.cwiseProduct((f.activations[li].array() > 0.0).cast<double>().matrix());
    }
    return grad;
  }

  Matrix logits(const Matrix& x) const { return forward(x).logits; }
  Matrix features(const Matrix& x) const { return forward(x).features(); }

  friend bool operator==(const Network&, const Network&) = default;

 private:
  std::pair<Eigen::Map<const Matrix>, Eigen::Map<const Vector>> layer(std::size_t offset,
                                                                     std::pair<int, int> shape) const {
    const auto [out, in] = shape;
    return {Eigen::Map<const Matrix>(params_.data() + offset, out, in),
            Eigen::Map<const Vector>(params_.data() + offset + static_cast<std::size_t>(out) * in, out)};
  }

  NetworkSpec spec_;
  std::vector<double> params_;
};

// ---------------------------------------------------------------------------
// Softmax helpers

inline Matrix softmax_rows(const Matrix& logits, double temperature = 1.0) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const auto z = logits.row(r) / temperature;
    const double m = z.maxCoeff();
    out.row(r) = (z.array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

/// p^(1/T) renormalised; equal to softmax(logits / T) when p = softmax(logits).
inline Vector sharpen(const Vector& p, double temperature) {
  require(temperature > 0.0, ErrorCode::invalid_argument, "temperature must be positive");
  Vector s = p.array().pow(1.0 / temperature);
  return s / s.sum();
}

inline std::vector<ClassId> argmax_rows(const Matrix& m) {
  std::vector<ClassId> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Eigen::Index c;
    m.row(r).maxCoeff(&c);
    out[static_cast<std::size_t>(r)] = static_cast<ClassId>(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Objectives. Each returns the loss and its gradient w.r.t. the flat
// parameter vector.

struct LossAndGrad {
  double loss = 0.0;
  Vector grad;
};

/// Per-sample cross-entropy of logits against integer targets; targets < 0
/// are ignored.
inline Vector per_sample_cross_entropy(const Matrix& logits, std::span<const int> y) {
  Vector out = Vector::Zero(logits.rows());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    if (y[static_cast<std::size_t>(r)] < 0) continue;
    const double m = logits.row(r).maxCoeff();
    const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
    out[r] = lse - logits(r, y[static_cast<std::size_t>(r)]);
  }
  return out;
}

/// d(mean CE)/d(logits); rows with ignored targets get zero.
inline Matrix cross_entropy_logit_grad(const Matrix& logits, std::span<const int> y, double* loss) {
  Matrix p = softmax_rows(logits);
  std::size_t counted = 0;
  for (int t : y) counted += t >= 0 ? 1 : 0;
  const double inv = counted == 0 ? 0.0 : 1.0 / static_cast<double>(counted);
  if (loss) *loss = per_sample_cross_entropy(logits, y).sum() * inv;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const int t = y[static_cast<std::size_t>(r)];
    if (t < 0) {
      p.row(r).setZero();
      continue;
    }
    p(r, t) -= 1.0;
    p.row(r) *= inv;
  }
  return p;
}

inline LossAndGrad cross_entropy_objective(const Network& net, const Matrix& x, std::span<const int> y) {
  require(static_cast<Eigen::Index>(y.size()) == x.rows(), ErrorCode::invalid_argument, "label count mismatch");
  const auto f = net.forward(x);
  LossAndGrad out;
  const Matrix d = cross_entropy_logit_grad(f.logits, y, &out.loss);
  out.grad = net.backward(f, d);
  return out;
}

/// Consistency targets from clean predictions: the sharpened distribution and
/// a 0/1 mask that drops samples whose top probability is below `confidence`.
struct ConsistencyTargets {
  Matrix targets;
  Vector mask;
};

inline ConsistencyTargets consistency_targets(const Matrix& clean_logits, double confidence, double temperature) {
  require(temperature > 0.0, ErrorCode::invalid_argument, "temperature must be positive");
  const Matrix p = softmax_rows(clean_logits);
  ConsistencyTargets t{softmax_rows(clean_logits, temperature), Vector::Zero(clean_logits.rows())};
  for (Eigen::Index r = 0; r < p.rows(); ++r) t.mask[r] = p.row(r).maxCoeff() < confidence ? 0.0 : 1.0;
  return t;
}

/// Mean over the batch of mask_i * KL(target_i || softmax(f(x_perturbed_i))).
/// Targets are constants (no gradient flows through the clean branch).
inline LossAndGrad consistency_objective(const Network& net, const Matrix& x_perturbed,
                                         const ConsistencyTargets& t) {
  const auto f = net.forward(x_perturbed);
  const Matrix q = softmax_rows(f.logits);
  const auto n = static_cast<double>(x_perturbed.rows());
  LossAndGrad out;
  Matrix d = Matrix::Zero(q.rows(), q.cols());
  for (Eigen::Index r = 0; r < q.rows(); ++r) {
    if (t.mask[r] == 0.0) continue;
    double kl = 0.0;
    for (Eigen::Index c = 0; c < q.cols(); ++c) {
      const double tc = t.targets(r, c);
      if (tc > 0.0) kl += tc * (std::log(tc) - std::log(q(r, c)));
    }
    out.loss += kl / n;
    d.row(r) = (q.row(r) - t.targets.row(r)) / n;
  }
  out.grad = net.backward(f, d);
  return out;
}

/// Disjoint pairs (0,1), (2,3), ... over `order`; an odd trailing sample is
/// left unpaired.
inline std::vector<std::pair<Eigen::Index, Eigen::Index>> consecutive_pairs(std::size_t n) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
  for (std::size_t i = 0; i + 1 < n; i += 2) {
    out.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i + 1));
  }
  return out;
}

/// Mean pairwise ranking hinge between the loss head and the (detached)
/// per-sample cross-entropy.
inline LossAndGrad ranking_hinge_objective(const Network& net, const Matrix& x, std::span<const int> y,
                                           std::span<const std::pair<Eigen::Index, Eigen::Index>> pairs,
                                           double margin) {
  require(net.spec().loss_head, ErrorCode::invalid_argument, "network has no loss head");
  const auto f = net.forward(x);
  const Vector losses = per_sample_cross_entropy(f.logits, y);
  Vector d_head = Vector::Zero(x.rows());
  LossAndGrad out;
  if (pairs.empty()) {
    out.grad = Vector::Zero(static_cast<Eigen::Index>(net.parameter_count()));
    return out;
  }
  const double inv = 1.0 / static_cast<double>(pairs.size());
  for (auto [i, j] : pairs) {
    const double sign = losses[i] - losses[j] >= 0.0 ? 1.0 : -1.0;
    const double h = -sign * (f.head[i] - f.head[j]) + margin;
    if (h > 0.0) {
      out.loss += h * inv;
      d_head[i] -= sign * inv;
      d_head[j] += sign * inv;
    }
  }
  out.grad = net.backward(f, Matrix::Zero(f.logits.rows(), f.logits.cols()), &d_head);
  return out;
}

}  // namespace albench

#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "albench/dataset_io.hpp"
#include "albench/learner.hpp"
#include "albench/learners/training.hpp"
#include "albench/strategies.hpp"

namespace albench {

struct BuiltinConfig {
  /// "logistic" (no hidden layer) or "mlp".
  std::string model = "mlp";
  std::vector<int> hidden{32, 32};
  TrainConfig train;
  SSLConfig ssl;
  double hinge_margin = kDefaultHingeMargin;
  double hinge_weight = 1.0;
  /// Cap on unlabeled pixels fed to the consistency term per training run.
  std::size_t max_unlabeled_pixels = 20000;

  std::vector<int> hidden_layers() const { return model == "logistic" ? std::vector<int>{} : hidden; }
};

inline void from_json(const Json& j, BuiltinConfig& c) {
  c.model = j.value("kind", c.model);
  require(c.model == "mlp" || c.model == "logistic", ErrorCode::config, "unknown built-in learner '" + c.model + "'");
  c.hidden = j.value("hidden", c.hidden);
  c.train.base_lr = j.value("lr", c.train.base_lr);
  c.train.momentum = j.value("momentum", c.train.momentum);
  c.train.weight_decay = j.value("weight_decay", c.train.weight_decay);
  c.train.epochs = j.value("epochs", c.train.epochs);
  c.train.steps = j.value("steps", c.train.steps);
  c.train.batch_labeled = j.value("batch_labeled", c.train.batch_labeled);
  c.train.batch_unlabeled = j.value("batch_unlabeled", c.train.batch_unlabeled);
  const auto schedule = j.value("schedule", std::string("cosine"));
  require(schedule == "cosine" || schedule == "constant", ErrorCode::config, "unknown schedule '" + schedule + "'");
  c.train.schedule = schedule == "cosine" ? Schedule::cosine : Schedule::constant;
  c.hinge_margin = j.value("hinge_margin", c.hinge_margin);
  c.hinge_weight = j.value("hinge_weight", c.hinge_weight);
  c.max_unlabeled_pixels = j.value("max_unlabeled_pixels", c.max_unlabeled_pixels);
  c.train.validate();
}

inline void from_json(const Json& j, SSLConfig& c) {
  c.confidence_mask = j.value("confidence_mask", c.confidence_mask);
  c.temperature = j.value("temperature", c.temperature);
  c.unlabeled_weight = j.value("unlabeled_weight", c.unlabeled_weight);
  const auto kind = j.value("perturbation", std::string("gaussian_noise"));
  if (kind == "gaussian_noise") {
    c.perturbation = GaussianNoise{j.value("sigma", 0.1)};
  } else if (kind == "input_dropout") {
    c.perturbation = InputDropout{j.value("rate", 0.1)};
  } else {
    fail(ErrorCode::config, "unknown perturbation '" + kind + "'");
  }
  c.validate();
}

/// 3x3 neighbourhood of every pixel, edge-replicated, channels innermost.
/// A per-pixel MLP on these rows is a small fully convolutional network.
inline Matrix image_patches(const Image& im) {
  const int dim = 9 * im.channels;
  Matrix out(static_cast<Eigen::Index>(im.width) * im.height, dim);
  for (int r = 0; r < im.height; ++r) {
    for (int c = 0; c < im.width; ++c) {
      const Eigen::Index row = static_cast<Eigen::Index>(r) * im.width + c;
      int k = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = std::clamp(r + dr, 0, im.height - 1);
          const int cc = std::clamp(c + dc, 0, im.width - 1);
          for (int ch = 0; ch < im.channels; ++ch) out(row, k++) = im.at(rr, cc, ch);
        }
      }
    }
  }
  return out;
}

/// In-process learner over the built-in networks. Classification rows are
/// feature vectors; segmentation rows are pixel patches.
class BuiltinLearner final : public Learner {
 public:
  BuiltinLearner(const Split& data, BuiltinConfig cfg) : data_(&data), cfg_(std::move(cfg)) {
    const auto& d = data.train;
    const int input = d.task == Task::classification ? static_cast<int>(d.feature_dim())
                                                     : 9 * d.images.front().channels;
    spec_ = NetworkSpec{input, cfg_.hidden_layers(), d.num_classes, false};
  }

  std::string name() const override { return cfg_.model; }

  FieldSet fields() const override {
    FieldSet f{BundleField::probs, BundleField::features, BundleField::pred_loss, BundleField::ensemble_votes};
    if (segmentation()) f.insert(BundleField::entropy_maps);
    return f;
  }

  void train(const TrainRequest& req) override {
    require(!req.labeled.empty() || !req.masks.empty(), ErrorCode::invalid_argument, "labeled set is empty");
    TrainingSet set = segmentation() ? pixel_set(req) : feature_set(req);
    FitOptions opt{cfg_.train, std::nullopt, std::nullopt};
    opt.train.seed = req.seed;
    if (req.ssl) opt.ssl = cfg_.ssl;
    if (req.mode == TrainMode::loss_head) opt.loss_head = LossHeadConfig{cfg_.hinge_margin, cfg_.hinge_weight};
    members_.clear();
    if (req.mode == TrainMode::ensemble) {
      members_ = train_ensemble(spec_, set, opt, EnsembleConfig{req.ensemble_size, {}});
    } else {
      members_.push_back(fit(spec_, set, opt));
    }
    mode_ = req.mode;
  }

  PredictionBundle predict(std::span<const Index> indices, const FieldSet& fields, SplitKind split) override {
    require(!members_.empty(), ErrorCode::runtime, "predict before train");
    const Dataset& d = dataset(split);
    for (Index i : indices) {
      require(i < d.size(), ErrorCode::invalid_argument, "index " + std::to_string(i) + " out of range");
    }
    for (auto f : fields) {
      require(fields_now().contains(f), ErrorCode::missing_field,
              "learner cannot produce '" + to_string(f) + "' in mode " + to_string(mode_));
    }
    PredictionBundle b;
    b.indices.assign(indices.begin(), indices.end());
    return segmentation() ? predict_segmentation(d, std::move(b), fields) : predict_rows(d, std::move(b), fields);
  }

  std::vector<LabelMask> predict_masks(std::span<const Index> indices, SplitKind split) override {
    require(segmentation(), ErrorCode::invalid_argument, "mask prediction needs a segmentation dataset");
    require(!members_.empty(), ErrorCode::runtime, "predict before train");
    const Dataset& d = dataset(split);
    std::vector<LabelMask> out;
    for (Index i : indices) {
      const auto& im = d.images.at(i);
      const auto cls = argmax_rows(members_.front().logits(image_patches(im)));
      LabelMask m(im.width, im.height, 0);
      for (std::size_t p = 0; p < cls.size(); ++p) m.pixels[p] = static_cast<std::uint8_t>(cls[p]);
      out.push_back(std::move(m));
    }
    return out;
  }

  const std::vector<Network>& members() const { return members_; }

 private:
  bool segmentation() const { return data_->train.task == Task::segmentation; }
  const Dataset& dataset(SplitKind s) const { return s == SplitKind::train ? data_->train : data_->test; }

  FieldSet fields_now() const {
    FieldSet f{BundleField::probs, BundleField::features};
    if (mode_ == TrainMode::loss_head) f.insert(BundleField::pred_loss);
    if (mode_ == TrainMode::ensemble) f.insert(BundleField::ensemble_votes);
    if (segmentation()) f.insert(BundleField::entropy_maps);
    return f;
  }

  Matrix rows_of(const Dataset& d, std::span<const Index> idx) const {
    Matrix x(static_cast<Eigen::Index>(idx.size()), spec_.input_dim);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto& f = d.features.at(idx[r]);
      for (int k = 0; k < spec_.input_dim; ++k) x(static_cast<Eigen::Index>(r), k) = f[static_cast<std::size_t>(k)];
    }
    return x;
  }

  TrainingSet feature_set(const TrainRequest& req) const {
    const auto& d = data_->train;
    TrainingSet s;
    s.labeled_x = rows_of(d, req.labeled);
    for (Index i : req.labeled) s.labeled_y.push_back(d.labels.at(i));
    if (req.ssl) s.unlabeled_x = rows_of(d, req.unlabeled);
    return s;
  }

  TrainingSet pixel_set(const TrainRequest& req) const {
    const auto& d = data_->train;
    std::size_t total = 0;
    for (const auto& [i, m] : req.masks) {
      for (auto v : m.pixels) total += v == 255 || m.is_void(v) ? 0 : 1;
    }
    TrainingSet s;
    s.labeled_x = Matrix(static_cast<Eigen::Index>(total), spec_.input_dim);
    Eigen::Index row = 0;
    for (const auto& [i, m] : req.masks) {
      const Matrix patches = image_patches(d.images.at(i));
      for (std::size_t p = 0; p < m.size(); ++p) {
        const int v = m.pixels[p];
        if (v == 255 || m.is_void(v)) continue;
        s.labeled_x.row(row++) = patches.row(static_cast<Eigen::Index>(p));
        s.labeled_y.push_back(v);
      }
    }
    require(row > 0, ErrorCode::invalid_argument, "no labeled pixels");
    if (req.ssl && !req.unlabeled.empty()) {
      std::size_t n = 0;
      for (Index i : req.unlabeled) n += d.masks.at(i).size();
      const std::size_t keep = std::min(n, cfg_.max_unlabeled_pixels);
      // Evenly strided pixel subset; deterministic without a seed.
      s.unlabeled_x = Matrix(static_cast<Eigen::Index>(keep), spec_.input_dim);
      std::size_t global = 0, taken = 0;
      for (Index i : req.unlabeled) {
        const Matrix patches = image_patches(d.images.at(i));
        for (Eigen::Index p = 0; p < patches.rows(); ++p, ++global) {
          if (taken < keep && global * keep / n == taken) s.unlabeled_x.row(static_cast<Eigen::Index>(taken++)) = patches.row(p);
        }
      }
      s.unlabeled_x.conservativeResize(static_cast<Eigen::Index>(taken), Eigen::NoChange);
    }
    return s;
  }

  PredictionBundle predict_rows(const Dataset& d, PredictionBundle b, const FieldSet& fields) const {
    const Matrix x = rows_of(d, b.indices);
    const auto f = members_.front().forward(x);
    if (fields.contains(BundleField::probs)) b.probs = softmax_rows(f.logits);
    if (fields.contains(BundleField::features)) b.features = f.features();
    if (fields.contains(BundleField::pred_loss)) b.pred_loss = f.head;
    if (fields.contains(BundleField::ensemble_votes)) {
      Eigen::MatrixXi votes(x.rows(), static_cast<Eigen::Index>(members_.size()));
      for (std::size_t m = 0; m < members_.size(); ++m) {
        const auto cls = argmax_rows(m == 0 ? f.logits : members_[m].logits(x));
        for (Eigen::Index r = 0; r < x.rows(); ++r) votes(r, static_cast<Eigen::Index>(m)) = cls[static_cast<std::size_t>(r)];
      }
      b.ensemble_votes = std::move(votes);
    }
    return b;
  }

  /// Image-level rows: probs and features are pixel means, pred_loss is the
  /// mean per-pixel head output, votes are per-member majority classes.
  PredictionBundle predict_segmentation(const Dataset& d, PredictionBundle b, const FieldSet& fields) const {
    const auto n = static_cast<Eigen::Index>(b.indices.size());
    const int k = spec_.num_classes;
    if (fields.contains(BundleField::probs)) b.probs = Matrix(n, k);
    if (fields.contains(BundleField::features)) b.features = Matrix(n, spec_.feature_dim());
    if (fields.contains(BundleField::pred_loss)) b.pred_loss = Vector(n);
    if (fields.contains(BundleField::ensemble_votes)) b.ensemble_votes = Eigen::MatrixXi(n, static_cast<Eigen::Index>(members_.size()));
    if (fields.contains(BundleField::entropy_maps)) b.entropy_maps.emplace();
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto& im = d.images.at(b.indices[static_cast<std::size_t>(r)]);
      const Matrix x = image_patches(im);
      const auto f = members_.front().forward(x);
      std::vector<Matrix> member_probs{softmax_rows(f.logits)};
      if (b.probs) b.probs->row(r) = member_probs[0].colwise().mean();
      if (b.features) b.features->row(r) = f.features().colwise().mean();
      if (b.pred_loss) (*b.pred_loss)[r] = f.head.mean();
      if (b.ensemble_votes || (b.entropy_maps && members_.size() > 1)) {
        for (std::size_t m = 1; m < members_.size(); ++m) member_probs.push_back(softmax_rows(members_[m].logits(x)));
      }
      if (b.ensemble_votes) {
        for (std::size_t m = 0; m < member_probs.size(); ++m) {
          std::vector<int> hist(static_cast<std::size_t>(k), 0);
          for (auto c : argmax_rows(member_probs[m])) ++hist[static_cast<std::size_t>(c)];
          (*b.ensemble_votes)(r, static_cast<Eigen::Index>(m)) =
              static_cast<int>(std::max_element(hist.begin(), hist.end()) - hist.begin());
        }
      }
      if (b.entropy_maps) b.entropy_maps->push_back(mean_entropy_map(member_probs, im.width, im.height));
    }
    return b;
  }

  const Split* data_;
  BuiltinConfig cfg_;
  NetworkSpec spec_;
  std::vector<Network> members_;
  TrainMode mode_ = TrainMode::supervised;
};

}  // namespace albench

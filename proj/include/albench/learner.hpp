#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "albench/core.hpp"

namespace albench {

enum class TrainMode { supervised, ensemble, loss_head };

inline std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::supervised: return "supervised";
    case TrainMode::ensemble: return "ensemble";
    case TrainMode::loss_head: return "loss_head";
  }
  return "?";
}

enum class SplitKind { train, test };

inline std::string to_string(SplitKind s) { return s == SplitKind::train ? "train" : "test"; }

struct TrainRequest {
  std::vector<Index> labeled;
  /// Consistency-term inputs; read only when `ssl` is set.
  std::vector<Index> unlabeled;
  TrainMode mode = TrainMode::supervised;
  int ensemble_size = 5;
  bool ssl = false;
  std::uint64_t seed = 0;
  /// Segmentation targets for every labeled or partially labeled image;
  /// pixels equal to 255 are ignored.
  std::map<Index, LabelMask> masks;
};

/// A trainable model behind the orchestrator. Implementations hold the
/// dataset; requests refer to samples by index.
class Learner {
 public:
  virtual ~Learner() = default;

  virtual std::string name() const = 0;
  /// Every bundle field this learner can fill in some training mode.
  virtual FieldSet fields() const = 0;
  virtual void train(const TrainRequest& request) = 0;
  /// Rows follow `indices`; probs come from the reporting model.
  virtual PredictionBundle predict(std::span<const Index> indices, const FieldSet& fields, SplitKind split) = 0;
  /// Segmentation only: arg-max masks from the reporting model.
  virtual std::vector<LabelMask> predict_masks(std::span<const Index> indices, SplitKind split) = 0;
};

}  // namespace albench

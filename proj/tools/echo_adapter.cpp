// Test adapter: nearest-centroid softmax over <dataset>/train.csv and
// <dataset>/test.csv. Deterministic, classification only.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>

#include <CLI11.hpp>

#include "albench/adapter/server.hpp"
#include "albench/dataset_io.hpp"

namespace {

using namespace albench;

struct Faults {
  bool crash_on_train = false;
  bool bad_probs = false;
};

class EchoBackend final : public adapter::Backend {
 public:
  explicit EchoBackend(Faults faults) : faults_(faults) {}

  void open(const std::string& dataset, std::uint64_t, const std::string& task) override {
    require(task == "classification", ErrorCode::io, "echo adapter serves classification datasets only");
    const std::filesystem::path dir(dataset);
    require(std::filesystem::is_regular_file(dir / "train.csv") && std::filesystem::is_regular_file(dir / "test.csv"),
            ErrorCode::io, "no train.csv / test.csv under '" + dataset + "'");
    train_ = read_csv_dataset(dir / "train.csv");
    test_ = read_csv_dataset(dir / "test.csv");
    classes_ = std::max(train_.num_classes, test_.num_classes);
  }

  FieldSet fields() const override { return {BundleField::probs, BundleField::features}; }

  double train(const adapter::TrainCall& call) override {
    if (faults_.crash_on_train) std::_Exit(70);
    require(!call.labeled.empty(), ErrorCode::invalid_argument, "labeled set is empty");
    const auto dim = static_cast<Eigen::Index>(train_.feature_dim());
    centroids_ = Eigen::MatrixXd::Zero(classes_, dim);
    counts_ = Eigen::VectorXd::Zero(classes_);
    for (Index i : call.labeled) {
      require(i < train_.size(), ErrorCode::invalid_argument, "index " + std::to_string(i) + " out of range");
      const int y = train_.labels[i];
      for (Eigen::Index k = 0; k < dim; ++k) centroids_(y, k) += train_.features[i][static_cast<std::size_t>(k)];
      counts_[y] += 1.0;
    }
    for (int c = 0; c < classes_; ++c) {
      if (counts_[c] > 0) centroids_.row(c) /= counts_[c];
    }
    double loss = 0.0;
    for (Index i : call.labeled) loss -= std::log(std::max(1e-300, probs(train_, i)[train_.labels[i]]));
    return loss / static_cast<double>(call.labeled.size());
  }

  PredictionBundle predict(std::span<const Index> indices, const FieldSet& fields, SplitKind split) override {
    const Dataset& d = split == SplitKind::train ? train_ : test_;
    const auto n = static_cast<Eigen::Index>(indices.size());
    const auto dim = static_cast<Eigen::Index>(d.feature_dim());
    PredictionBundle b;
    b.indices.assign(indices.begin(), indices.end());
    Eigen::MatrixXd p(n, classes_), f(n, dim);
    for (Eigen::Index r = 0; r < n; ++r) {
      const Index i = indices[static_cast<std::size_t>(r)];
      require(i < d.size(), ErrorCode::invalid_argument, "index " + std::to_string(i) + " out of range");
      p.row(r) = probs(d, i).transpose();
      for (Eigen::Index k = 0; k < dim; ++k) f(r, k) = d.features[i][static_cast<std::size_t>(k)];
    }
    if (faults_.bad_probs) p *= 2.0;
    if (fields.contains(BundleField::probs)) b.probs = std::move(p);
    if (fields.contains(BundleField::features)) b.features = std::move(f);
    return b;
  }

 private:
  /// Softmax of negative squared distances to the seen class centroids.
  Eigen::VectorXd probs(const Dataset& d, Index i) const {
    Eigen::VectorXd logit = Eigen::VectorXd::Constant(classes_, -std::numeric_limits<double>::infinity());
    double best = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < classes_; ++c) {
      if (counts_[c] == 0) continue;
      double dist = 0.0;
      for (Eigen::Index k = 0; k < centroids_.cols(); ++k) {
        const double diff = d.features[i][static_cast<std::size_t>(k)] - centroids_(c, k);
        dist += diff * diff;
      }
      logit[c] = -dist;
      best = std::max(best, -dist);
    }
    Eigen::VectorXd p(classes_);
    for (int c = 0; c < classes_; ++c) p[c] = counts_[c] == 0 ? 0.0 : std::exp(logit[c] - best);
    return p / p.sum();
  }

  Faults faults_;
  Dataset train_, test_;
  int classes_ = 0;
  Eigen::MatrixXd centroids_;
  Eigen::VectorXd counts_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nearest-centroid test adapter (protocol v1)"};
  std::string dataset;
  std::uint64_t seed = 0;
  int version = adapter::kProtocolVersion;
  Faults faults;
  app.add_option("--dataset", dataset, "Dataset directory")->required();
  app.add_option("--seed", seed, "Session seed");
  app.add_option("--protocol-version", version, "Protocol version to claim");
  app.add_flag("--crash-on-train", faults.crash_on_train, "Exit abruptly on the first train request");
  app.add_flag("--bad-probs", faults.bad_probs, "Emit probability rows that do not sum to one");
  CLI11_PARSE(app, argc, argv);

  std::ios::sync_with_stdio(false);
  EchoBackend backend(faults);
  adapter::Server server(backend, version);
  server.serve(std::cin, std::cout);
  return 0;
}

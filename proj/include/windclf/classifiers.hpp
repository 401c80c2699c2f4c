#pragma once

// KNN, feed-forward and convolutional status classifiers behind one
// train / predict interface, plus the on-disk model bundle.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "windclf/baseline.hpp"
#include "windclf/nn.hpp"
#include "windclf/scada_data.hpp"
#include "windclf/windowing.hpp"

namespace windclf {

enum class ModelKind { knn, ffn, cnn };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(std::string_view s);

/// Exact k-nearest-neighbour classifier over a KD-tree.
///
/// Neighbours are the k smallest (squared distance, training index) pairs, so
/// ties at the k-th distance go to the lower index. Squared distances are
/// summed in coordinate order.
class KnnModel {
 public:
  KnnModel() = default;
  KnnModel(std::size_t k, std::size_t dims, std::vector<double> points, std::vector<std::size_t> labels,
           std::size_t n_classes);

  std::size_t k() const noexcept { return k_; }
  std::size_t dims() const noexcept { return dims_; }
  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t n_classes() const noexcept { return n_classes_; }
  const std::vector<double>& points() const noexcept { return points_; }
  const std::vector<std::size_t>& labels() const noexcept { return labels_; }

  /// Training indices of the neighbours, nearest first.
  std::vector<std::size_t> neighbors(std::span<const double> x) const;
  std::vector<double> predict_proba(std::span<const double> x) const;

 private:
  struct Node {
    std::size_t lo, hi;  // range in order_
    std::size_t left = 0, right = 0;  // child node ids; 0 marks a leaf
    std::size_t dim = 0;
    double split = 0.0;
  };
  struct Candidate {
    double dist;
    std::size_t index;
    bool operator<(const Candidate& o) const { return dist < o.dist || (dist == o.dist && index < o.index); }
  };

  std::size_t build(std::size_t lo, std::size_t hi);
  void search(std::size_t node, std::span<const double> x, std::vector<Candidate>& heap) const;

  std::size_t k_ = 0, dims_ = 0, n_classes_ = 0;
  std::vector<double> points_;  // n x dims
  std::vector<std::size_t> labels_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

std::vector<double> knn_predict_proba(const KnnModel& m, std::span<const double> x);

/// Index of the largest probability; ties go to the lower class index.
std::size_t argmax(std::span<const double> p);

struct ModelConfig {
  ModelKind kind = ModelKind::knn;
  /// Input signals. Empty selects the kind's default.
  std::vector<std::string> signals;
  std::size_t knn_k = 50;
  std::vector<std::size_t> ffn_hidden{12, 6, 6};
  std::vector<std::size_t> cnn_channels{32, 32};
  std::size_t cnn_kernel = 3;
  std::vector<std::size_t> cnn_head{64, 32};
  std::size_t window_half_width = 4;
  WindowMode window_mode = WindowMode::centered;
  /// 0 selects the kind's default (50 ffn, 30 cnn).
  std::size_t epochs = 0;
  std::size_t batch_size = 256;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;

  std::vector<std::string> resolved_signals() const;
  std::size_t resolved_epochs() const;
  WindowSpec window() const;
};

std::vector<std::string> default_signals(ModelKind k);
nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct TrainingMetadata {
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  double learning_rate = 0.0;
  std::size_t n_train = 0;
  std::vector<double> loss_history;
  std::vector<std::size_t> class_support;
  std::vector<std::string> warnings;
};

struct ModelBundle {
  ModelKind kind = ModelKind::knn;
  std::vector<std::string> signal_names;
  std::vector<std::string> label_vocab;
  std::optional<AlignmentParams> alignment;  // applied to the training data
  WindowSpec window;  // cnn only
  KnnModel knn;
  nn::Network network;
  TrainingMetadata metadata;
  nlohmann::json provenance = nlohmann::json::object();
};

/// Trains on the labeled records of `train_ds` (normalized). Classes of the
/// vocabulary with no training support produce a metadata warning.
ModelBundle train_model(const ModelConfig& config, const FarmDataset& train_ds,
                        std::optional<AlignmentParams> alignment = std::nullopt);

struct Predictions {
  std::size_t n_classes = 0;
  std::size_t total_records = 0;
  std::vector<std::size_t> turbine_index;
  std::vector<std::size_t> record_index;
  std::vector<std::size_t> predicted;
  std::vector<std::optional<std::size_t>> truth;  // against the bundle vocabulary
  std::vector<double> probabilities;  // eligible x n_classes

  std::size_t eligible() const noexcept { return predicted.size(); }
  std::size_t ineligible() const noexcept { return total_records - eligible(); }
  std::span<const double> proba(std::size_t i) const { return {&probabilities[i * n_classes], n_classes}; }
};

/// One prediction per eligible record, in dataset order. For cnn, records
/// without a complete window are not eligible. True labels are mapped into
/// the bundle vocabulary by name.
Predictions predict(const ModelBundle& m, const FarmDataset& ds);

void save_bundle(std::ostream& out, const ModelBundle& m);
void save_bundle(const std::filesystem::path& path, const ModelBundle& m);
ModelBundle load_bundle(std::istream& in);
ModelBundle load_bundle(const std::filesystem::path& path);

}  // namespace windclf

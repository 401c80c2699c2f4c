#pragma once

// Accuracy metrics, label-space unification, mixed training sets and the
// train-on-one-farm / test-on-another transfer harness.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "windclf/baseline.hpp"
#include "windclf/classifiers.hpp"
#include "windclf/scada_data.hpp"

namespace windclf {

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  std::vector<std::string> label_vocab;
  std::vector<std::uint64_t> counts;  // n x n, row-major

  std::size_t n_classes() const noexcept { return label_vocab.size(); }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * n_classes() + predicted]; }
  std::uint64_t total() const;
  std::uint64_t trace() const;
};

ConfusionMatrix confusion_matrix(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                                 const std::vector<std::string>& label_vocab);

struct ClassAccuracy {
  std::string name;
  std::optional<double> recall;  // nullopt when the class has no support
  std::uint64_t support = 0;
  bool expected_to_transfer = true;  // false for "other"
};

struct AccuracyReport {
  double overall = 0.0;
  std::optional<double> macro;  // mean recall over supported classes
  std::vector<ClassAccuracy> per_class;
  std::uint64_t n = 0;
};

AccuracyReport score(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                     const std::vector<std::string>& label_vocab);
AccuracyReport score(const ConfusionMatrix& cm);

/// Mean recall over the named classes that have support.
std::optional<double> macro_over(const AccuracyReport& r, const std::vector<std::string>& classes);

struct Evaluation {
  AccuracyReport report;
  ConfusionMatrix confusion;
  std::size_t eligible = 0;
  std::size_t total_records = 0;
};

/// Predicts `ds` and scores the eligible labeled records.
Evaluation evaluate(const ModelBundle& m, const FarmDataset& ds);

/// Re-expresses every dataset against the union vocabulary (canonical order).
/// Class names that differ only by case are rejected.
std::vector<FarmDataset> unify_label_space(const std::vector<FarmDataset>& datasets);

struct MixOptions {
  AlignmentSearch search;
  double objective_ceiling = 1.0;
};

struct MixedDataset {
  FarmDataset data;
  std::vector<AlignmentParams> alignments;  // one per input; identity for the reference
};

/// Aligns every farm onto `reference_farm_id` and concatenates them under the
/// unified vocabulary. Turbine ids are prefixed with their farm id.
MixedDataset build_mixed(const std::vector<FarmDataset>& datasets, const std::string& reference_farm_id,
                         const MixOptions& options = {});

struct TransferOptions {
  ModelConfig model;
  /// Align each foreign test farm onto the training farm before scoring.
  bool align_test_to_train = false;
  AlignmentSearch search;
  double test_fraction = 1.0 / 3.0;
  /// Defaults to contiguous blocks for cnn and single records otherwise.
  std::optional<SplitStrategy> split_strategy;
  std::uint64_t seed = 0;
};

struct TransferCell {
  std::string train_farm, test_farm;
  bool in_farm = false;
  AccuracyReport report;
  ConfusionMatrix confusion;
  std::size_t eligible = 0, total_records = 0;
  std::optional<AlignmentParams> alignment;
};

struct TransferMatrix {
  std::vector<std::string> train_farms, test_farms, label_vocab;
  std::vector<TransferCell> cells;  // row-major by training farm
  nlohmann::json config;

  const TransferCell& cell(std::size_t i, std::size_t j) const { return cells.at(i * test_farms.size() + j); }
};

/// Trains once per training farm (on 2/3 of it) and scores every test farm:
/// the held-out third when it is the training farm, the full farm otherwise.
TransferMatrix transfer_experiment(const std::vector<FarmDataset>& train_farms,
                                   const std::vector<FarmDataset>& test_farms, const TransferOptions& options);

/// `overall(recall, ...)` in whole percent; classes without support print "-".
std::string format_cell(const AccuracyReport& r);
void write_transfer_table(std::ostream& out, const TransferMatrix& t, const std::vector<std::string>& comments = {});
nlohmann::json to_json(const AccuracyReport& r);
nlohmann::json to_json(const TransferMatrix& t);
void write_confusion_csv(std::ostream& out, const ConfusionMatrix& cm, const std::vector<std::string>& comments = {});

}  // namespace windclf

#pragma once

// Canonical SCADA data model: per-turbine time series of 10-minute records,
// CSV ingestion, per-farm min-max scaling and train/test splitting.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace windclf {

inline constexpr std::int64_t kDefaultSamplingPeriodMinutes = 10;
inline constexpr std::string_view kNormalClass = "normal";
inline constexpr std::string_view kOtherClass = "other";

namespace signals {
inline constexpr std::string_view wind_speed = "wind_speed";
inline constexpr std::string_view power = "power";
inline constexpr std::string_view pitch = "pitch";
inline constexpr std::string_view rotor_speed = "rotor_speed";
inline constexpr std::string_view ambient_temp = "ambient_temp";
}  // namespace signals

/// One sample. `signals` is aligned with the owning dataset's `signal_names`;
/// `label` indexes the dataset's `label_vocab`.
struct ScadaRecord {
  std::int64_t timestamp = 0;  // minutes since epoch
  std::vector<double> signals;
  std::optional<std::size_t> label;

  bool operator==(const ScadaRecord&) const = default;
};

struct TurbineSeries {
  std::string turbine_id;
  std::vector<ScadaRecord> records;  // strictly increasing timestamps

  bool operator==(const TurbineSeries&) const = default;
};

struct SignalRange {
  double min = 0.0;
  double max = 1.0;

  bool operator==(const SignalRange&) const = default;
};

/// Historical SCADA data of one farm.
///
/// Datasets are plain values; every transformation below returns a new one.
struct FarmDataset {
  std::string farm_id;
  std::vector<std::string> signal_names;
  std::vector<std::string> label_vocab;  // "normal" first, "other" last
  std::vector<SignalRange> normalization_ranges;  // empty until normalized
  std::vector<TurbineSeries> turbines;
  std::int64_t sampling_period = kDefaultSamplingPeriodMinutes;

  std::size_t size() const noexcept;
  bool empty() const noexcept { return size() == 0; }
  bool is_normalized() const noexcept { return !normalization_ranges.empty(); }

  std::optional<std::size_t> find_signal(std::string_view name) const;
  /// Throws SchemaError when absent.
  std::size_t signal_index(std::string_view name) const;
  std::optional<std::size_t> find_label(std::string_view name) const;
  std::size_t label_index(std::string_view name) const;

  /// Checks every documented invariant; throws IntegrityError / SchemaError.
  void validate() const;

  bool operator==(const FarmDataset&) const = default;
};

/// Orders class names as reported: "normal", then the rest in natural order
/// (C1, C2, ..., C10), then "other". Both anchors are always present.
std::vector<std::string> canonical_vocab(std::vector<std::string> names);

struct CsvOptions {
  /// Expected signal columns, in order. Empty accepts whatever the header names.
  std::vector<std::string> schema;
  /// Label vocabulary. Empty infers it from the file (canonical order).
  std::vector<std::string> label_vocab;
  /// Defaults to the file stem.
  std::string farm_id;
  /// Load `<stem>.ranges.json` next to the file when present.
  bool load_ranges_sidecar = true;
};

FarmDataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {});
FarmDataset parse_csv(std::istream& in, const CsvOptions& options);

/// Writes `timestamp,turbine_id,<signals>,label`. `comments` become leading
/// `# ` lines, which the reader skips. Values use shortest round-trip form.
void write_csv(std::ostream& out, const FarmDataset& ds,
               const std::vector<std::string>& comments = {});
/// Writes the CSV and, for normalized datasets, the ranges sidecar.
void save_csv(const std::filesystem::path& path, const FarmDataset& ds,
              const std::vector<std::string>& comments = {});

std::filesystem::path ranges_sidecar_path(const std::filesystem::path& csv_path);
void save_ranges_json(const std::filesystem::path& path, const FarmDataset& ds);
std::vector<SignalRange> load_ranges_json(const std::filesystem::path& path,
                                          const std::vector<std::string>& signal_names);

/// Maps every signal by (v - min) / (max - min) over the whole farm.
FarmDataset min_max_normalize(const FarmDataset& ds);
/// Normalizes unless ranges are already recorded.
FarmDataset ensure_normalized(const FarmDataset& ds);
/// Inverse of min_max_normalize using the stored ranges.
FarmDataset denormalize(const FarmDataset& ds);

/// Keeps only `names`, in that order.
FarmDataset select_signals(const FarmDataset& ds, const std::vector<std::string>& names);

/// Re-expresses labels against `vocab`, which must contain every used label.
FarmDataset relabel(const FarmDataset& ds, const std::vector<std::string>& vocab);

/// Per-class record counts against `label_vocab`; unlabeled records are skipped.
std::vector<std::size_t> label_histogram(const FarmDataset& ds);

enum class SplitStrategy { by_record, by_contiguous_block };

struct SplitSpec {
  double test_fraction = 1.0 / 3.0;
  std::uint64_t seed = 0;
  SplitStrategy strategy = SplitStrategy::by_record;
  std::size_t block_length = 144;  // records per block (one day)
};

/// Returns (train, test). Per turbine, the test side holds round(f * n) records.
std::pair<FarmDataset, FarmDataset> split(const FarmDataset& ds, const SplitSpec& spec);

std::string to_string(SplitStrategy s);
SplitStrategy split_strategy_from_string(std::string_view s);

/// Stable 64-bit FNV-1a hash, used for sub-seeds and provenance.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
/// SplitMix64 finalizer; mixes seeds into independent streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace windclf

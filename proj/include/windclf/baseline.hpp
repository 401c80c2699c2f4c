#pragma once

// Power-curve baseline (wind-speed mode per power bin) and the affine
// wind-speed alignment that superimposes one farm's baseline on another's.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "windclf/scada_data.hpp"

namespace windclf {

/// Joint wind-speed / power histogram over the unit square.
struct Histogram2D {
  std::vector<double> ws_edges;  // n_ws + 1, ascending
  std::vector<double> pw_edges;  // n_pw + 1, ascending
  std::vector<std::uint64_t> counts;  // n_ws x n_pw, row-major by wind-speed bin

  std::size_t n_ws() const noexcept { return ws_edges.size() - 1; }
  std::size_t n_pw() const noexcept { return pw_edges.size() - 1; }
  std::uint64_t count(std::size_t ws_bin, std::size_t pw_bin) const { return counts[ws_bin * n_pw() + pw_bin]; }
  std::uint64_t total() const;
};

enum class RecordSelection {
  all,
  normal_if_labeled,  // "normal"-labeled records when any labels exist, else all
};

/// Uniform bin index over [0, 1]; values outside are clipped into the edge bins
/// and 1.0 falls in the last bin.
std::size_t unit_bin(double x, std::size_t n_bins);

Histogram2D histogram2d(const FarmDataset& ds, std::size_t n_ws = 64, std::size_t n_pw = 64,
                        RecordSelection selection = RecordSelection::all);

struct PowerCurveBaseline {
  std::vector<double> pw_bin_centers;
  std::vector<std::optional<double>> ws_mode;  // nullopt where support is below the floor
  std::vector<std::uint64_t> support_counts;

  std::size_t supported_bins() const;
};

PowerCurveBaseline extract_baseline(const Histogram2D& h, std::uint64_t min_support = 20);

/// Histogram of normal records (when labeled) followed by extract_baseline.
PowerCurveBaseline learn_baseline(const FarmDataset& ds, std::size_t n_ws = 64, std::size_t n_pw = 64,
                                  std::uint64_t min_support = 20);

/// Two-column `power,wind_speed` CSV of the supported bins.
void write_baseline_csv(std::ostream& out, const PowerCurveBaseline& b,
                        const std::vector<std::string>& comments = {});

/// Largest |a - b| in wind-speed bins over power bins supported by both.
/// Returns nullopt when no bin is shared.
std::optional<double> baseline_distance_bins(const PowerCurveBaseline& a, const PowerCurveBaseline& b,
                                             std::size_t n_ws);

struct AlignmentParams {
  double alpha = 1.0;
  double beta = 0.0;
  double objective_value = 0.0;
  std::string reference_farm_id;
  std::string source_farm_id;
};

nlohmann::json to_json(const AlignmentParams& p);
AlignmentParams alignment_from_json(const nlohmann::json& j);

struct AlignmentSearch {
  double alpha_min = 0.5, alpha_max = 2.0;
  std::size_t alpha_steps = 31;
  double beta_min = -0.5, beta_max = 0.5;
  std::size_t beta_steps = 21;
  std::size_t n_ws = 64, n_pw = 64;
  std::size_t max_evaluations = 400;
  double tolerance = 1e-10;
};

/// L1 distance between density-normalized joint histograms of a source farm,
/// with wind speed mapped by clip(alpha * ws + beta, 0, 1), and a reference.
///
/// Wind-speed mass is spread linearly between the two nearest bin centers so
/// the objective varies continuously with (alpha, beta).
class AlignmentObjective {
 public:
  AlignmentObjective(const FarmDataset& source, const FarmDataset& reference, std::size_t n_ws = 64,
                     std::size_t n_pw = 64);

  double operator()(double alpha, double beta) const;
  std::size_t n_ws() const noexcept { return n_ws_; }
  std::size_t n_pw() const noexcept { return n_pw_; }

 private:
  std::size_t n_ws_, n_pw_;
  std::vector<double> source_ws_;
  std::vector<std::uint32_t> source_pw_bin_;
  std::vector<double> reference_density_;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  std::size_t evaluations = 0;
};

/// Downhill simplex minimization from `start` with per-coordinate `step`.
NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                             std::vector<double> start, std::vector<double> step,
                             std::size_t max_evaluations, double tolerance);

/// Coarse grid over (alpha, beta) followed by Nelder-Mead from the best node.
AlignmentParams fit_alignment(const FarmDataset& source, const FarmDataset& reference,
                              const AlignmentSearch& search = {});

/// wind_speed -> clip(alpha * ws + beta, 0, 1); other signals and labels untouched.
FarmDataset apply_alignment(const FarmDataset& ds, const AlignmentParams& p);

}  // namespace windclf

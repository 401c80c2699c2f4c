#pragma once

// Local time-series windows: each record becomes a signals x timesteps matrix.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "windclf/scada_data.hpp"

namespace windclf {

enum class WindowMode { centered, causal };

std::string to_string(WindowMode m);
WindowMode window_mode_from_string(std::string_view s);

struct WindowSpec {
  std::size_t half_width = 4;
  WindowMode mode = WindowMode::centered;
  std::vector<std::string> signal_names;

  std::size_t width() const noexcept { return mode == WindowMode::centered ? 2 * half_width + 1 : half_width + 1; }
  /// Column of the labeled record inside the window.
  std::size_t anchor_column() const noexcept { return half_width; }
};

struct WindowSample {
  std::size_t rows = 0;  // signals
  std::size_t cols = 0;  // timesteps, oldest first
  std::vector<double> matrix;  // rows x cols, row-major
  std::optional<std::size_t> label;
  std::int64_t timestamp = 0;
  std::string turbine_id;
  std::size_t turbine_index = 0;
  std::size_t record_index = 0;

  double at(std::size_t signal, std::size_t column) const { return matrix[signal * cols + column]; }
  bool operator==(const WindowSample&) const = default;
};

/// One sample per record whose whole window lies inside the same turbine on
/// consecutive sampling periods. Unlabeled records are skipped unless
/// `include_unlabeled` is set.
std::vector<WindowSample> make_windows(const FarmDataset& ds, const WindowSpec& spec,
                                       bool include_unlabeled = false);

/// Binary cache: magic, count, rows, cols, then per sample the label (-1 when
/// absent), timestamp, turbine/record index, turbine id and values, all
/// little-endian.
void save_window_cache(const std::filesystem::path& path, const std::vector<WindowSample>& samples);
std::vector<WindowSample> load_window_cache(const std::filesystem::path& path);

}  // namespace windclf

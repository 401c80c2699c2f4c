#include "windclf/windowing.hpp"

#include <fstream>

#include "windclf/binary_io.hpp"
#include "windclf/errors.hpp"

namespace windclf {

namespace {
constexpr char kCacheMagic[8] = {'W', 'C', 'W', 'I', 'N', '0', '0', '1'};
}

std::string to_string(WindowMode m) { return m == WindowMode::centered ? "centered" : "causal"; }

WindowMode window_mode_from_string(std::string_view s) {
  if (s == "centered") return WindowMode::centered;
  if (s == "causal") return WindowMode::causal;
  throw ConfigError("unknown window mode '" + std::string(s) + "'");
}

std::vector<WindowSample> make_windows(const FarmDataset& ds, const WindowSpec& spec, bool include_unlabeled) {
  std::vector<std::size_t> cols;
  cols.reserve(spec.signal_names.size());
  for (const auto& name : spec.signal_names) cols.push_back(ds.signal_index(name));
  const std::size_t p = cols.size();
  const std::size_t w = spec.width();
  const std::size_t k = spec.half_width;
  const std::size_t ahead = spec.mode == WindowMode::centered ? k : 0;
  const auto span_minutes = static_cast<std::int64_t>(w - 1) * ds.sampling_period;

  std::vector<WindowSample> out;
  for (std::size_t t = 0; t < ds.turbines.size(); ++t) {
    const auto& recs = ds.turbines[t].records;
    const std::size_t n = recs.size();
    for (std::size_t i = k; i + ahead < n; ++i) {
      const auto& anchor = recs[i];
      if (!anchor.label && !include_unlabeled) continue;
      const std::size_t first = i - k, last = i + ahead;
      // Timestamps are strictly increasing multiples of the period, so equal
      // span means no gap inside the window.
      if (recs[last].timestamp - recs[first].timestamp != span_minutes) continue;
      WindowSample s;
      s.rows = p;
      s.cols = w;
      s.matrix.resize(p * w);
      for (std::size_t c = 0; c < w; ++c) {
        const auto& sig = recs[first + c].signals;
        for (std::size_t r = 0; r < p; ++r) s.matrix[r * w + c] = sig[cols[r]];
      }
      s.label = anchor.label;
      s.timestamp = anchor.timestamp;
      s.turbine_id = ds.turbines[t].turbine_id;
      s.turbine_index = t;
      s.record_index = i;
      out.push_back(std::move(s));
    }
  }
  return out;
}

void save_window_cache(const std::filesystem::path& path, const std::vector<WindowSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(kCacheMagic, sizeof(kCacheMagic));
  const std::uint64_t rows = samples.empty() ? 0 : samples.front().rows;
  const std::uint64_t cols = samples.empty() ? 0 : samples.front().cols;
  binary::write<std::uint64_t>(out, samples.size());
  binary::write<std::uint64_t>(out, rows);
  binary::write<std::uint64_t>(out, cols);
  for (const auto& s : samples) {
    if (s.rows != rows || s.cols != cols) throw ShapeError("window cache requires uniform sample shapes");
    binary::write<std::int64_t>(out, s.label ? static_cast<std::int64_t>(*s.label) : -1);
    binary::write<std::int64_t>(out, s.timestamp);
    binary::write<std::uint64_t>(out, s.turbine_index);
    binary::write<std::uint64_t>(out, s.record_index);
    binary::write_string(out, s.turbine_id);
    for (double v : s.matrix) binary::write<double>(out, v);
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<WindowSample> load_window_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || !std::equal(magic, magic + 8, kCacheMagic))
    throw IoError("'" + path.string() + "' is not a window cache");
  const auto count = binary::read<std::uint64_t>(in);
  const auto rows = binary::read<std::uint64_t>(in);
  const auto cols = binary::read<std::uint64_t>(in);
  std::vector<WindowSample> out;
  out.reserve(count);
  for (std::uint64_t n = 0; n < count; ++n) {
    WindowSample s;
    s.rows = rows;
    s.cols = cols;
    const auto label = binary::read<std::int64_t>(in);
    if (label >= 0) s.label = static_cast<std::size_t>(label);
    s.timestamp = binary::read<std::int64_t>(in);
    s.turbine_index = binary::read<std::uint64_t>(in);
    s.record_index = binary::read<std::uint64_t>(in);
    s.turbine_id = binary::read_string(in);
    s.matrix.resize(rows * cols);
    for (auto& v : s.matrix) v = binary::read<double>(in);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace windclf

#include "windclf/scada_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "windclf/errors.hpp"

namespace windclf {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc{} && res.ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_int(std::string_view s, std::int64_t& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

void append_double(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

// Natural ordering: digit runs compare numerically ("C2" < "C10").
bool natural_less(const std::string& a, const std::string& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const bool da = std::isdigit(static_cast<unsigned char>(a[i]));
    const bool db = std::isdigit(static_cast<unsigned char>(b[j]));
    if (da && db) {
      std::size_t ie = i, je = j;
      while (ie < a.size() && std::isdigit(static_cast<unsigned char>(a[ie]))) ++ie;
      while (je < b.size() && std::isdigit(static_cast<unsigned char>(b[je]))) ++je;
      const auto na = std::stoull(a.substr(i, ie - i));
      const auto nb = std::stoull(b.substr(j, je - j));
      if (na != nb) return na < nb;
      i = ie;
      j = je;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  return (a.size() - i) < (b.size() - j);
}

}  // namespace

std::size_t FarmDataset::size() const noexcept {
  std::size_t n = 0;
  for (const auto& t : turbines) n += t.records.size();
  return n;
}

std::optional<std::size_t> FarmDataset::find_signal(std::string_view name) const {
  for (std::size_t i = 0; i < signal_names.size(); ++i)
    if (signal_names[i] == name) return i;
  return std::nullopt;
}

std::size_t FarmDataset::signal_index(std::string_view name) const {
  if (auto i = find_signal(name)) return *i;
  throw SchemaError("farm '" + farm_id + "' has no signal '" + std::string(name) + "'");
}

std::optional<std::size_t> FarmDataset::find_label(std::string_view name) const {
  for (std::size_t i = 0; i < label_vocab.size(); ++i)
    if (label_vocab[i] == name) return i;
  return std::nullopt;
}

std::size_t FarmDataset::label_index(std::string_view name) const {
  if (auto i = find_label(name)) return *i;
  throw VocabularyError("farm '" + farm_id + "' has no class '" + std::string(name) + "'");
}

void FarmDataset::validate() const {
  if (sampling_period <= 0) throw IntegrityError("sampling period must be positive");
  if (!normalization_ranges.empty() && normalization_ranges.size() != signal_names.size())
    throw IntegrityError("normalization ranges do not match signal list");
  std::set<std::string> seen;
  for (const auto& t : turbines) {
    if (!seen.insert(t.turbine_id).second)
      throw IntegrityError("duplicate turbine id '" + t.turbine_id + "'");
    for (std::size_t i = 0; i < t.records.size(); ++i) {
      const auto& r = t.records[i];
      if (r.signals.size() != signal_names.size())
        throw SchemaError("record of turbine '" + t.turbine_id + "' has " +
                          std::to_string(r.signals.size()) + " signals, expected " +
                          std::to_string(signal_names.size()));
      if (r.timestamp % sampling_period != 0)
        throw IntegrityError("timestamp " + std::to_string(r.timestamp) +
                             " is not a multiple of the sampling period");
      if (i > 0 && r.timestamp <= t.records[i - 1].timestamp)
        throw IntegrityError("timestamps of turbine '" + t.turbine_id + "' are not increasing");
      if (r.label && *r.label >= label_vocab.size())
        throw IntegrityError("label index out of vocabulary");
    }
  }
}

std::vector<std::string> canonical_vocab(std::vector<std::string> names) {
  std::set<std::string> unique(names.begin(), names.end());
  unique.erase(std::string(kNormalClass));
  unique.erase(std::string(kOtherClass));
  std::vector<std::string> middle(unique.begin(), unique.end());
  std::sort(middle.begin(), middle.end(), natural_less);
  std::vector<std::string> out;
  out.reserve(middle.size() + 2);
  out.emplace_back(kNormalClass);
  out.insert(out.end(), middle.begin(), middle.end());
  out.emplace_back(kOtherClass);
  return out;
}

FarmDataset parse_csv(std::istream& in, const CsvOptions& options) {
  FarmDataset ds;
  ds.farm_id = options.farm_id;

  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<std::size_t> column_of_signal;  // schema position -> column
  std::size_t n_columns = 0;
  while (!have_header && std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto fields = split_fields(t);
    n_columns = fields.size();
    if (n_columns < 3 || trim(fields.front()) != "timestamp" || trim(fields[1]) != "turbine_id" ||
        trim(fields.back()) != "label")
      throw ParseError("header must be 'timestamp,turbine_id,<signals...>,label'", line_no);
    std::vector<std::string> header_signals;
    for (std::size_t c = 2; c + 1 < n_columns; ++c) header_signals.emplace_back(trim(fields[c]));
    ds.signal_names = options.schema.empty() ? header_signals : options.schema;
    for (const auto& s : ds.signal_names) {
      const auto it = std::find(header_signals.begin(), header_signals.end(), s);
      if (it == header_signals.end())
        throw SchemaError("CSV header lacks signal '" + s + "'");
      column_of_signal.push_back(2 + static_cast<std::size_t>(it - header_signals.begin()));
    }
    have_header = true;
  }
  if (!have_header) throw ParseError("missing header row", line_no);

  struct Row {
    std::string turbine;
    ScadaRecord rec;
    std::string label;
    std::size_t line;
  };
  std::vector<Row> rows;
  std::set<std::string> label_names;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto fields = split_fields(t);
    if (fields.size() != n_columns)
      throw ParseError("expected " + std::to_string(n_columns) + " columns, found " +
                           std::to_string(fields.size()),
                       line_no);
    Row row;
    row.line = line_no;
    if (!parse_int(fields[0], row.rec.timestamp))
      throw ParseError("timestamp '" + std::string(fields[0]) + "' is not an integer", line_no);
    row.turbine = std::string(trim(fields[1]));
    if (row.turbine.empty()) throw ParseError("empty turbine_id", line_no);
    row.rec.signals.resize(ds.signal_names.size());
    for (std::size_t s = 0; s < ds.signal_names.size(); ++s) {
      const auto f = fields[column_of_signal[s]];
      if (!parse_double(f, row.rec.signals[s]))
        throw ParseError("signal '" + ds.signal_names[s] + "' value '" + std::string(f) +
                             "' is not a finite number",
                         line_no);
    }
    row.label = std::string(trim(fields.back()));
    if (!row.label.empty()) label_names.insert(row.label);
    rows.push_back(std::move(row));
  }

  if (options.label_vocab.empty()) {
    ds.label_vocab = canonical_vocab({label_names.begin(), label_names.end()});
  } else {
    ds.label_vocab = options.label_vocab;
  }

  std::map<std::string, std::size_t> turbine_pos;
  for (auto& row : rows) {
    if (!row.label.empty()) {
      const auto idx = ds.find_label(row.label);
      if (!idx) throw ParseError("unknown label '" + row.label + "'", row.line);
      row.rec.label = *idx;
    }
    auto [it, inserted] = turbine_pos.try_emplace(row.turbine, ds.turbines.size());
    if (inserted) ds.turbines.push_back({row.turbine, {}});
    auto& series = ds.turbines[it->second].records;
    if (row.rec.timestamp % ds.sampling_period != 0)
      throw IntegrityError("line " + std::to_string(row.line) + ": timestamp " +
                           std::to_string(row.rec.timestamp) +
                           " is not a multiple of the sampling period");
    if (!series.empty() && row.rec.timestamp <= series.back().timestamp)
      throw IntegrityError("line " + std::to_string(row.line) + ": timestamps of turbine '" +
                           row.turbine + "' are not strictly increasing");
    series.push_back(std::move(row.rec));
  }
  return ds;
}

FarmDataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  CsvOptions opts = options;
  if (opts.farm_id.empty()) opts.farm_id = path.stem().string();
  auto ds = parse_csv(in, opts);
  const auto sidecar = ranges_sidecar_path(path);
  if (options.load_ranges_sidecar && std::filesystem::exists(sidecar))
    ds.normalization_ranges = load_ranges_json(sidecar, ds.signal_names);
  return ds;
}

void write_csv(std::ostream& out, const FarmDataset& ds, const std::vector<std::string>& comments) {
  for (const auto& c : comments) out << "# " << c << '\n';
  out << "timestamp,turbine_id";
  for (const auto& s : ds.signal_names) out << ',' << s;
  out << ",label\n";
  std::string buf;
  for (const auto& t : ds.turbines) {
    for (const auto& r : t.records) {
      buf.clear();
      buf += std::to_string(r.timestamp);
      buf += ',';
      buf += t.turbine_id;
      for (double v : r.signals) {
        buf += ',';
        append_double(buf, v);
      }
      buf += ',';
      if (r.label) buf += ds.label_vocab.at(*r.label);
      buf += '\n';
      out << buf;
    }
  }
}

std::filesystem::path ranges_sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".ranges.json");
  return p;
}

void save_csv(const std::filesystem::path& path, const FarmDataset& ds,
              const std::vector<std::string>& comments) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  write_csv(out, ds, comments);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
  if (ds.is_normalized()) save_ranges_json(ranges_sidecar_path(path), ds);
}

void save_ranges_json(const std::filesystem::path& path, const FarmDataset& ds) {
  nlohmann::ordered_json j;
  j["farm_id"] = ds.farm_id;
  auto& ranges = j["ranges"];
  ranges = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < ds.signal_names.size(); ++i)
    ranges[ds.signal_names[i]] = {{"min", ds.normalization_ranges.at(i).min},
                                  {"max", ds.normalization_ranges.at(i).max}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

std::vector<SignalRange> load_ranges_json(const std::filesystem::path& path,
                                          const std::vector<std::string>& signal_names) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
  std::vector<SignalRange> out;
  for (const auto& name : signal_names) {
    if (!j.contains("ranges") || !j["ranges"].contains(name))
      throw SchemaError(path.string() + " has no range for signal '" + name + "'");
    const auto& r = j["ranges"][name];
    out.push_back({r.at("min").get<double>(), r.at("max").get<double>()});
  }
  return out;
}

FarmDataset min_max_normalize(const FarmDataset& ds) {
  if (ds.empty()) throw InsufficientDataError("cannot normalize an empty dataset");
  const auto p = ds.signal_names.size();
  std::vector<SignalRange> ranges(p, {std::numeric_limits<double>::infinity(),
                                      -std::numeric_limits<double>::infinity()});
  for (const auto& t : ds.turbines)
    for (const auto& r : t.records)
      for (std::size_t s = 0; s < p; ++s) {
        ranges[s].min = std::min(ranges[s].min, r.signals[s]);
        ranges[s].max = std::max(ranges[s].max, r.signals[s]);
      }
  for (std::size_t s = 0; s < p; ++s)
    if (!(ranges[s].max > ranges[s].min)) throw DegenerateSignalError(ds.signal_names[s]);

  FarmDataset out = ds;
  for (auto& t : out.turbines)
    for (auto& r : t.records)
      for (std::size_t s = 0; s < p; ++s)
        r.signals[s] = (r.signals[s] - ranges[s].min) / (ranges[s].max - ranges[s].min);
  out.normalization_ranges = std::move(ranges);
  return out;
}

FarmDataset ensure_normalized(const FarmDataset& ds) {
  return ds.is_normalized() ? ds : min_max_normalize(ds);
}

FarmDataset denormalize(const FarmDataset& ds) {
  if (!ds.is_normalized()) throw IntegrityError("dataset '" + ds.farm_id + "' is not normalized");
  FarmDataset out = ds;
  for (auto& t : out.turbines)
    for (auto& r : t.records)
      for (std::size_t s = 0; s < r.signals.size(); ++s) {
        const auto& rg = ds.normalization_ranges[s];
        r.signals[s] = r.signals[s] * (rg.max - rg.min) + rg.min;
      }
  out.normalization_ranges.clear();
  return out;
}

FarmDataset select_signals(const FarmDataset& ds, const std::vector<std::string>& names) {
  std::vector<std::size_t> idx;
  idx.reserve(names.size());
  for (const auto& n : names) idx.push_back(ds.signal_index(n));
  FarmDataset out;
  out.farm_id = ds.farm_id;
  out.signal_names = names;
  out.label_vocab = ds.label_vocab;
  out.sampling_period = ds.sampling_period;
  if (ds.is_normalized())
    for (auto i : idx) out.normalization_ranges.push_back(ds.normalization_ranges[i]);
  out.turbines.reserve(ds.turbines.size());
  for (const auto& t : ds.turbines) {
    TurbineSeries ts{t.turbine_id, {}};
    ts.records.reserve(t.records.size());
    for (const auto& r : t.records) {
      ScadaRecord nr{r.timestamp, {}, r.label};
      nr.signals.reserve(idx.size());
      for (auto i : idx) nr.signals.push_back(r.signals[i]);
      ts.records.push_back(std::move(nr));
    }
    out.turbines.push_back(std::move(ts));
  }
  return out;
}

FarmDataset relabel(const FarmDataset& ds, const std::vector<std::string>& vocab) {
  std::vector<std::size_t> remap(ds.label_vocab.size());
  for (std::size_t i = 0; i < ds.label_vocab.size(); ++i) {
    const auto it = std::find(vocab.begin(), vocab.end(), ds.label_vocab[i]);
    if (it == vocab.end())
      throw VocabularyError("class '" + ds.label_vocab[i] + "' missing from target vocabulary");
    remap[i] = static_cast<std::size_t>(it - vocab.begin());
  }
  FarmDataset out = ds;
  out.label_vocab = vocab;
  for (auto& t : out.turbines)
    for (auto& r : t.records)
      if (r.label) r.label = remap[*r.label];
  return out;
}

std::vector<std::size_t> label_histogram(const FarmDataset& ds) {
  std::vector<std::size_t> h(ds.label_vocab.size(), 0);
  for (const auto& t : ds.turbines)
    for (const auto& r : t.records)
      if (r.label) ++h.at(*r.label);
  return h;
}

std::pair<FarmDataset, FarmDataset> split(const FarmDataset& ds, const SplitSpec& spec) {
  if (ds.empty()) throw InsufficientDataError("cannot split an empty dataset");
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0))
    throw ConfigError("test_fraction must lie in (0, 1)");
  if (spec.block_length == 0) throw ConfigError("block_length must be positive");

  FarmDataset train = ds, test = ds;
  train.turbines.clear();
  test.turbines.clear();
  for (const auto& t : ds.turbines) {
    const auto n = t.records.size();
    const auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(n)));
    std::mt19937_64 rng(mix_seed(spec.seed, fnv1a64(t.turbine_id)));
    std::vector<char> in_test(n, 0);
    if (spec.strategy == SplitStrategy::by_record) {
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t i = 0; i < n_test; ++i) in_test[order[i]] = 1;
    } else {
      const auto n_blocks = (n + spec.block_length - 1) / spec.block_length;
      std::vector<std::size_t> blocks(n_blocks);
      std::iota(blocks.begin(), blocks.end(), 0);
      std::shuffle(blocks.begin(), blocks.end(), rng);
      std::size_t taken = 0;
      for (auto b : blocks) {
        if (taken >= n_test) break;
        const auto begin = b * spec.block_length;
        const auto end = std::min(n, begin + spec.block_length);
        for (auto i = begin; i < end && taken < n_test; ++i, ++taken) in_test[i] = 1;
      }
    }
    TurbineSeries tr{t.turbine_id, {}}, te{t.turbine_id, {}};
    tr.records.reserve(n - n_test);
    te.records.reserve(n_test);
    for (std::size_t i = 0; i < n; ++i) (in_test[i] ? te : tr).records.push_back(t.records[i]);
    if (!tr.records.empty()) train.turbines.push_back(std::move(tr));
    if (!te.records.empty()) test.turbines.push_back(std::move(te));
  }
  return {std::move(train), std::move(test)};
}

std::string to_string(SplitStrategy s) {
  return s == SplitStrategy::by_record ? "by_record" : "by_contiguous_block";
}

SplitStrategy split_strategy_from_string(std::string_view s) {
  if (s == "by_record") return SplitStrategy::by_record;
  if (s == "by_contiguous_block") return SplitStrategy::by_contiguous_block;
  throw ConfigError("unknown split strategy '" + std::string(s) + "'");
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace windclf

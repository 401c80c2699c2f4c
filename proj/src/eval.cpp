#include "windclf/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "windclf/errors.hpp"

namespace windclf {

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

long percent(double x) { return std::lround(100.0 * x); }

}  // namespace

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < n_classes(); ++i) s += at(i, i);
  return s;
}

ConfusionMatrix confusion_matrix(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                                 const std::vector<std::string>& label_vocab) {
  if (truth.size() != predicted.size())
    throw ShapeError("score: " + std::to_string(truth.size()) + " true labels but " +
                     std::to_string(predicted.size()) + " predictions");
  const auto n = label_vocab.size();
  ConfusionMatrix cm{label_vocab, std::vector<std::uint64_t>(n * n, 0)};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= n || predicted[i] >= n) throw IndexError("label index out of range for the vocabulary");
    ++cm.counts[truth[i] * n + predicted[i]];
  }
  return cm;
}

AccuracyReport score(const ConfusionMatrix& cm) {
  AccuracyReport r;
  r.n = cm.total();
  r.overall = r.n ? static_cast<double>(cm.trace()) / static_cast<double>(r.n) : 0.0;
  double sum = 0.0;
  std::size_t supported = 0;
  for (std::size_t c = 0; c < cm.n_classes(); ++c) {
    ClassAccuracy a;
    a.name = cm.label_vocab[c];
    a.expected_to_transfer = a.name != kOtherClass;
    for (std::size_t p = 0; p < cm.n_classes(); ++p) a.support += cm.at(c, p);
    if (a.support) {
      a.recall = static_cast<double>(cm.at(c, c)) / static_cast<double>(a.support);
      sum += *a.recall;
      ++supported;
    }
    r.per_class.push_back(std::move(a));
  }
  if (supported) r.macro = sum / static_cast<double>(supported);
  return r;
}

AccuracyReport score(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                     const std::vector<std::string>& label_vocab) {
  return score(confusion_matrix(truth, predicted, label_vocab));
}

std::optional<double> macro_over(const AccuracyReport& r, const std::vector<std::string>& classes) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : r.per_class)
    if (c.recall && std::find(classes.begin(), classes.end(), c.name) != classes.end()) {
      sum += *c.recall;
      ++n;
    }
  if (!n) return std::nullopt;
  return sum / static_cast<double>(n);
}

Evaluation evaluate(const ModelBundle& m, const FarmDataset& ds) {
  const auto p = predict(m, ds);
  std::vector<std::size_t> truth, pred;
  for (std::size_t i = 0; i < p.eligible(); ++i)
    if (p.truth[i]) {
      truth.push_back(*p.truth[i]);
      pred.push_back(p.predicted[i]);
    }
  Evaluation e;
  e.confusion = confusion_matrix(truth, pred, m.label_vocab);
  e.report = score(e.confusion);
  e.eligible = p.eligible();
  e.total_records = p.total_records;
  return e;
}

std::vector<FarmDataset> unify_label_space(const std::vector<FarmDataset>& datasets) {
  std::vector<std::string> all;
  std::map<std::string, std::string> by_folded;
  for (const auto& ds : datasets)
    for (const auto& name : ds.label_vocab) {
      const auto [it, inserted] = by_folded.try_emplace(lower(name), name);
      if (!inserted && it->second != name)
        throw VocabularyError("class names '" + it->second + "' and '" + name + "' collide");
      all.push_back(name);
    }
  const auto vocab = canonical_vocab(all);
  std::vector<FarmDataset> out;
  out.reserve(datasets.size());
  for (const auto& ds : datasets) out.push_back(ds.label_vocab == vocab ? ds : relabel(ds, vocab));
  return out;
}

MixedDataset build_mixed(const std::vector<FarmDataset>& datasets, const std::string& reference_farm_id,
                         const MixOptions& options) {
  if (datasets.size() < 2) throw InsufficientDataError("a mixed data set needs at least two farms");
  const auto ref_it = std::find_if(datasets.begin(), datasets.end(),
                                   [&](const FarmDataset& d) { return d.farm_id == reference_farm_id; });
  if (ref_it == datasets.end()) throw ConfigError("reference farm '" + reference_farm_id + "' is not among the inputs");
  const auto ref_pos = static_cast<std::size_t>(ref_it - datasets.begin());
  const auto unified = unify_label_space(datasets);
  const auto& ref = unified[ref_pos];

  MixedDataset mixed;
  auto& out = mixed.data;
  out.farm_id = "mixed";
  out.signal_names = ref.signal_names;
  out.label_vocab = ref.label_vocab;
  out.sampling_period = ref.sampling_period;
  out.normalization_ranges.assign(ref.signal_names.size(), SignalRange{0.0, 1.0});

  std::map<std::string, int> seen;
  for (std::size_t i = 0; i < unified.size(); ++i) {
    const auto farm = ensure_normalized(select_signals(unified[i], ref.signal_names));
    if (farm.sampling_period != ref.sampling_period)
      throw SchemaError("farm '" + farm.farm_id + "' has a different sampling period");
    AlignmentParams a;
    a.reference_farm_id = ref.farm_id;
    a.source_farm_id = farm.farm_id;
    if (i != ref_pos) {
      a = fit_alignment(farm, ref, options.search);
      if (a.objective_value > options.objective_ceiling)
        throw AlignmentQualityError(farm.farm_id, a.objective_value, options.objective_ceiling);
    }
    const auto aligned = i == ref_pos ? farm : apply_alignment(farm, a);
    const int dup = seen[farm.farm_id]++;
    const auto prefix = dup ? farm.farm_id + "#" + std::to_string(dup) : farm.farm_id;
    for (const auto& t : aligned.turbines) out.turbines.push_back({prefix + "/" + t.turbine_id, t.records});
    mixed.alignments.push_back(a);
  }
  return mixed;
}

TransferMatrix transfer_experiment(const std::vector<FarmDataset>& train_farms,
                                   const std::vector<FarmDataset>& test_farms, const TransferOptions& options) {
  if (train_farms.empty() || test_farms.empty()) throw InsufficientDataError("transfer experiment needs farms");
  std::vector<FarmDataset> all(train_farms);
  all.insert(all.end(), test_farms.begin(), test_farms.end());
  for (auto& d : all) d = ensure_normalized(d);
  all = unify_label_space(all);
  const std::vector<FarmDataset> train(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(train_farms.size()));
  const std::vector<FarmDataset> test(all.begin() + static_cast<std::ptrdiff_t>(train_farms.size()), all.end());

  TransferMatrix t;
  t.label_vocab = all.front().label_vocab;
  for (const auto& d : train) t.train_farms.push_back(d.farm_id);
  for (const auto& d : test) t.test_farms.push_back(d.farm_id);
  const auto strategy = options.split_strategy.value_or(
      options.model.kind == ModelKind::cnn ? SplitStrategy::by_contiguous_block : SplitStrategy::by_record);
  t.config = {{"model", to_json(options.model)},
              {"align_test_to_train", options.align_test_to_train},
              {"test_fraction", options.test_fraction},
              {"split_strategy", to_string(strategy)},
              {"seed", options.seed}};

  for (const auto& tr : train) {
    const auto farm_salt = fnv1a64(tr.farm_id);
    SplitSpec spec;
    spec.test_fraction = options.test_fraction;
    spec.strategy = strategy;
    spec.seed = mix_seed(options.seed, farm_salt);
    const auto [train_part, test_part] = split(tr, spec);
    auto config = options.model;
    config.seed = mix_seed(options.seed, farm_salt ^ 0x5bd1e995u);
    const auto bundle = train_model(config, train_part);

    for (const auto& te : test) {
      TransferCell cell;
      cell.train_farm = tr.farm_id;
      cell.test_farm = te.farm_id;
      cell.in_farm = te.farm_id == tr.farm_id;
      Evaluation e;
      if (cell.in_farm) {
        e = evaluate(bundle, test_part);
      } else if (options.align_test_to_train) {
        cell.alignment = fit_alignment(te, tr, options.search);
        e = evaluate(bundle, apply_alignment(te, *cell.alignment));
      } else {
        e = evaluate(bundle, te);
      }
      cell.report = std::move(e.report);
      cell.confusion = std::move(e.confusion);
      cell.eligible = e.eligible;
      cell.total_records = e.total_records;
      t.cells.push_back(std::move(cell));
    }
  }
  return t;
}

std::string format_cell(const AccuracyReport& r) {
  std::ostringstream s;
  s << (r.n ? std::to_string(percent(r.overall)) : std::string("-")) << '(';
  for (std::size_t i = 0; i < r.per_class.size(); ++i) {
    if (i) s << ',';
    const auto& c = r.per_class[i];
    s << (c.recall ? std::to_string(percent(*c.recall)) : std::string("-"));
  }
  s << ')';
  return s.str();
}

void write_transfer_table(std::ostream& out, const TransferMatrix& t, const std::vector<std::string>& comments) {
  for (const auto& c : comments) out << "# " << c << '\n';
  std::vector<std::vector<std::string>> grid;
  grid.push_back({"train \\ test"});
  for (const auto& f : t.test_farms) grid.front().push_back(f);
  for (std::size_t i = 0; i < t.train_farms.size(); ++i) {
    std::vector<std::string> row{t.train_farms[i]};
    for (std::size_t j = 0; j < t.test_farms.size(); ++j) {
      const auto& cell = t.cell(i, j);
      row.push_back(format_cell(cell.report) + (cell.in_farm ? "*" : ""));
    }
    grid.push_back(std::move(row));
  }
  std::vector<std::size_t> width(grid.front().size(), 0);
  for (const auto& row : grid)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  for (const auto& row : grid) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << std::left << std::setw(static_cast<int>(width[c])) << row[c];
      out << (c + 1 < row.size() ? "  " : "\n");
    }
  }
  out << "\ncolumns: overall(";
  for (std::size_t i = 0; i < t.label_vocab.size(); ++i) out << (i ? "," : "") << t.label_vocab[i];
  out << ") in percent; '-' marks classes absent from the test data; '*' marks held-out in-farm cells\n";
  out << "class 'other' mixes heterogeneous faults and is not expected to transfer\n";
}

nlohmann::json to_json(const AccuracyReport& r) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& c : r.per_class)
    per.push_back({{"class", c.name},
                   {"recall", c.recall ? nlohmann::json(*c.recall) : nlohmann::json(nullptr)},
                   {"support", c.support},
                   {"expected_to_transfer", c.expected_to_transfer}});
  return {{"overall_accuracy", r.overall},
          {"macro_accuracy", r.macro ? nlohmann::json(*r.macro) : nlohmann::json(nullptr)},
          {"n", r.n},
          {"per_class", per}};
}

nlohmann::json to_json(const TransferMatrix& t) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : t.cells) {
    nlohmann::json j{{"train_farm", c.train_farm},
                     {"test_farm", c.test_farm},
                     {"in_farm", c.in_farm},
                     {"eligible_records", c.eligible},
                     {"total_records", c.total_records},
                     {"report", to_json(c.report)},
                     {"confusion", c.confusion.counts}};
    j["alignment"] = c.alignment ? to_json(*c.alignment) : nlohmann::json(nullptr);
    cells.push_back(std::move(j));
  }
  return {{"train_farms", t.train_farms},
          {"test_farms", t.test_farms},
          {"label_vocab", t.label_vocab},
          {"config", t.config},
          {"cells", cells}};
}

void write_confusion_csv(std::ostream& out, const ConfusionMatrix& cm, const std::vector<std::string>& comments) {
  for (const auto& c : comments) out << "# " << c << '\n';
  out << "true\\predicted";
  for (const auto& n : cm.label_vocab) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < cm.n_classes(); ++i) {
    out << cm.label_vocab[i];
    for (std::size_t j = 0; j < cm.n_classes(); ++j) out << ',' << cm.at(i, j);
    out << '\n';
  }
}

}  // namespace windclf

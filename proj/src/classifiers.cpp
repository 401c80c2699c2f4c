#include "windclf/classifiers.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "windclf/binary_io.hpp"
#include "windclf/errors.hpp"

namespace windclf {

namespace {

constexpr char kBundleMagic[8] = {'W', 'C', 'M', 'O', 'D', 'E', 'L', '1'};
constexpr std::size_t kLeafSize = 16;

double squared_distance(const double* a, const double* b, std::size_t dims) {
  double s = 0.0;
  for (std::size_t d = 0; d < dims; ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

// Feature rows for ffn / knn: selected signals of every record, dataset order.
struct RecordFeatures {
  std::vector<double> x;
  std::vector<std::size_t> turbine_index, record_index;
  std::vector<std::optional<std::size_t>> label;
};

RecordFeatures record_features(const FarmDataset& ds, const std::vector<std::string>& signals, bool labeled_only) {
  std::vector<std::size_t> cols;
  for (const auto& s : signals) cols.push_back(ds.signal_index(s));
  RecordFeatures f;
  for (std::size_t t = 0; t < ds.turbines.size(); ++t) {
    const auto& recs = ds.turbines[t].records;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      if (labeled_only && !recs[i].label) continue;
      for (auto c : cols) f.x.push_back(recs[i].signals[c]);
      f.turbine_index.push_back(t);
      f.record_index.push_back(i);
      f.label.push_back(recs[i].label);
    }
  }
  return f;
}

RecordFeatures window_features(const FarmDataset& ds, const WindowSpec& spec, bool labeled_only) {
  RecordFeatures f;
  for (std::size_t t = 0; t < ds.turbines.size(); ++t) {
    // One turbine at a time keeps the intermediate sample list small.
    FarmDataset one = ds;
    one.turbines = {ds.turbines[t]};
    for (const auto& s : make_windows(one, spec, !labeled_only)) {
      f.x.insert(f.x.end(), s.matrix.begin(), s.matrix.end());
      f.turbine_index.push_back(t);
      f.record_index.push_back(s.record_index);
      f.label.push_back(s.label);
    }
  }
  return f;
}

std::vector<std::size_t> label_map(const std::vector<std::string>& from, const std::vector<std::string>& to) {
  std::vector<std::size_t> map;
  for (const auto& name : from) {
    const auto it = std::find(to.begin(), to.end(), name);
    if (it == to.end()) throw VocabularyError("label '" + name + "' is not in the model vocabulary");
    map.push_back(static_cast<std::size_t>(it - to.begin()));
  }
  return map;
}

}  // namespace

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::knn: return "knn";
    case ModelKind::ffn: return "ffn";
    case ModelKind::cnn: return "cnn";
  }
  return "knn";
}

ModelKind model_kind_from_string(std::string_view s) {
  if (s == "knn") return ModelKind::knn;
  if (s == "ffn") return ModelKind::ffn;
  if (s == "cnn") return ModelKind::cnn;
  throw ConfigError("unknown model kind '" + std::string(s) + "'");
}

KnnModel::KnnModel(std::size_t k, std::size_t dims, std::vector<double> points, std::vector<std::size_t> labels,
                   std::size_t n_classes)
    : k_(k), dims_(dims), n_classes_(n_classes), points_(std::move(points)), labels_(std::move(labels)) {
  if (k_ == 0) throw ConfigError("knn k must be positive");
  if (dims_ == 0) throw ShapeError("knn needs at least one feature");
  if (points_.size() != labels_.size() * dims_) throw ShapeError("knn point matrix does not match label count");
  if (labels_.size() < k_)
    throw InsufficientDataError("knn needs at least k = " + std::to_string(k_) + " training points, got " +
                                std::to_string(labels_.size()));
  for (auto l : labels_)
    if (l >= n_classes_) throw IndexError("knn label " + std::to_string(l) + " out of range");
  order_.resize(labels_.size());
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * labels_.size() / kLeafSize + 2);
  build(0, order_.size());
}

std::size_t KnnModel::build(std::size_t lo, std::size_t hi) {
  const std::size_t id = nodes_.size();
  nodes_.push_back({lo, hi});
  if (hi - lo <= kLeafSize) return id;

  std::size_t best_dim = 0;
  double best_spread = -1.0;
  for (std::size_t d = 0; d < dims_; ++d) {
    double mn = points_[order_[lo] * dims_ + d], mx = mn;
    for (std::size_t i = lo + 1; i < hi; ++i) {
      const double v = points_[order_[i] * dims_ + d];
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    if (mx - mn > best_spread) {
      best_spread = mx - mn;
      best_dim = d;
    }
  }
  if (best_spread <= 0.0) return id;  // all points coincide

  const std::size_t mid = lo + (hi - lo) / 2;
  auto less = [&](std::size_t a, std::size_t b) {
    const double va = points_[a * dims_ + best_dim], vb = points_[b * dims_ + best_dim];
    return va < vb || (va == vb && a < b);
  };
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(lo), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(hi), less);
  const double split = points_[order_[mid] * dims_ + best_dim];
  const auto left = build(lo, mid);
  const auto right = build(mid, hi);
  nodes_[id].left = left;
  nodes_[id].right = right;
  nodes_[id].dim = best_dim;
  nodes_[id].split = split;
  return id;
}

void KnnModel::search(std::size_t node_id, std::span<const double> x, std::vector<Candidate>& heap) const {
  const Node& node = nodes_[node_id];
  if (node.left == 0) {
    for (std::size_t i = node.lo; i < node.hi; ++i) {
      const auto idx = order_[i];
      const Candidate c{squared_distance(x.data(), &points_[idx * dims_], dims_), idx};
      if (heap.size() < k_) {
        heap.push_back(c);
        std::push_heap(heap.begin(), heap.end());
      } else if (c < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = c;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    return;
  }
  // Left holds values <= split, right values >= split.
  const double diff = x[node.dim] - node.split;
  const bool go_left = diff < 0.0;
  search(go_left ? node.left : node.right, x, heap);
  const double bound = diff * diff;
  // A tie at the bound can still win on index, so only prune strictly.
  if (heap.size() < k_ || !(bound > heap.front().dist)) search(go_left ? node.right : node.left, x, heap);
}

std::vector<std::size_t> KnnModel::neighbors(std::span<const double> x) const {
  if (x.size() != dims_)
    throw ShapeError("knn query has " + std::to_string(x.size()) + " features, model expects " + std::to_string(dims_));
  if (nodes_.empty()) throw InsufficientDataError("knn model is empty");
  std::vector<Candidate> heap;
  heap.reserve(k_);
  search(0, x, heap);
  std::sort_heap(heap.begin(), heap.end());
  std::vector<std::size_t> out;
  out.reserve(heap.size());
  for (const auto& c : heap) out.push_back(c.index);
  return out;
}

std::vector<double> KnnModel::predict_proba(std::span<const double> x) const {
  std::vector<std::size_t> counts(n_classes_, 0);
  for (auto idx : neighbors(x)) ++counts[labels_[idx]];
  std::vector<double> p(n_classes_);
  for (std::size_t c = 0; c < n_classes_; ++c) p[c] = static_cast<double>(counts[c]) / static_cast<double>(k_);
  return p;
}

std::vector<double> knn_predict_proba(const KnnModel& m, std::span<const double> x) { return m.predict_proba(x); }

std::size_t argmax(std::span<const double> p) {
  if (p.empty()) throw ShapeError("argmax of an empty vector");
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

std::vector<std::string> default_signals(ModelKind k) {
  if (k == ModelKind::cnn)
    return {std::string(signals::wind_speed), std::string(signals::power), std::string(signals::rotor_speed),
            std::string(signals::pitch)};
  return {std::string(signals::wind_speed), std::string(signals::power), std::string(signals::pitch)};
}

std::vector<std::string> ModelConfig::resolved_signals() const {
  return signals.empty() ? default_signals(kind) : signals;
}

std::size_t ModelConfig::resolved_epochs() const {
  if (epochs) return epochs;
  return kind == ModelKind::cnn ? 30 : 50;
}

WindowSpec ModelConfig::window() const { return {window_half_width, window_mode, resolved_signals()}; }

nlohmann::json to_json(const ModelConfig& c) {
  nlohmann::json j{{"kind", to_string(c.kind)},
                   {"signals", c.resolved_signals()},
                   {"epochs", c.resolved_epochs()},
                   {"batch_size", c.batch_size},
                   {"learning_rate", c.learning_rate},
                   {"seed", c.seed}};
  switch (c.kind) {
    case ModelKind::knn: j["k"] = c.knn_k; break;
    case ModelKind::ffn: j["hidden"] = c.ffn_hidden; break;
    case ModelKind::cnn:
      j["conv_channels"] = c.cnn_channels;
      j["kernel_width"] = c.cnn_kernel;
      j["head_hidden"] = c.cnn_head;
      j["window"] = {{"half_width", c.window_half_width}, {"mode", to_string(c.window_mode)}};
      break;
  }
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.kind = model_kind_from_string(j.at("kind").get<std::string>());
    c.signals = j.value("signals", c.signals);
    c.knn_k = j.value("k", c.knn_k);
    c.ffn_hidden = j.value("hidden", c.ffn_hidden);
    c.cnn_channels = j.value("conv_channels", c.cnn_channels);
    c.cnn_kernel = j.value("kernel_width", c.cnn_kernel);
    c.cnn_head = j.value("head_hidden", c.cnn_head);
    if (j.contains("window")) {
      const auto& w = j.at("window");
      c.window_half_width = w.value("half_width", c.window_half_width);
      if (w.contains("mode")) c.window_mode = window_mode_from_string(w.at("mode").get<std::string>());
    }
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
    for (auto h : c.ffn_hidden)
      if (h == 0) throw ConfigError("model.hidden sizes must be >= 1");
    if (c.batch_size == 0) throw ConfigError("model.batch_size must be positive");
    if (!(c.learning_rate > 0.0)) throw ConfigError("model.learning_rate must be positive");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid model config: ") + e.what());
  }
}

ModelBundle train_model(const ModelConfig& config, const FarmDataset& train_ds, std::optional<AlignmentParams> alignment) {
  if (!train_ds.is_normalized()) throw SchemaError("training data must be min-max normalized");
  ModelBundle m;
  m.kind = config.kind;
  m.signal_names = config.resolved_signals();
  m.label_vocab = train_ds.label_vocab;
  m.alignment = std::move(alignment);
  m.window = config.window();
  const auto n_classes = m.label_vocab.size();

  const auto f = config.kind == ModelKind::cnn ? window_features(train_ds, m.window, true)
                                               : record_features(train_ds, m.signal_names, true);
  std::vector<std::size_t> labels;
  labels.reserve(f.label.size());
  for (const auto& l : f.label) labels.push_back(*l);
  if (labels.empty()) throw InsufficientDataError("no labeled training samples in farm '" + train_ds.farm_id + "'");

  auto& meta = m.metadata;
  meta.seed = config.seed;
  meta.n_train = labels.size();
  meta.class_support.assign(n_classes, 0);
  for (auto l : labels) ++meta.class_support[l];
  for (std::size_t c = 0; c < n_classes; ++c)
    if (meta.class_support[c] == 0) meta.warnings.push_back("class '" + m.label_vocab[c] + "' absent from training data");

  const auto p = m.signal_names.size();
  switch (config.kind) {
    case ModelKind::knn:
      m.knn = KnnModel(config.knn_k, p, f.x, labels, n_classes);
      break;
    case ModelKind::ffn:
    case ModelKind::cnn: {
      m.network = config.kind == ModelKind::ffn
                      ? nn::make_ffn(p, config.ffn_hidden, n_classes)
                      : nn::make_cnn(p, m.window.width(), config.cnn_channels, config.cnn_kernel, config.cnn_head, n_classes);
      m.network.initialize(mix_seed(config.seed, 1));
      nn::TrainOptions opt;
      opt.epochs = config.resolved_epochs();
      opt.batch_size = config.batch_size;
      opt.learning_rate = config.learning_rate;
      opt.seed = mix_seed(config.seed, 2);
      meta.epochs = opt.epochs;
      meta.batch_size = opt.batch_size;
      meta.learning_rate = opt.learning_rate;
      meta.loss_history = nn::train(m.network, f.x, labels, opt);
      break;
    }
  }
  return m;
}

Predictions predict(const ModelBundle& m, const FarmDataset& ds) {
  for (const auto& s : m.signal_names)
    if (!ds.find_signal(s)) throw SchemaError("dataset '" + ds.farm_id + "' lacks model signal '" + s + "'");
  const auto f = m.kind == ModelKind::cnn ? window_features(ds, m.window, false)
                                          : record_features(ds, m.signal_names, false);
  const auto vocab_map = label_map(ds.label_vocab, m.label_vocab);

  Predictions out;
  out.n_classes = m.label_vocab.size();
  out.total_records = ds.size();
  out.turbine_index = f.turbine_index;
  out.record_index = f.record_index;
  const auto n = f.label.size();
  for (const auto& l : f.label) out.truth.push_back(l ? std::optional<std::size_t>(vocab_map[*l]) : std::nullopt);

  if (m.kind == ModelKind::knn) {
    const auto p = m.knn.dims();
    out.probabilities.reserve(n * out.n_classes);
    for (std::size_t i = 0; i < n; ++i) {
      const auto pr = m.knn.predict_proba({&f.x[i * p], p});
      out.probabilities.insert(out.probabilities.end(), pr.begin(), pr.end());
    }
  } else if (n > 0) {
    out.probabilities = nn::predict_proba(m.network, f.x, n);
  }
  out.predicted.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.predicted.push_back(argmax(out.proba(i)));
  return out;
}

// Bundle file: magic, u64 header length, JSON header, then the blob of
// little-endian doubles addressed by the header's offset table.
void save_bundle(std::ostream& out, const ModelBundle& m) {
  nlohmann::json header{{"kind", to_string(m.kind)},
                        {"signal_names", m.signal_names},
                        {"label_vocab", m.label_vocab},
                        {"provenance", m.provenance}};
  header["alignment"] = m.alignment ? to_json(*m.alignment) : nlohmann::json(nullptr);
  const auto& meta = m.metadata;
  header["metadata"] = {{"seed", meta.seed},
                        {"epochs", meta.epochs},
                        {"batch_size", meta.batch_size},
                        {"learning_rate", meta.learning_rate},
                        {"n_train", meta.n_train},
                        {"loss_history", meta.loss_history},
                        {"class_support", meta.class_support},
                        {"warnings", meta.warnings}};

  std::vector<std::pair<std::string, std::span<const double>>> blocks;
  std::vector<double> knn_labels;
  if (m.kind == ModelKind::knn) {
    header["knn"] = {{"k", m.knn.k()}, {"dims", m.knn.dims()}, {"n", m.knn.size()}, {"n_classes", m.knn.n_classes()}};
    knn_labels.assign(m.knn.labels().begin(), m.knn.labels().end());
    blocks.emplace_back("points", m.knn.points());
    blocks.emplace_back("labels", knn_labels);
  } else {
    header["architecture"] = m.network.architecture();
    if (m.kind == ModelKind::cnn)
      header["window"] = {{"half_width", m.window.half_width}, {"mode", to_string(m.window.mode)}};
    const auto names = m.network.parameter_names();
    const auto params = m.network.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) blocks.emplace_back(names[i], params[i]);
  }
  nlohmann::json table = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, data] : blocks) {
    table.push_back({{"name", name}, {"offset", offset}, {"length", data.size()}});
    offset += data.size();
  }
  header["blob"] = table;

  const auto text = header.dump();
  out.write(kBundleMagic, sizeof(kBundleMagic));
  binary::write<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, data] : blocks)
    for (double v : data) binary::write<double>(out, v);
  if (!out) throw IoError("failed to write model bundle");
}

void save_bundle(const std::filesystem::path& path, const ModelBundle& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  save_bundle(out, m);
}

ModelBundle load_bundle(std::istream& in) {
  char magic[sizeof(kBundleMagic)];
  if (!in.read(magic, sizeof(magic)) || !std::equal(magic, magic + sizeof(magic), kBundleMagic))
    throw IoError("not a model bundle (bad magic)");
  const auto len = binary::read<std::uint64_t>(in);
  if (len > (1u << 30)) throw IoError("model bundle header length out of range");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw IoError("truncated model bundle header");

  try {
    const auto header = nlohmann::json::parse(text);
    ModelBundle m;
    m.kind = model_kind_from_string(header.at("kind").get<std::string>());
    m.signal_names = header.at("signal_names").get<std::vector<std::string>>();
    m.label_vocab = header.at("label_vocab").get<std::vector<std::string>>();
    m.provenance = header.value("provenance", nlohmann::json::object());
    if (!header.at("alignment").is_null()) m.alignment = alignment_from_json(header.at("alignment"));
    const auto& meta = header.at("metadata");
    m.metadata.seed = meta.at("seed").get<std::uint64_t>();
    m.metadata.epochs = meta.at("epochs").get<std::size_t>();
    m.metadata.batch_size = meta.at("batch_size").get<std::size_t>();
    m.metadata.learning_rate = meta.at("learning_rate").get<double>();
    m.metadata.n_train = meta.at("n_train").get<std::size_t>();
    m.metadata.loss_history = meta.at("loss_history").get<std::vector<double>>();
    m.metadata.class_support = meta.at("class_support").get<std::vector<std::size_t>>();
    m.metadata.warnings = meta.at("warnings").get<std::vector<std::string>>();

    std::size_t total = 0;
    for (const auto& b : header.at("blob")) total = std::max(total, b.at("offset").get<std::size_t>() + b.at("length").get<std::size_t>());
    std::vector<double> blob(total);
    for (auto& v : blob) v = binary::read<double>(in);
    auto block = [&](std::size_t i) {
      const auto& b = header.at("blob").at(i);
      const auto off = b.at("offset").get<std::size_t>();
      return std::span<const double>(blob.data() + off, b.at("length").get<std::size_t>());
    };

    if (m.kind == ModelKind::knn) {
      const auto& k = header.at("knn");
      const auto points = block(0);
      const auto labels = block(1);
      std::vector<std::size_t> lab;
      lab.reserve(labels.size());
      for (double v : labels) lab.push_back(static_cast<std::size_t>(v));
      m.knn = KnnModel(k.at("k").get<std::size_t>(), k.at("dims").get<std::size_t>(),
                       std::vector<double>(points.begin(), points.end()), std::move(lab),
                       k.at("n_classes").get<std::size_t>());
    } else {
      m.network = nn::Network::from_architecture(header.at("architecture"));
      auto params = m.network.parameters();
      if (params.size() != header.at("blob").size()) throw IoError("model bundle parameter table does not match architecture");
      for (std::size_t i = 0; i < params.size(); ++i) {
        const auto b = block(i);
        if (b.size() != params[i].size()) throw IoError("model bundle parameter block has the wrong length");
        std::copy(b.begin(), b.end(), params[i].begin());
      }
      if (m.kind == ModelKind::cnn) {
        const auto& w = header.at("window");
        m.window = {w.at("half_width").get<std::size_t>(), window_mode_from_string(w.at("mode").get<std::string>()),
                    m.signal_names};
      }
    }
    if (m.kind != ModelKind::cnn) m.window.signal_names = m.signal_names;
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("invalid model bundle header: ") + e.what());
  }
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return load_bundle(in);
}

}  // namespace windclf

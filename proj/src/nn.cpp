#include "windclf/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "windclf/errors.hpp"

namespace windclf::nn {

namespace {

std::string shape_string(std::span<const std::size_t> shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

inline void apply_activation(Activation a, std::span<double> v) {
  if (a == Activation::relu)
    for (auto& x : v) x = x > 0.0 ? x : 0.0;
}

inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

// Batched kernels on raw buffers. `x` holds `batch` samples back to back.
void dense_batch(const DenseLayer& L, const double* x, std::size_t batch, double* y) {
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xb = x + b * L.in;
    double* yb = y + b * L.out;
    for (std::size_t o = 0; o < L.out; ++o) yb[o] = L.biases[o] + dot(&L.weights[o * L.in], xb, L.in);
    apply_activation(L.activation, {yb, L.out});
  }
}

// patches[t] holds the in_channels x kernel_width block under output position
// t, laid out like one kernel, so each output is a single dot product.
void im2col(const double* xb, std::size_t channels, std::size_t width, std::size_t kw, double* patches) {
  const std::size_t ow = width - kw + 1, plen = channels * kw;
  for (std::size_t t = 0; t < ow; ++t)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t k = 0; k < kw; ++k) patches[t * plen + c * kw + k] = xb[c * width + t + k];
}

void conv_batch(const Conv1DLayer& L, const double* x, std::size_t batch, std::size_t width, double* y) {
  const std::size_t kw = L.kernel_width, ow = width - kw + 1, plen = L.in_channels * kw;
  std::vector<double> patches(ow * plen);
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(x + b * L.in_channels * width, L.in_channels, width, kw, patches.data());
    double* yb = y + b * L.out_channels * ow;
    for (std::size_t o = 0; o < L.out_channels; ++o) {
      const double* kern = &L.kernels[o * plen];
      for (std::size_t t = 0; t < ow; ++t) yb[o * ow + t] = L.biases[o] + dot(kern, &patches[t * plen], plen);
    }
    apply_activation(L.activation, {yb, L.out_channels * ow});
  }
}

std::size_t batch_of(const Tensor& x, std::size_t sample_rank, const char* what) {
  if (x.shape.size() == sample_rank) return 1;
  if (x.shape.size() == sample_rank + 1) return x.shape[0];
  throw ShapeError(std::string(what) + ": unexpected input shape " + shape_string(x.shape));
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
  if (shape_product(shape) != data.size())
    throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_string(shape));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  const auto n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

std::size_t shape_product(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

Activation activation_from_string(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

DenseLayer make_dense(std::size_t in, std::size_t out, Activation a) {
  if (in == 0 || out == 0) throw ShapeError("dense layer sizes must be positive");
  return {in, out, std::vector<double>(in * out, 0.0), std::vector<double>(out, 0.0), a};
}

Conv1DLayer make_conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_width, Activation a) {
  if (in_channels == 0 || out_channels == 0) throw ShapeError("conv layer channel counts must be positive");
  if (kernel_width == 0 || kernel_width % 2 == 0) throw ShapeError("conv kernel width must be odd");
  return {in_channels, out_channels, kernel_width,
          std::vector<double>(out_channels * in_channels * kernel_width, 0.0),
          std::vector<double>(out_channels, 0.0), a};
}

Tensor dense_forward(const DenseLayer& layer, const Tensor& x) {
  if (x.shape.empty() || x.shape.back() != layer.in)
    throw ShapeError("dense_forward: input shape " + shape_string(x.shape) + " does not end in " +
                     std::to_string(layer.in));
  const auto batch = batch_of(x, 1, "dense_forward");
  Tensor y = Tensor::zeros(x.shape.size() == 1 ? std::vector<std::size_t>{layer.out}
                                               : std::vector<std::size_t>{batch, layer.out});
  dense_batch(layer, x.data.data(), batch, y.data.data());
  return y;
}

Tensor conv1d_forward(const Conv1DLayer& layer, const Tensor& x) {
  const auto batch = batch_of(x, 2, "conv1d_forward");
  const auto rank = x.shape.size();
  const auto channels = x.shape[rank - 2], width = x.shape[rank - 1];
  if (channels != layer.in_channels)
    throw ShapeError("conv1d_forward: expected " + std::to_string(layer.in_channels) + " input channels, got " +
                     std::to_string(channels));
  if (width < layer.kernel_width)
    throw ShapeError("conv1d_forward: width " + std::to_string(width) + " is below kernel width " +
                     std::to_string(layer.kernel_width));
  const auto ow = width - layer.kernel_width + 1;
  Tensor y = Tensor::zeros(rank == 2 ? std::vector<std::size_t>{layer.out_channels, ow}
                                     : std::vector<std::size_t>{batch, layer.out_channels, ow});
  conv_batch(layer, x.data.data(), batch, width, y.data.data());
  return y;
}

Tensor softmax(const Tensor& logits) {
  if (logits.shape.empty() || logits.shape.size() > 2) throw ShapeError("softmax expects [n] or [batch, n]");
  const auto n = logits.shape.back();
  Tensor out = logits;
  for (std::size_t off = 0; off < out.data.size(); off += n) {
    double* row = out.data.data() + off;
    const double m = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (row[j] = std::exp(row[j] - m));
    for (std::size_t j = 0; j < n; ++j) row[j] /= z;
  }
  return out;
}

CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  if (logits.shape.size() != 2) throw ShapeError("softmax_cross_entropy expects [batch, n_classes] logits");
  const auto batch = logits.shape[0], n = logits.shape[1];
  if (targets.size() != batch) throw ShapeError("softmax_cross_entropy: target count does not match batch");
  for (auto t : targets)
    if (t >= n) throw IndexError("target class " + std::to_string(t) + " out of range for " + std::to_string(n) + " classes");

  CrossEntropy ce;
  ce.grad_logits = Tensor::zeros({batch, n});
  const double inv_batch = 1.0 / static_cast<double>(batch);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* z = &logits.data[b * n];
    double* g = &ce.grad_logits.data[b * n];
    const double m = *std::max_element(z, z + n);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += (g[j] = std::exp(z[j] - m));
    total += std::log(sum) - (z[targets[b]] - m);
    for (std::size_t j = 0; j < n; ++j) g[j] = g[j] / sum * inv_batch;
    g[targets[b]] -= inv_batch;
  }
  ce.loss = total * inv_batch;
  return ce;
}

struct Network::Trace {
  std::size_t batch = 0;
  std::vector<std::vector<double>> acts;  // acts[0] input, acts[l + 1] output of layer l
};

Network::Network(std::vector<std::size_t> input_shape, std::vector<Layer> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  if (input_shape_.empty() || input_shape_.size() > 2) throw ShapeError("network input must be [features] or [channels, width]");
  if (layers_.empty()) throw ShapeError("network needs at least one layer");
  bool in_conv = input_shape_.size() == 2;
  std::size_t channels = in_conv ? input_shape_[0] : 0;
  std::size_t width = in_conv ? input_shape_[1] : 0;
  std::size_t features = shape_product(input_shape_);
  for (const auto& layer : layers_) {
    layer_input_sizes_.push_back(features);
    if (const auto* c = std::get_if<Conv1DLayer>(&layer)) {
      if (!in_conv) throw ShapeError("conv layers must precede dense layers and need a [channels, width] input");
      if (c->in_channels != channels) throw ShapeError("conv layer expects " + std::to_string(c->in_channels) +
                                                       " channels, receives " + std::to_string(channels));
      if (width < c->kernel_width) throw ShapeError("window width " + std::to_string(width) + " is below kernel width");
      layer_widths_.push_back(width);
      width = width - c->kernel_width + 1;
      channels = c->out_channels;
      features = channels * width;
    } else {
      const auto& d = std::get<DenseLayer>(layer);
      in_conv = false;
      layer_widths_.push_back(0);
      if (d.in != features) throw ShapeError("dense layer expects " + std::to_string(d.in) + " inputs, receives " +
                                             std::to_string(features));
      features = d.out;
    }
  }
  output_size_ = features;
}

std::vector<std::span<double>> Network::parameters() {
  std::vector<std::span<double>> out;
  for (auto& layer : layers_)
    std::visit(
        [&](auto& l) {
          if constexpr (std::is_same_v<std::decay_t<decltype(l)>, Conv1DLayer>)
            out.emplace_back(l.kernels);
          else
            out.emplace_back(l.weights);
          out.emplace_back(l.biases);
        },
        layer);
  return out;
}

std::vector<std::span<const double>> Network::parameters() const {
  auto spans = const_cast<Network*>(this)->parameters();
  return {spans.begin(), spans.end()};
}

std::vector<std::string> Network::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l) + (std::holds_alternative<Conv1DLayer>(layers_[l]) ? ".kernels" : ".weights");
    names.push_back(prefix);
    names.push_back("layer" + std::to_string(l) + ".biases");
  }
  return names;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.size();
  return n;
}

void Network::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& layer : layers_)
    std::visit(
        [&](auto& l) {
          std::vector<double>* w;
          std::size_t fan_in;
          if constexpr (std::is_same_v<std::decay_t<decltype(l)>, Conv1DLayer>) {
            w = &l.kernels;
            fan_in = l.in_channels * l.kernel_width;
          } else {
            w = &l.weights;
            fan_in = l.in;
          }
          const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
          std::uniform_real_distribution<double> dist(-limit, limit);
          for (auto& v : *w) v = dist(rng);
          std::fill(l.biases.begin(), l.biases.end(), 0.0);
        },
        layer);
}

void Network::run(std::span<const double> x, std::size_t batch, std::size_t from_layer, Trace& trace) const {
  if (from_layer == 0) {
    trace.batch = batch;
    trace.acts.resize(layers_.size() + 1);
    trace.acts[0].assign(x.begin(), x.end());
  }
  for (std::size_t l = from_layer; l < layers_.size(); ++l) {
    const auto& in = trace.acts[l];
    auto& out = trace.acts[l + 1];
    const auto out_size = l + 1 < layers_.size() ? layer_input_sizes_[l + 1] : output_size_;
    out.resize(batch * out_size);
    if (const auto* c = std::get_if<Conv1DLayer>(&layers_[l]))
      conv_batch(*c, in.data(), batch, layer_widths_[l], out.data());
    else
      dense_batch(std::get<DenseLayer>(layers_[l]), in.data(), batch, out.data());
  }
}

Tensor Network::forward(const Tensor& x) const {
  const auto per = input_size();
  if (x.shape.size() != input_shape_.size() + 1 ||
      !std::equal(input_shape_.begin(), input_shape_.end(), x.shape.begin() + 1))
    throw ShapeError("network input " + shape_string(x.shape) + " does not match [batch]" + shape_string(input_shape_));
  const auto batch = x.data.size() / per;
  Trace tr;
  run(x.data, batch, 0, tr);
  return Tensor({batch, output_size_}, std::move(tr.acts.back()));
}

Gradients Network::backward(const Tensor& x, std::span<const std::size_t> targets) const {
  if (x.shape.size() != input_shape_.size() + 1 ||
      !std::equal(input_shape_.begin(), input_shape_.end(), x.shape.begin() + 1))
    throw ShapeError("network input " + shape_string(x.shape) + " does not match [batch]" + shape_string(input_shape_));
  const auto batch = x.shape[0];
  Trace tr;
  run(x.data, batch, 0, tr);
  const auto ce = softmax_cross_entropy(Tensor({batch, output_size_}, tr.acts.back()), targets);

  Gradients g;
  g.loss = ce.loss;
  g.blocks.resize(2 * layers_.size());
  std::vector<double> delta = ce.grad_logits.data, delta_in;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& out = tr.acts[li + 1];
    const auto& in = tr.acts[li];
    const auto in_size = layer_input_sizes_[li];
    const bool need_input_grad = li > 0;
    if (need_input_grad) delta_in.assign(batch * in_size, 0.0);

    if (const auto* c = std::get_if<Conv1DLayer>(&layers_[li])) {
      if (c->activation == Activation::relu)
        for (std::size_t i = 0; i < delta.size(); ++i)
          if (!(out[i] > 0.0)) delta[i] = 0.0;
      const auto width = layer_widths_[li], kw = c->kernel_width, ow = width - kw + 1;
      auto& dk = g.blocks[2 * li];
      auto& db = g.blocks[2 * li + 1];
      dk.assign(c->kernels.size(), 0.0);
      db.assign(c->biases.size(), 0.0);
      const std::size_t plen = c->in_channels * kw;
      std::vector<double> patches(ow * plen), dpatches(ow * plen);
      for (std::size_t b = 0; b < batch; ++b) {
        im2col(&in[b * in_size], c->in_channels, width, kw, patches.data());
        if (need_input_grad) std::fill(dpatches.begin(), dpatches.end(), 0.0);
        const double* gb = &delta[b * c->out_channels * ow];
        for (std::size_t o = 0; o < c->out_channels; ++o) {
          double* dko = &dk[o * plen];
          const double* ko = &c->kernels[o * plen];
          for (std::size_t t = 0; t < ow; ++t) {
            const double go = gb[o * ow + t];
            if (go == 0.0) continue;
            db[o] += go;
            const double* pt = &patches[t * plen];
            for (std::size_t i = 0; i < plen; ++i) dko[i] += go * pt[i];
            if (need_input_grad) {
              double* dpt = &dpatches[t * plen];
              for (std::size_t i = 0; i < plen; ++i) dpt[i] += go * ko[i];
            }
          }
        }
        if (need_input_grad) {
          double* dxb = &delta_in[b * in_size];
          for (std::size_t t = 0; t < ow; ++t)
            for (std::size_t ch = 0; ch < c->in_channels; ++ch)
              for (std::size_t k = 0; k < kw; ++k) dxb[ch * width + t + k] += dpatches[t * plen + ch * kw + k];
        }
      }
    } else {
      const auto& d = std::get<DenseLayer>(layers_[li]);
      if (d.activation == Activation::relu)
        for (std::size_t i = 0; i < delta.size(); ++i)
          if (!(out[i] > 0.0)) delta[i] = 0.0;
      auto& dw = g.blocks[2 * li];
      auto& db = g.blocks[2 * li + 1];
      dw.assign(d.weights.size(), 0.0);
      db.assign(d.biases.size(), 0.0);
      for (std::size_t b = 0; b < batch; ++b) {
        const double* xb = &in[b * d.in];
        const double* gb = &delta[b * d.out];
        double* dxb = need_input_grad ? &delta_in[b * d.in] : nullptr;
        for (std::size_t o = 0; o < d.out; ++o) {
          const double go = gb[o];
          if (go == 0.0) continue;
          db[o] += go;
          double* dwo = &dw[o * d.in];
          const double* wo = &d.weights[o * d.in];
          for (std::size_t i = 0; i < d.in; ++i) dwo[i] += go * xb[i];
          if (dxb)
            for (std::size_t i = 0; i < d.in; ++i) dxb[i] += go * wo[i];
        }
      }
    }
    if (need_input_grad) delta.swap(delta_in);
  }
  return g;
}

nlohmann::json Network::architecture() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : layers_) {
    if (const auto* c = std::get_if<Conv1DLayer>(&layer))
      layers.push_back({{"type", "conv1d"},
                        {"in_channels", c->in_channels},
                        {"out_channels", c->out_channels},
                        {"kernel_width", c->kernel_width},
                        {"activation", to_string(c->activation)}});
    else {
      const auto& d = std::get<DenseLayer>(layer);
      layers.push_back({{"type", "dense"}, {"in", d.in}, {"out", d.out}, {"activation", to_string(d.activation)}});
    }
  }
  return {{"input_shape", input_shape_}, {"layers", layers}};
}

Network Network::from_architecture(const nlohmann::json& arch) {
  try {
    std::vector<Layer> layers;
    for (const auto& l : arch.at("layers")) {
      const auto type = l.at("type").get<std::string>();
      const auto act = activation_from_string(l.at("activation").get<std::string>());
      if (type == "conv1d")
        layers.emplace_back(make_conv1d(l.at("in_channels").get<std::size_t>(), l.at("out_channels").get<std::size_t>(),
                                        l.at("kernel_width").get<std::size_t>(), act));
      else if (type == "dense")
        layers.emplace_back(make_dense(l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>(), act));
      else
        throw ConfigError("unknown layer type '" + type + "'");
    }
    return Network(arch.at("input_shape").get<std::vector<std::size_t>>(), std::move(layers));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid network architecture: ") + e.what());
  }
}

Network make_ffn(std::size_t n_inputs, const std::vector<std::size_t>& hidden, std::size_t n_classes) {
  std::vector<Layer> layers;
  std::size_t in = n_inputs;
  for (auto h : hidden) {
    layers.emplace_back(make_dense(in, h, Activation::relu));
    in = h;
  }
  layers.emplace_back(make_dense(in, n_classes, Activation::identity));
  return Network({n_inputs}, std::move(layers));
}

Network make_cnn(std::size_t n_signals, std::size_t width, const std::vector<std::size_t>& conv_channels,
                 std::size_t kernel_width, const std::vector<std::size_t>& head_hidden, std::size_t n_classes) {
  std::vector<Layer> layers;
  std::size_t channels = n_signals, w = width;
  for (auto c : conv_channels) {
    if (w < kernel_width) throw ShapeError("window width " + std::to_string(width) + " is too small for the conv stack");
    layers.emplace_back(make_conv1d(channels, c, kernel_width));
    channels = c;
    w = w - kernel_width + 1;
  }
  std::size_t in = channels * w;
  for (auto h : head_hidden) {
    layers.emplace_back(make_dense(in, h, Activation::relu));
    in = h;
  }
  layers.emplace_back(make_dense(in, n_classes, Activation::identity));
  return Network({n_signals, width}, std::move(layers));
}

struct GradientChecker {
  static GradientCheckReport run(const Network& net, const Tensor& x, std::span<const std::size_t> targets,
                                 double step, double floor) {
    const auto batch = x.shape.at(0);
    const auto analytic = net.backward(x, targets);
    Network::Trace base;
    net.run(x.data, batch, 0, base);

    Network work = net;
    auto params = work.parameters();
    const auto names = work.parameter_names();
    GradientCheckReport report;

    auto loss_of = [&](const Network::Trace& tr) {
      return softmax_cross_entropy(Tensor({batch, net.output_size_}, tr.acts.back()), targets).loss;
    };
    auto same_kinks = [&](const Network::Trace& a, std::size_t from) {
      for (std::size_t l = from; l < net.layers_.size(); ++l) {
        const bool relu = std::visit([](const auto& L) { return L.activation == Activation::relu; }, net.layers_[l]);
        if (!relu) continue;
        const auto& u = a.acts[l + 1];
        const auto& v = base.acts[l + 1];
        for (std::size_t i = 0; i < u.size(); ++i)
          if ((u[i] > 0.0) != (v[i] > 0.0)) return false;
      }
      return true;
    };

    Network::Trace plus, minus;
    for (std::size_t blk = 0; blk < params.size(); ++blk) {
      const std::size_t layer = blk / 2;
      // Earlier blocks leave perturbed activations behind.
      plus = base;
      minus = base;
      for (std::size_t i = 0; i < params[blk].size(); ++i) {
        const double orig = params[blk][i];
        params[blk][i] = orig + step;
        work.run(x.data, batch, layer, plus);
        params[blk][i] = orig - step;
        work.run(x.data, batch, layer, minus);
        params[blk][i] = orig;
        if (!same_kinks(plus, layer) || !same_kinks(minus, layer)) {
          ++report.skipped_nondifferentiable;
          continue;
        }
        const double numeric = (loss_of(plus) - loss_of(minus)) / (2.0 * step);
        const double a = analytic.blocks[blk][i];
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
        ++report.checked;
        if (rel > report.max_relative_error) {
          report.max_relative_error = rel;
          report.worst_parameter = names[blk] + "[" + std::to_string(i) + "]";
        }
      }
    }
    return report;
  }
};

GradientCheckReport gradient_check(const Network& net, const Tensor& x, std::span<const std::size_t> targets,
                                   double step, double floor) {
  return GradientChecker::run(net, x, targets, step, floor);
}

AdamState make_adam(std::span<const std::span<double>> params, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.size(), 0.0);
    s.second_moment.emplace_back(p.size(), 0.0);
  }
  return s;
}

void adam_step(std::span<const std::span<double>> params, const std::vector<std::vector<double>>& grads,
               AdamState& state) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size())
    throw ShapeError("adam_step: parameter, gradient and state block counts differ");
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = state.first_moment[b];
    auto& v = state.second_moment[b];
    const auto& g = grads[b];
    if (g.size() != params[b].size() || m.size() != g.size()) throw ShapeError("adam_step: block size mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      params[b][i] -= state.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.epsilon);
    }
  }
}

std::vector<double> train(Network& net, std::span<const double> features, std::span<const std::size_t> labels,
                          const TrainOptions& options) {
  const auto per = net.input_size();
  const auto n = labels.size();
  if (features.size() != n * per) throw ShapeError("train: feature matrix does not match label count");
  if (n == 0) throw InsufficientDataError("train: no training samples");
  if (options.batch_size == 0) throw ConfigError("batch size must be positive");

  auto params = net.parameters();
  auto state = make_adam(params, options.learning_rate);
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  std::vector<std::size_t> shape{0};
  shape.insert(shape.end(), net.input_shape().begin(), net.input_shape().end());
  std::vector<double> history;
  std::vector<std::size_t> batch_labels;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += options.batch_size) {
      const auto bs = std::min(options.batch_size, n - start);
      shape[0] = bs;
      Tensor x = Tensor::zeros(shape);
      batch_labels.resize(bs);
      for (std::size_t i = 0; i < bs; ++i) {
        const auto src = order[start + i];
        std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(src * per), per, x.data.begin() + static_cast<std::ptrdiff_t>(i * per));
        batch_labels[i] = labels[src];
      }
      const auto g = net.backward(x, batch_labels);
      adam_step(params, g.blocks, state);
      epoch_loss += g.loss * static_cast<double>(bs);
    }
    history.push_back(epoch_loss / static_cast<double>(n));
  }
  return history;
}

std::vector<double> predict_proba(const Network& net, std::span<const double> features, std::size_t n) {
  const auto per = net.input_size();
  if (features.size() != n * per) throw ShapeError("predict_proba: feature matrix does not match sample count");
  const auto classes = net.output_size();
  std::vector<double> out(n * classes);
  constexpr std::size_t chunk = 1024;
  std::vector<std::size_t> shape{0};
  shape.insert(shape.end(), net.input_shape().begin(), net.input_shape().end());
  for (std::size_t start = 0; start < n; start += chunk) {
    const auto bs = std::min(chunk, n - start);
    shape[0] = bs;
    Tensor x(shape, std::vector<double>(features.begin() + static_cast<std::ptrdiff_t>(start * per),
                                        features.begin() + static_cast<std::ptrdiff_t>((start + bs) * per)));
    const auto p = softmax(net.forward(x));
    std::copy(p.data.begin(), p.data.end(), out.begin() + static_cast<std::ptrdiff_t>(start * classes));
  }
  return out;
}

}  // namespace windclf::nn

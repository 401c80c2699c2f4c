#pragma once

// Small dense / 1-D convolutional network engine with hand-written
// backpropagation, softmax cross-entropy and Adam. Double precision only.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace windclf::nn {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;  // row-major

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_, std::vector<double> data_);
  static Tensor zeros(std::vector<std::size_t> shape);

  std::size_t size() const noexcept { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
};

std::size_t shape_product(std::span<const std::size_t> shape);

enum class Activation { relu, identity };

std::string to_string(Activation a);
Activation activation_from_string(std::string_view s);

struct DenseLayer {
  std::size_t in = 0, out = 0;
  std::vector<double> weights;  // out x in
  std::vector<double> biases;   // out
  Activation activation = Activation::relu;
};

/// Valid (unpadded) cross-correlation along time; input channels x width.
struct Conv1DLayer {
  std::size_t in_channels = 0, out_channels = 0, kernel_width = 3;
  std::vector<double> kernels;  // out x in x kernel_width
  std::vector<double> biases;   // out
  Activation activation = Activation::relu;
};

using Layer = std::variant<Conv1DLayer, DenseLayer>;

DenseLayer make_dense(std::size_t in, std::size_t out, Activation a);
Conv1DLayer make_conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_width,
                        Activation a = Activation::relu);

/// x: [in] or [batch, in]. Returns [out] or [batch, out].
Tensor dense_forward(const DenseLayer& layer, const Tensor& x);
/// x: [in_ch, w] or [batch, in_ch, w]. Returns [.., out_ch, w - kernel_width + 1].
Tensor conv1d_forward(const Conv1DLayer& layer, const Tensor& x);

/// Row-wise softmax of [batch, n_classes] (or [n_classes]).
Tensor softmax(const Tensor& logits);

struct CrossEntropy {
  double loss = 0.0;  // mean over the batch
  Tensor grad_logits;
};

CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);

/// Per-parameter-block gradients, aligned with Network::parameters().
struct Gradients {
  double loss = 0.0;
  std::vector<std::vector<double>> blocks;
};

/// A chain of conv layers followed by dense layers; the conv output is
/// flattened channel-major before the first dense layer.
class Network {
 public:
  Network() = default;
  Network(std::vector<std::size_t> input_shape, std::vector<Layer> layers);

  const std::vector<std::size_t>& input_shape() const noexcept { return input_shape_; }
  std::size_t input_size() const noexcept { return shape_product(input_shape_); }
  std::size_t output_size() const noexcept { return output_size_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }

  /// Weights then biases for each layer in order.
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;

  /// He-uniform weights, zero biases.
  void initialize(std::uint64_t seed);

  /// x: [batch, ...input_shape] -> logits [batch, output_size].
  Tensor forward(const Tensor& x) const;
  Gradients backward(const Tensor& x, std::span<const std::size_t> targets) const;

  nlohmann::json architecture() const;
  static Network from_architecture(const nlohmann::json& arch);

 private:
  struct Trace;
  void run(std::span<const double> x, std::size_t batch, std::size_t from_layer, Trace& trace) const;

  std::vector<std::size_t> input_shape_;
  std::vector<Layer> layers_;
  std::vector<std::size_t> layer_input_sizes_;
  std::vector<std::size_t> layer_widths_;  // input width for conv layers
  std::size_t output_size_ = 0;

  friend struct GradientChecker;
};

Network make_ffn(std::size_t n_inputs, const std::vector<std::size_t>& hidden, std::size_t n_classes);
Network make_cnn(std::size_t n_signals, std::size_t width, const std::vector<std::size_t>& conv_channels,
                 std::size_t kernel_width, const std::vector<std::size_t>& head_hidden, std::size_t n_classes);

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_nondifferentiable = 0;  // perturbation crossed a ReLU kink
  std::string worst_parameter;
};

/// Central finite differences on every parameter. Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradientCheckReport gradient_check(const Network& net, const Tensor& x, std::span<const std::size_t> targets,
                                   double step = 1e-5, double floor = 1e-6);

struct AdamState {
  std::size_t step_count = 0;
  std::vector<std::vector<double>> first_moment, second_moment;
  double learning_rate = 0.01;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
};

AdamState make_adam(std::span<const std::span<double>> params, double learning_rate = 0.01);
void adam_step(std::span<const std::span<double>> params, const std::vector<std::vector<double>>& grads,
               AdamState& state);

struct TrainOptions {
  std::size_t epochs = 50;
  std::size_t batch_size = 256;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
};

/// Seeded mini-batch Adam on `features` (n x input_size). Returns mean loss per epoch.
std::vector<double> train(Network& net, std::span<const double> features, std::span<const std::size_t> labels,
                          const TrainOptions& options);

/// Class probabilities, n x output_size.
std::vector<double> predict_proba(const Network& net, std::span<const double> features, std::size_t n);

}  // namespace windclf::nn

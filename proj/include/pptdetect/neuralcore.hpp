#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pptdetect/common.hpp"

namespace pptdetect::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor of doubles.
struct Tensor {
  Shape shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(Shape s);
  Tensor(Shape s, std::vector<double> v);

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  bool all_finite() const;
  bool operator==(const Tensor&) const = default;
};

enum class LayerKind { kConv1d, kMaxPool1d, kDense, kRelu, kSoftmax };

std::string_view to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  // kConv1d: input [in_channels, L] -> output [out_channels, L - kernel + 1].
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  // kMaxPool1d: [C, L] -> [C, (L - width) / stride + 1].
  std::size_t pool_width = 0;
  std::size_t pool_stride = 0;
  // kDense: flattened input of fan_in values -> [fan_out]. fan_in 0 is inferred at build time.
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;

  static LayerSpec conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel);
  static LayerSpec maxpool1d(std::size_t width, std::size_t stride);
  static LayerSpec dense(std::size_t fan_in, std::size_t fan_out);
  static LayerSpec relu();
  static LayerSpec softmax();

  bool operator==(const LayerSpec&) const = default;
};

/// A layer with its parameters. Conv weights are stored [in_channels, kernel, out_channels];
/// dense weights [fan_out, fan_in]. Parameter-free layers hold empty tensors.
struct Layer {
  LayerSpec spec;
  Shape in_shape;
  Shape out_shape;
  Tensor weight;
  Tensor bias;

  bool has_parameters() const { return spec.kind == LayerKind::kConv1d || spec.kind == LayerKind::kDense; }
};

/// Activations recorded during a forward pass, consumed by backpropagation.
struct ForwardTrace {
  std::vector<Tensor> inputs;                          // input of each layer
  std::vector<std::vector<std::size_t>> pool_argmax;   // per layer, empty unless max-pool
  Tensor output;
};

class Network {
 public:
  Network() = default;

  /// Builds and initializes a network. He-uniform for layers followed by RELU,
  /// Glorot-uniform otherwise, biases zero. Throws ValidationError naming the
  /// first layer whose shape does not compose.
  static Network build(const Shape& input_shape, const std::vector<LayerSpec>& specs, std::uint64_t seed);

  /// Assembles a network from explicit layers, validating shapes.
  static Network from_layers(const Shape& input_shape, std::vector<Layer> layers);

  const Shape& input_shape() const { return input_shape_; }
  Shape output_shape() const;
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  std::size_t parameter_count() const;
  void zero_parameters();

  Tensor forward(const Tensor& input) const;
  ForwardTrace forward_trace(const Tensor& input) const;

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
};

/// Parameter gradients, one entry per layer (empty tensors for parameter-free layers).
struct Gradients {
  std::vector<Tensor> weight;
  std::vector<Tensor> bias;
};

Gradients zero_gradients(const Network& net);

struct LossResult {
  double loss = 0.0;
  Gradients grads;
};

/// Thrown when the loss of a batch is not finite.
class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

/// Weighted mean cross-entropy over the batch, (1/N) * sum_i w[y_i] * -log p_i[y_i],
/// with the analytic gradient. targets hold class indices (the position of the
/// one-hot 1). The last layer must be SOFTMAX.
LossResult loss_and_grad(const Network& net, std::span<const Tensor> inputs, std::span<const int> targets,
                         std::span<const double> class_weights);

enum class Algorithm { kSgd, kAdam };

struct OptimizerState {
  Algorithm algorithm = Algorithm::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> m_weight, v_weight, m_bias, v_bias;
};

OptimizerState make_optimizer(const Network& net, Algorithm algorithm, double learning_rate);

void optimizer_step(Network& net, const Gradients& grads, OptimizerState& state);

inline constexpr int kModelFormatVersion = 1;

/// Canonical JSON document (sorted keys) of layers and weights, plus optional optimizer metadata.
nlohmann::json serialize_model(const Network& net, const OptimizerState* optimizer = nullptr);
Network deserialize_model(const nlohmann::json& doc);
std::string dump_canonical(const nlohmann::json& doc);
/// Parses a document string; truncated or malformed input raises ParseError.
nlohmann::json parse_document(std::string_view text);

struct TrainConfig {
  Algorithm algorithm = Algorithm::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig defaults);
  static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_f1 = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  Network best;
  std::size_t best_epoch = 0;
  double best_val_f1 = 0.0;
  std::vector<EpochMetrics> history;
};

/// Mini-batch training of a two-class softmax network with early stopping on
/// validation F1 of class 0 (validation loss breaks ties). Falls back to the
/// training set for validation when val_x is empty.
TrainResult fit(Network initial, const std::vector<Tensor>& train_x, const std::vector<int>& train_y,
                const std::vector<Tensor>& val_x, const std::vector<int>& val_y,
                const std::vector<double>& class_weights, const TrainConfig& config);

}  // namespace pptdetect::nn

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gossipgrad {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class Activation { sigmoid, relu, identity, softmax };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

struct LayerSpec {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  Activation activation = Activation::identity;

  bool operator==(const LayerSpec&) const = default;
};

using Model = std::vector<LayerSpec>;

/// Checks fan sizes, chaining, and softmax placement. Throws ConfigError.
void validate_model(const Model& model);

/// Builds a model from "in-h1-...-out" widths: hidden layers use `hidden`,
/// the final layer uses `output`.
Model make_mlp(std::span<const std::size_t> widths, Activation hidden, Activation output);

/// Location of one layer's weights (fan_out x fan_in, row-major) and biases
/// inside a flat parameter array.
struct LayerSlice {
  std::size_t layer = 0;
  std::size_t weight_offset = 0;
  std::size_t weight_length = 0;
  std::size_t bias_offset = 0;
  std::size_t bias_length = 0;

  std::size_t begin() const { return weight_offset; }
  std::size_t end() const { return bias_offset + bias_length; }
  bool operator==(const LayerSlice&) const = default;
};

struct ParameterLayout {
  std::vector<LayerSlice> slices;
  std::size_t total = 0;

  static ParameterLayout for_model(const Model& model);
  bool operator==(const ParameterLayout&) const = default;
};

/// All weights and biases of a network in one contiguous array.
struct ParameterBuffer {
  ParameterLayout layout;
  std::vector<double> values;

  ParameterBuffer() = default;
  explicit ParameterBuffer(ParameterLayout l) : layout(std::move(l)), values(layout.total, 0.0) {}

  static ParameterBuffer zeros_like(const ParameterBuffer& other) { return ParameterBuffer(other.layout); }

  std::size_t size() const { return values.size(); }
  std::span<double> layer_span(std::size_t layer) {
    const auto& s = layout.slices.at(layer);
    return {values.data() + s.begin(), s.end() - s.begin()};
  }
  std::span<const double> layer_span(std::size_t layer) const {
    const auto& s = layout.slices.at(layer);
    return {values.data() + s.begin(), s.end() - s.begin()};
  }

  bool operator==(const ParameterBuffer&) const = default;
};

/// Per-layer view of a ParameterBuffer, used for flatten/unflatten.
struct LayerParams {
  Matrix weights;  // fan_out x fan_in
  std::vector<double> bias;
  bool operator==(const LayerParams&) const = default;
};

std::vector<LayerParams> unflatten(const Model& model, const ParameterBuffer& params);
ParameterBuffer flatten(const Model& model, const std::vector<LayerParams>& layers);

/// Glorot-uniform weights, zero biases.
ParameterBuffer init_parameters(const Model& model, std::uint64_t seed);

struct Batch {
  Matrix inputs;  // n x fan_in
  Matrix labels;  // n x outputs; one-hot rows for classification
  std::vector<std::size_t> sample_ids;

  std::size_t size() const { return inputs.rows(); }
};

/// Intermediate values retained for backpropagation. activations[0] is the
/// input; activations[l + 1] is the output of layer l.
struct ForwardPass {
  std::vector<Matrix> preactivations;
  std::vector<Matrix> activations;

  const Matrix& predictions() const { return activations.back(); }
};

ForwardPass forward(const Model& model, const ParameterBuffer& params, const Matrix& inputs);

/// Batch-mean cross-entropy with log floor 1e-12.
double cross_entropy(const Matrix& predictions, const Matrix& labels);

/// Batch-mean of 0.5 * ||prediction - target||^2.
double squared_error(const Matrix& predictions, const Matrix& labels);

/// Loss paired with the model's output layer: cross-entropy after softmax,
/// squared error otherwise.
double loss(const Model& model, const Matrix& predictions, const Matrix& labels);

/// Gradient of loss() with respect to every parameter, averaged over the batch.
ParameterBuffer backward(const Model& model, const ParameterBuffer& params, const Matrix& labels,
                         const ForwardPass& pass);

/// v <- momentum * v + lr * g;  w <- w - v.
/// Throws NumericError naming the layer on a non-finite gradient entry.
void apply_update(ParameterBuffer& params, const ParameterBuffer& gradients, double lr,
                  ParameterBuffer& momentum_state, double momentum);

/// Fraction of rows whose argmax matches the one-hot label.
double accuracy(const Matrix& predictions, const Matrix& labels);

}  // namespace gossipgrad

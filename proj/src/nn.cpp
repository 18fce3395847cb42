#include "gossipgrad/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "gossipgrad/errors.hpp"
#include "gossipgrad/rng.hpp"

namespace gossipgrad {

namespace {

constexpr double kLogFloor = 1e-12;

double activate(Activation a, double z) {
  switch (a) {
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::identity: return z;
    case Activation::softmax: break;
  }
  return z;
}

// Derivative expressed through z and a = activate(z).
double activation_slope(Activation a, double z, double out) {
  switch (a) {
    case Activation::sigmoid: return out * (1.0 - out);
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::identity: return 1.0;
    case Activation::softmax: break;
  }
  return 1.0;
}

void softmax_rows(const Matrix& z, Matrix& out) {
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto zr = z.row(i);
    auto orow = out.row(i);
    const double peak = *std::max_element(zr.begin(), zr.end());
    double total = 0.0;
    for (std::size_t j = 0; j < zr.size(); ++j) {
      orow[j] = std::exp(zr[j] - peak);
      total += orow[j];
    }
    for (double& v : orow) v /= total;
  }
}

void check_layout(const Model& model, const ParameterBuffer& params) {
  if (params.layout != ParameterLayout::for_model(model)) {
    throw ConfigError("parameter layout does not match model");
  }
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::sigmoid: return "sigmoid";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

Activation parse_activation(const std::string& name) {
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "relu") return Activation::relu;
  if (name == "identity" || name == "linear") return Activation::identity;
  if (name == "softmax" || name == "softmax-output") return Activation::softmax;
  throw ConfigError(fmt::format("unknown activation '{}'", name));
}

void validate_model(const Model& model) {
  if (model.empty()) throw ConfigError("model has no layers");
  for (std::size_t l = 0; l < model.size(); ++l) {
    const auto& spec = model[l];
    if (spec.fan_in < 1 || spec.fan_out < 1) {
      throw ConfigError(fmt::format("layer {}: fan_in and fan_out must be >= 1", l));
    }
    if (spec.activation == Activation::softmax && l + 1 != model.size()) {
      throw ConfigError(fmt::format("layer {}: softmax is only allowed on the final layer", l));
    }
    if (l > 0 && model[l - 1].fan_out != spec.fan_in) {
      throw ConfigError(fmt::format("layer {}: fan_in {} does not match previous fan_out {}", l,
                                    spec.fan_in, model[l - 1].fan_out));
    }
  }
}

Model make_mlp(std::span<const std::size_t> widths, Activation hidden, Activation output) {
  if (widths.size() < 2) throw ConfigError("an MLP needs at least input and output widths");
  Model model;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    model.push_back({widths[i], widths[i + 1], last ? output : hidden});
  }
  validate_model(model);
  return model;
}

ParameterLayout ParameterLayout::for_model(const Model& model) {
  ParameterLayout layout;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < model.size(); ++l) {
    LayerSlice s;
    s.layer = l;
    s.weight_offset = offset;
    s.weight_length = model[l].fan_in * model[l].fan_out;
    s.bias_offset = offset + s.weight_length;
    s.bias_length = model[l].fan_out;
    offset = s.end();
    layout.slices.push_back(s);
  }
  layout.total = offset;
  return layout;
}

std::vector<LayerParams> unflatten(const Model& model, const ParameterBuffer& params) {
  check_layout(model, params);
  std::vector<LayerParams> out;
  for (std::size_t l = 0; l < model.size(); ++l) {
    const auto& s = params.layout.slices[l];
    LayerParams lp{Matrix(model[l].fan_out, model[l].fan_in), {}};
    std::copy_n(params.values.begin() + static_cast<std::ptrdiff_t>(s.weight_offset), s.weight_length,
                lp.weights.values().begin());
    lp.bias.assign(params.values.begin() + static_cast<std::ptrdiff_t>(s.bias_offset),
                   params.values.begin() + static_cast<std::ptrdiff_t>(s.end()));
    out.push_back(std::move(lp));
  }
  return out;
}

ParameterBuffer flatten(const Model& model, const std::vector<LayerParams>& layers) {
  if (layers.size() != model.size()) throw ConfigError("layer count mismatch in flatten");
  ParameterBuffer params(ParameterLayout::for_model(model));
  for (std::size_t l = 0; l < model.size(); ++l) {
    const auto& s = params.layout.slices[l];
    const auto& lp = layers[l];
    if (lp.weights.rows() != model[l].fan_out || lp.weights.cols() != model[l].fan_in ||
        lp.bias.size() != model[l].fan_out) {
      throw ConfigError(fmt::format("layer {}: parameter shape mismatch in flatten", l));
    }
    std::copy(lp.weights.values().begin(), lp.weights.values().end(),
              params.values.begin() + static_cast<std::ptrdiff_t>(s.weight_offset));
    std::copy(lp.bias.begin(), lp.bias.end(), params.values.begin() + static_cast<std::ptrdiff_t>(s.bias_offset));
  }
  return params;
}

ParameterBuffer init_parameters(const Model& model, std::uint64_t seed) {
  validate_model(model);
  ParameterBuffer params(ParameterLayout::for_model(model));
  Rng rng(seed, Stream::init);
  for (std::size_t l = 0; l < model.size(); ++l) {
    const auto& s = params.layout.slices[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(model[l].fan_in + model[l].fan_out));
    for (std::size_t i = 0; i < s.weight_length; ++i) {
      params.values[s.weight_offset + i] = rng.uniform(-limit, limit);
    }
  }
  return params;
}

ForwardPass forward(const Model& model, const ParameterBuffer& params, const Matrix& inputs) {
  check_layout(model, params);
  ForwardPass pass;
  pass.activations.reserve(model.size() + 1);
  pass.preactivations.reserve(model.size());
  pass.activations.push_back(inputs);

  for (std::size_t l = 0; l < model.size(); ++l) {
    const auto& spec = model[l];
    const Matrix& a = pass.activations.back();
    if (a.cols() != spec.fan_in) {
      throw ConfigError(fmt::format("layer {}: expected input width {}, got {}", l, spec.fan_in, a.cols()));
    }
    const auto& s = params.layout.slices[l];
    const double* w = params.values.data() + s.weight_offset;
    const double* b = params.values.data() + s.bias_offset;

    Matrix z(a.rows(), spec.fan_out);
    for (std::size_t i = 0; i < a.rows(); ++i) {
      auto ar = a.row(i);
      auto zr = z.row(i);
      for (std::size_t o = 0; o < spec.fan_out; ++o) {
        const double* wrow = w + o * spec.fan_in;
        double acc = b[o];
        for (std::size_t k = 0; k < spec.fan_in; ++k) acc += wrow[k] * ar[k];
        zr[o] = acc;
      }
    }

    Matrix out(a.rows(), spec.fan_out);
    if (spec.activation == Activation::softmax) {
      softmax_rows(z, out);
    } else {
      auto zv = z.values();
      auto ov = out.values();
      for (std::size_t i = 0; i < zv.size(); ++i) ov[i] = activate(spec.activation, zv[i]);
    }
    pass.preactivations.push_back(std::move(z));
    pass.activations.push_back(std::move(out));
  }
  return pass;
}

double cross_entropy(const Matrix& predictions, const Matrix& labels) {
  if (predictions.rows() != labels.rows() || predictions.cols() != labels.cols()) {
    throw ConfigError("cross_entropy: prediction and label shapes differ");
  }
  if (predictions.rows() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.rows(); ++i) {
    double sample = 0.0;
    for (std::size_t j = 0; j < predictions.cols(); ++j) {
      const double y = labels(i, j);
      if (y != 0.0) sample -= y * std::log(std::max(predictions(i, j), kLogFloor));
    }
    total += sample;
  }
  return total / static_cast<double>(predictions.rows());
}

double squared_error(const Matrix& predictions, const Matrix& labels) {
  if (predictions.rows() != labels.rows() || predictions.cols() != labels.cols()) {
    throw ConfigError("squared_error: prediction and label shapes differ");
  }
  if (predictions.rows() == 0) return 0.0;
  double total = 0.0;
  auto pv = predictions.values();
  auto lv = labels.values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = pv[i] - lv[i];
    total += 0.5 * d * d;
  }
  return total / static_cast<double>(predictions.rows());
}

double loss(const Model& model, const Matrix& predictions, const Matrix& labels) {
  return model.back().activation == Activation::softmax ? cross_entropy(predictions, labels)
                                                        : squared_error(predictions, labels);
}

ParameterBuffer backward(const Model& model, const ParameterBuffer& params, const Matrix& labels,
                         const ForwardPass& pass) {
  check_layout(model, params);
  const Matrix& pred = pass.predictions();
  if (labels.rows() != pred.rows() || labels.cols() != pred.cols()) {
    throw ConfigError(fmt::format("layer {}: label shape does not match output", model.size() - 1));
  }
  ParameterBuffer grads = ParameterBuffer::zeros_like(params);
  const std::size_t n = pred.rows();
  if (n == 0) return grads;
  const double inv_n = 1.0 / static_cast<double>(n);

  // Output delta. Softmax + cross-entropy and identity + squared error both
  // reduce to (prediction - label) / n.
  Matrix delta(n, pred.cols());
  {
    const Activation out_act = model.back().activation;
    const Matrix& z = pass.preactivations.back();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < pred.cols(); ++j) {
        double d = (pred(i, j) - labels(i, j)) * inv_n;
        if (out_act != Activation::softmax) d *= activation_slope(out_act, z(i, j), pred(i, j));
        delta(i, j) = d;
      }
    }
  }

  for (std::size_t l = model.size(); l-- > 0;) {
    const auto& spec = model[l];
    const auto& s = params.layout.slices[l];
    const Matrix& a = pass.activations[l];
    double* gw = grads.values.data() + s.weight_offset;
    double* gb = grads.values.data() + s.bias_offset;

    for (std::size_t i = 0; i < n; ++i) {
      auto ar = a.row(i);
      auto dr = delta.row(i);
      for (std::size_t o = 0; o < spec.fan_out; ++o) {
        const double d = dr[o];
        gb[o] += d;
        if (d == 0.0) continue;
        double* grow = gw + o * spec.fan_in;
        for (std::size_t k = 0; k < spec.fan_in; ++k) grow[k] += d * ar[k];
      }
    }

    if (l == 0) break;
    const double* w = params.values.data() + s.weight_offset;
    const Activation prev_act = model[l - 1].activation;
    const Matrix& prev_z = pass.preactivations[l - 1];
    Matrix prev_delta(n, spec.fan_in);
    for (std::size_t i = 0; i < n; ++i) {
      auto dr = delta.row(i);
      auto pr = prev_delta.row(i);
      for (std::size_t o = 0; o < spec.fan_out; ++o) {
        const double d = dr[o];
        if (d == 0.0) continue;
        const double* wrow = w + o * spec.fan_in;
        for (std::size_t k = 0; k < spec.fan_in; ++k) pr[k] += d * wrow[k];
      }
      auto ar = a.row(i);
      auto zr = prev_z.row(i);
      for (std::size_t k = 0; k < spec.fan_in; ++k) pr[k] *= activation_slope(prev_act, zr[k], ar[k]);
    }
    delta = std::move(prev_delta);
  }
  return grads;
}

void apply_update(ParameterBuffer& params, const ParameterBuffer& gradients, double lr,
                  ParameterBuffer& momentum_state, double momentum) {
  if (params.layout != gradients.layout || params.layout != momentum_state.layout) {
    throw ConfigError("apply_update: buffers do not share one layout");
  }
  for (const auto& s : gradients.layout.slices) {
    for (std::size_t i = s.begin(); i < s.end(); ++i) {
      if (!std::isfinite(gradients.values[i])) {
        throw NumericError(fmt::format("non-finite gradient in layer {} at offset {}", s.layer, i - s.begin()));
      }
    }
  }
  auto& w = params.values;
  auto& v = momentum_state.values;
  const auto& g = gradients.values;
  for (std::size_t i = 0; i < w.size(); ++i) {
    v[i] = momentum * v[i] + lr * g[i];
    w[i] -= v[i];
  }
}

double accuracy(const Matrix& predictions, const Matrix& labels) {
  if (predictions.rows() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.rows(); ++i) {
    auto pr = predictions.row(i);
    auto lr = labels.row(i);
    const auto guess = std::max_element(pr.begin(), pr.end()) - pr.begin();
    const auto truth = std::max_element(lr.begin(), lr.end()) - lr.begin();
    if (guess == truth) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predictions.rows());
}

}  // namespace gossipgrad

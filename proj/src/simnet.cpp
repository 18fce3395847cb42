#include "gossipgrad/simnet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <fmt/format.h>

#include "gossipgrad/errors.hpp"
#include "gossipgrad/topology.hpp"

namespace gossipgrad {

double CostModel::forward_total() const {
  double t = 0.0;
  for (const auto& c : per_layer_compute) t += c.forward_s;
  return t;
}

double CostModel::backward_total() const {
  double t = 0.0;
  for (const auto& c : per_layer_compute) t += c.backward_s;
  return t;
}

const std::vector<CostPreset>& cost_presets() {
  // Sandy Bridge nodes on FDR InfiniBand, P100 GPUs on EDR InfiniBand, and a
  // free network for isolating numerics from timing.
  static const std::vector<CostPreset> presets = {
      {"ideal", 0.0, 0.0, 1e-12, AllreduceAlgorithm::binomial_tree},
      {"sb-ib-fdr", 2e-6, 1.5e-10, 2e-11, AllreduceAlgorithm::binomial_tree},
      {"pascal-ib-edr", 5e-6, 1e-10, 1e-12, AllreduceAlgorithm::binomial_tree},
      {"pascal-ib-edr-ring", 5e-6, 1e-10, 1e-12, AllreduceAlgorithm::ring},
  };
  return presets;
}

const CostPreset& cost_preset(const std::string& name) {
  for (const auto& p : cost_presets())
    if (p.name == name) return p;
  throw ConfigError(fmt::format("unknown cost-model preset '{}'", name));
}

std::vector<LayerCompute> proportional_compute(const Model& model, double calibration) {
  std::vector<LayerCompute> out;
  for (const auto& layer : model) {
    const double fwd = calibration * static_cast<double>(layer.fan_in * layer.fan_out);
    out.push_back({fwd, kBackwardToForwardRatio * fwd});
  }
  return out;
}

std::vector<LayerCompute> compute_with_total(const Model& model, double total_s) {
  double macs = 0.0;
  for (const auto& layer : model) macs += static_cast<double>(layer.fan_in * layer.fan_out);
  return proportional_compute(model, total_s / ((1.0 + kBackwardToForwardRatio) * macs));
}

CostModel make_cost_model(const CostPreset& preset, const Model& model, std::size_t batch_size,
                          std::size_t sample_bytes) {
  CostModel cost;
  cost.latency_s = preset.latency_s;
  cost.inverse_bandwidth_s_per_byte = preset.inverse_bandwidth_s_per_byte;
  cost.per_layer_compute = proportional_compute(model, preset.seconds_per_mac * static_cast<double>(batch_size));
  cost.sample_bytes = sample_bytes;
  cost.allreduce = preset.allreduce;
  return cost;
}

double price_p2p(double message_bytes, const CostModel& cost) {
  return cost.latency_s + cost.inverse_bandwidth_s_per_byte * message_bytes;
}

double price_allreduce(double message_bytes, std::size_t p, const CostModel& cost) {
  if (p < 1) throw ConfigError("price_allreduce: p must be >= 1");
  if (cost.allreduce == AllreduceAlgorithm::ring) {
    const double steps = 2.0 * static_cast<double>(p - 1);
    return steps * cost.latency_s +
           steps / static_cast<double>(p) * cost.inverse_bandwidth_s_per_byte * message_bytes;
  }
  if (!is_power_of_two(p)) throw ConfigError(fmt::format("binomial all-reduce needs power-of-two p, got {}", p));
  return static_cast<double>(ceil_log2(p)) * price_p2p(message_bytes, cost);
}

StepShape StepShape::for_model(const Model& model, std::size_t parcel_samples, bool overlap_with_next_forward) {
  StepShape shape;
  for (const auto& layer : model) shape.layer_parameters.push_back(layer.fan_in * layer.fan_out + layer.fan_out);
  shape.parcel_samples = parcel_samples;
  shape.overlap_with_next_forward = overlap_with_next_forward;
  return shape;
}

std::size_t StepShape::total_parameters() const {
  std::size_t total = 0;
  for (auto n : layer_parameters) total += n;
  return total;
}

namespace {

// Exposed time of per-layer messages launched as backward reaches each layer.
// Both spans are in backprop order (last layer first).
double layerwise_exposure(const std::vector<double>& backward, const std::vector<double>& comm) {
  double clock = 0.0;
  double channel_free = 0.0;
  for (std::size_t j = 0; j < backward.size(); ++j) {
    clock += backward[j];
    const double start = std::max(clock, channel_free);
    channel_free = start + comm[j];
  }
  return std::max(0.0, channel_free - clock);
}

struct LayerwisePrices {
  std::vector<double> backward;
  std::vector<double> comm;
  double total_comm = 0.0;
};

template <typename Price>
LayerwisePrices price_layers(const CostModel& cost, const StepShape& shape, Price price) {
  LayerwisePrices out;
  const std::size_t n = shape.layer_parameters.size();
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t layer = n - 1 - j;
    out.backward.push_back(cost.per_layer_compute.at(layer).backward_s);
    const double bytes = static_cast<double>(shape.layer_parameters[layer] * cost.bytes_per_parameter);
    out.comm.push_back(price(bytes));
    out.total_comm += out.comm.back();
  }
  return out;
}

}  // namespace

StepTiming step_timing(ProtocolKind protocol, const CostModel& cost, const StepShape& shape, std::size_t p,
                       std::uint64_t step) {
  if (cost.per_layer_compute.size() != shape.layer_parameters.size()) {
    throw ConfigError("cost model and step shape disagree on layer count");
  }
  StepTiming t;
  const double forward = cost.forward_total();
  t.compute_time = forward + cost.backward_total();
  const double model_bytes = static_cast<double>(shape.total_parameters() * cost.bytes_per_parameter);
  const double parcel_bytes = static_cast<double>(shape.parcel_samples * cost.sample_bytes);

  auto layerwise_allreduce = [&] {
    const auto prices = price_layers(cost, shape, [&](double bytes) { return price_allreduce(bytes, p, cost); });
    t.total_comm_time = prices.total_comm;
    t.exposed_comm_time = layerwise_exposure(prices.backward, prices.comm);
  };

  switch (protocol) {
    case ProtocolKind::sequential:
      // One device processes all p parcels.
      t.compute_time *= static_cast<double>(p);
      break;
    case ProtocolKind::no_comm:
      break;
    case ProtocolKind::sgd_allreduce:
      t.total_comm_time = price_allreduce(model_bytes, p, cost);
      t.exposed_comm_time = t.total_comm_time;
      break;
    case ProtocolKind::agd:
      layerwise_allreduce();
      break;
    case ProtocolKind::agd_every_logp: {
      const std::size_t phase = std::max<std::size_t>(1, ceil_log2(p));
      if ((step + 1) % phase == 0) layerwise_allreduce();
      break;
    }
    case ProtocolKind::gossip_batch:
    case ProtocolKind::gossip_batch_rotate: {
      const double shuffle = price_p2p(parcel_bytes, cost);
      const double gossip = price_p2p(model_bytes, cost);
      t.total_comm_time = shuffle + gossip;
      t.exposed_comm_time = shape.overlap_with_next_forward ? std::max(0.0, shuffle + gossip - forward)
                                                            : std::max(0.0, shuffle - forward) + gossip;
      break;
    }
    case ProtocolKind::gossip_layer:
    case ProtocolKind::gossip_layer_rotate: {
      const double shuffle = price_p2p(parcel_bytes, cost);
      const auto prices = price_layers(cost, shape, [&](double bytes) { return price_p2p(bytes, cost); });
      t.total_comm_time = shuffle + prices.total_comm;
      t.exposed_comm_time = std::max(0.0, shuffle - forward) + layerwise_exposure(prices.backward, prices.comm);
      break;
    }
  }
  t.step_wall_time = t.compute_time + t.exposed_comm_time;
  return t;
}

double efficiency(const StepTiming& timing) {
  if (!(timing.step_wall_time > 0.0)) throw std::invalid_argument("efficiency: step wall time must be positive");
  return 100.0 * timing.compute_time / timing.step_wall_time;
}

double updates_per_second(const StepTiming& timing) {
  if (!(timing.step_wall_time > 0.0)) throw std::invalid_argument("updates_per_second: step wall time must be positive");
  return 1.0 / timing.step_wall_time;
}

}  // namespace gossipgrad

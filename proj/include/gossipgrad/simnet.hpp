#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gossipgrad/nn.hpp"
#include "gossipgrad/protocol_kind.hpp"

namespace gossipgrad {

enum class AllreduceAlgorithm { binomial_tree, ring };

struct LayerCompute {
  double forward_s = 0.0;
  double backward_s = 0.0;
};

/// Alpha-beta network model plus per-layer compute durations.
struct CostModel {
  double latency_s = 0.0;                 // l
  double inverse_bandwidth_s_per_byte = 0.0;  // G
  std::vector<LayerCompute> per_layer_compute;
  std::size_t bytes_per_parameter = 8;
  std::size_t sample_bytes = 0;
  AllreduceAlgorithm allreduce = AllreduceAlgorithm::binomial_tree;

  double forward_total() const;
  double backward_total() const;
};

/// Version of the preset table below. Bump on any value change.
inline constexpr int kCostPresetsVersion = 1;

struct CostPreset {
  std::string name;
  double latency_s;
  double inverse_bandwidth_s_per_byte;
  double seconds_per_mac;  // per sample, per multiply-accumulate
  AllreduceAlgorithm allreduce;
};

const std::vector<CostPreset>& cost_presets();
/// Throws ConfigError for an unknown name.
const CostPreset& cost_preset(const std::string& name);

/// Backward pass takes this multiple of the forward pass.
inline constexpr double kBackwardToForwardRatio = 2.0;

/// Forward time of layer l = calibration * fan_in * fan_out; backward is
/// kBackwardToForwardRatio times that.
std::vector<LayerCompute> proportional_compute(const Model& model, double calibration);

/// Per-layer compute scaled so forward + backward sums to `total_s`,
/// split in proportion to fan_in * fan_out.
std::vector<LayerCompute> compute_with_total(const Model& model, double total_s);

CostModel make_cost_model(const CostPreset& preset, const Model& model, std::size_t batch_size,
                          std::size_t sample_bytes);

/// l + G * M.
double price_p2p(double message_bytes, const CostModel& cost);

/// Binomial tree: log2(p) * (l + G * M). Ring: 2(p-1) l + 2(p-1)/p G M.
double price_allreduce(double message_bytes, std::size_t p, const CostModel& cost);

struct StepTiming {
  double compute_time = 0.0;
  double total_comm_time = 0.0;
  double exposed_comm_time = 0.0;
  double step_wall_time = 0.0;
};

/// What is sent in one step, independent of the network.
struct StepShape {
  std::vector<std::size_t> layer_parameters;  // per layer, forward order
  std::size_t parcel_samples = 0;
  bool overlap_with_next_forward = false;

  static StepShape for_model(const Model& model, std::size_t parcel_samples, bool overlap_with_next_forward);
  std::size_t total_parameters() const;
};

/// Prices one training step of `protocol`.
///
/// Layer-wise protocols (AGD, LaG, LaRG) launch layer l's message as soon as
/// layer l's backward finishes; messages share one channel in launch order
/// and the exposed part is whatever finishes after the backward pass.
/// Batch-wise gossip sends the whole buffer after backward; it is hidden
/// only behind the next forward pass and only if overlap_with_next_forward
/// is set. Gossip protocols also forward their finished parcel to the ring
/// neighbour during the forward pass. `step` matters only for
/// agd-every-logp, which communicates on phase boundaries.
StepTiming step_timing(ProtocolKind protocol, const CostModel& cost, const StepShape& shape, std::size_t p,
                       std::uint64_t step = 0);

/// 100 * compute / wall. Throws std::invalid_argument when wall <= 0.
double efficiency(const StepTiming& timing);

/// 1 / step_wall_time.
double updates_per_second(const StepTiming& timing);

}  // namespace gossipgrad

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gossipgrad/data.hpp"
#include "gossipgrad/nn.hpp"
#include "gossipgrad/protocol_kind.hpp"
#include "gossipgrad/topology.hpp"

namespace gossipgrad {

/// One simulated worker.
struct NodeState {
  std::size_t rank = 0;
  ParameterBuffer params;
  ParameterBuffer momentum;
};

/// (step, rank, parcel) for every local training pass.
struct TrainingEvent {
  std::uint64_t step = 0;
  std::size_t rank = 0;
  std::size_t parcel = 0;
  bool operator==(const TrainingEvent&) const = default;
};

struct ClusterState {
  Model model;
  std::vector<NodeState> nodes;
  std::uint64_t step = 0;
  ShuffleRingState ring;
  std::optional<GossipSchedule> schedule;
  double momentum = 0.0;
  bool record_events = false;
  std::vector<TrainingEvent> events;

  std::size_t node_count() const { return nodes.size(); }
};

/// Replicates `initial` onto one node per ring queue (or onto a single node
/// when `single_replica` is set, as the sequential oracle does).
ClusterState make_cluster(const Model& model, const ParameterBuffer& initial, ShuffleRingState ring,
                          std::optional<GossipSchedule> schedule, double momentum, bool single_replica = false);

struct StepReport {
  double loss = 0.0;  // sample-weighted mean over the parcels trained this step
  std::size_t samples = 0;
};

/// One forward/backward/update on `batch` with a single replica.
StepReport step_sequential(const Model& model, ParameterBuffer& params, ParameterBuffer& momentum_state,
                           const Batch& batch, double lr, double momentum);

/// Sequential oracle driven by a ring: trains the single replica on the
/// concatenation (in rank order) of every queue's head parcel.
StepReport step_sequential(ClusterState& cluster, const Dataset& data, double lr);

/// Data-parallel SGD: sample-weighted mean gradient, identical update on all
/// replicas. Throws InvariantError if replicas drift apart by more than 1e-8.
StepReport step_sgd_allreduce(ClusterState& cluster, const Dataset& data, double lr);

/// Local update, then one model exchange per node with its scheduled
/// partner, then the sample ring rotates. Hypercube pairs both take the pair
/// mean; dissemination nodes average themselves with the model received from
/// recv_from. Momentum buffers stay local.
StepReport step_gossip_batchwise(ClusterState& cluster, const Dataset& data, double lr);

/// Like step_gossip_batchwise, but each layer is exchanged separately and
/// the partner advances per layer: layers are visited in backprop order and
/// exchange number step * L + j selects the partner.
StepReport step_gossip_layerwise(ClusterState& cluster, const Dataset& data, double lr);

/// Local SGD with a uniform model average over all nodes after every
/// `phase`-th step.
StepReport step_agd_every_logp(ClusterState& cluster, const Dataset& data, double lr, std::size_t phase);

/// Independent local SGD.
StepReport step_no_comm(ClusterState& cluster, const Dataset& data, double lr);

/// Dispatches one step of `kind`. AGD shares the SGD numerics.
StepReport advance(ClusterState& cluster, ProtocolKind kind, const Dataset& data, double lr);

/// base_lr * sqrt(p).
double weak_scale_lr(double base_lr, std::size_t p);

/// Max over node pairs of the L-infinity distance between parameter buffers.
double consensus_distance(const ClusterState& cluster);
double consensus_distance(std::span<const ParameterBuffer> buffers);

}  // namespace gossipgrad

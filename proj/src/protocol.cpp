#include "gossipgrad/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "gossipgrad/errors.hpp"

namespace gossipgrad {

std::string to_string(ProtocolKind kind) {
  switch (kind) {
    case ProtocolKind::sequential: return "sequential";
    case ProtocolKind::sgd_allreduce: return "sgd-allreduce";
    case ProtocolKind::agd: return "agd";
    case ProtocolKind::gossip_batch: return "gossip-batch";
    case ProtocolKind::gossip_batch_rotate: return "gossip-batch-rotate";
    case ProtocolKind::gossip_layer: return "gossip-layer";
    case ProtocolKind::gossip_layer_rotate: return "gossip-layer-rotate";
    case ProtocolKind::agd_every_logp: return "agd-every-logp";
    case ProtocolKind::no_comm: return "no-comm";
  }
  return "?";
}

ProtocolKind parse_protocol(const std::string& name) {
  if (name == "sequential") return ProtocolKind::sequential;
  if (name == "sgd-allreduce" || name == "sgd") return ProtocolKind::sgd_allreduce;
  if (name == "agd") return ProtocolKind::agd;
  if (name == "gossip-batch" || name == "bag") return ProtocolKind::gossip_batch;
  if (name == "gossip-batch-rotate" || name == "barg") return ProtocolKind::gossip_batch_rotate;
  if (name == "gossip-layer" || name == "lag") return ProtocolKind::gossip_layer;
  if (name == "gossip-layer-rotate" || name == "larg") return ProtocolKind::gossip_layer_rotate;
  if (name == "agd-every-logp") return ProtocolKind::agd_every_logp;
  if (name == "no-comm") return ProtocolKind::no_comm;
  throw ConfigError(fmt::format("unknown protocol '{}'", name));
}

bool is_gossip(ProtocolKind kind) {
  return kind == ProtocolKind::gossip_batch || kind == ProtocolKind::gossip_batch_rotate ||
         kind == ProtocolKind::gossip_layer || kind == ProtocolKind::gossip_layer_rotate;
}

bool is_layerwise_gossip(ProtocolKind kind) {
  return kind == ProtocolKind::gossip_layer || kind == ProtocolKind::gossip_layer_rotate;
}

bool uses_rotation(ProtocolKind kind) {
  return kind == ProtocolKind::gossip_batch_rotate || kind == ProtocolKind::gossip_layer_rotate;
}

bool is_weak_scaled_baseline(ProtocolKind kind) {
  return kind == ProtocolKind::sequential || kind == ProtocolKind::sgd_allreduce || kind == ProtocolKind::agd;
}

ClusterState make_cluster(const Model& model, const ParameterBuffer& initial, ShuffleRingState ring,
                          std::optional<GossipSchedule> schedule, double momentum, bool single_replica) {
  validate_model(model);
  if (initial.layout != ParameterLayout::for_model(model)) throw ConfigError("initial parameters do not match model");
  if (ring.node_count() == 0) throw ConfigError("cluster needs at least one node");
  if (schedule && schedule->node_count() != ring.node_count()) {
    throw ConfigError("schedule node count differs from ring node count");
  }
  ClusterState c;
  c.model = model;
  const std::size_t replicas = single_replica ? 1 : ring.node_count();
  for (std::size_t r = 0; r < replicas; ++r) {
    c.nodes.push_back({r, initial, ParameterBuffer::zeros_like(initial)});
  }
  c.ring = std::move(ring);
  c.schedule = std::move(schedule);
  c.momentum = momentum;
  return c;
}

namespace {

struct LocalResult {
  double loss = 0.0;
  std::size_t samples = 0;
  ParameterBuffer gradients;
};

LocalResult local_gradient(const ClusterState& cluster, std::size_t rank, const Dataset& data) {
  const Parcel& parcel = cluster.ring.head(rank);
  const Batch batch = data.gather(parcel.sample_ids);
  const auto& params = cluster.nodes[rank].params;
  const ForwardPass pass = forward(cluster.model, params, batch.inputs);
  return {loss(cluster.model, pass.predictions(), batch.labels), batch.size(),
          backward(cluster.model, params, batch.labels, pass)};
}

void log_training(ClusterState& cluster) {
  if (!cluster.record_events) return;
  for (std::size_t r = 0; r < cluster.ring.node_count(); ++r) {
    cluster.events.push_back({cluster.step, r, cluster.ring.head(r).id});
  }
}

void update_node(ClusterState& cluster, std::size_t rank, const ParameterBuffer& grads, double lr) {
  auto& node = cluster.nodes[rank];
  try {
    apply_update(node.params, grads, lr, node.momentum, cluster.momentum);
  } catch (const NumericError& e) {
    throw NumericError(fmt::format("step {}, rank {}: {}", cluster.step, rank, e.what()));
  }
}

// Every node trains on its head parcel and applies its own update.
StepReport train_locally(ClusterState& cluster, const Dataset& data, double lr) {
  StepReport report;
  double weighted = 0.0;
  for (std::size_t r = 0; r < cluster.node_count(); ++r) {
    auto local = local_gradient(cluster, r, data);
    update_node(cluster, r, local.gradients, lr);
    weighted += local.loss * static_cast<double>(local.samples);
    report.samples += local.samples;
  }
  report.loss = report.samples ? weighted / static_cast<double>(report.samples) : 0.0;
  return report;
}

void require_schedule(const ClusterState& cluster) {
  if (!cluster.schedule) throw ConfigError("gossip protocols need a partner schedule");
  if (cluster.schedule->node_count() != cluster.node_count()) {
    throw ConfigError("schedule node count differs from cluster size");
  }
}

void average_range(std::vector<ParameterBuffer>& target, const std::vector<ParameterBuffer>& snapshot,
                   const std::vector<PartnerPair>& plan, std::size_t begin, std::size_t end) {
  for (std::size_t r = 0; r < plan.size(); ++r) {
    const auto& mine = snapshot[r].values;
    const auto& theirs = snapshot[plan[r].recv_from].values;
    auto& out = target[r].values;
    for (std::size_t i = begin; i < end; ++i) out[i] = (mine[i] + theirs[i]) / 2.0;
  }
}

std::vector<ParameterBuffer> snapshot_params(const ClusterState& cluster) {
  std::vector<ParameterBuffer> out;
  out.reserve(cluster.node_count());
  for (const auto& n : cluster.nodes) out.push_back(n.params);
  return out;
}

void store_params(ClusterState& cluster, std::vector<ParameterBuffer>&& buffers) {
  for (std::size_t r = 0; r < cluster.node_count(); ++r) cluster.nodes[r].params = std::move(buffers[r]);
}

void finish_step(ClusterState& cluster, bool rotate_samples) {
  if (rotate_samples) {
    cluster.ring = ring_rotate(std::move(cluster.ring), cluster.ring.node_count());
  } else {
    cycle_local(cluster.ring);
  }
  ++cluster.step;
}

}  // namespace

StepReport step_sequential(const Model& model, ParameterBuffer& params, ParameterBuffer& momentum_state,
                           const Batch& batch, double lr, double momentum) {
  const ForwardPass pass = forward(model, params, batch.inputs);
  const double value = loss(model, pass.predictions(), batch.labels);
  const ParameterBuffer grads = backward(model, params, batch.labels, pass);
  apply_update(params, grads, lr, momentum_state, momentum);
  return {value, batch.size()};
}

StepReport step_sequential(ClusterState& cluster, const Dataset& data, double lr) {
  if (cluster.node_count() != 1) throw ConfigError("sequential oracle runs on a single replica");
  std::vector<std::size_t> ids;
  for (std::size_t r = 0; r < cluster.ring.node_count(); ++r) {
    const auto& parcel = cluster.ring.head(r).sample_ids;
    ids.insert(ids.end(), parcel.begin(), parcel.end());
  }
  log_training(cluster);
  const Batch batch = data.gather(ids);
  auto& node = cluster.nodes[0];
  StepReport report;
  try {
    report = step_sequential(cluster.model, node.params, node.momentum, batch, lr, cluster.momentum);
  } catch (const NumericError& e) {
    throw NumericError(fmt::format("step {}: {}", cluster.step, e.what()));
  }
  finish_step(cluster, false);
  return report;
}

StepReport step_sgd_allreduce(ClusterState& cluster, const Dataset& data, double lr) {
  const std::size_t p = cluster.node_count();
  log_training(cluster);

  // Ascending-rank reduction keeps the sum bit-stable.
  ParameterBuffer global = ParameterBuffer::zeros_like(cluster.nodes[0].params);
  StepReport report;
  double weighted_loss = 0.0;
  for (std::size_t r = 0; r < p; ++r) {
    const auto local = local_gradient(cluster, r, data);
    const double w = static_cast<double>(local.samples);
    for (std::size_t i = 0; i < global.values.size(); ++i) global.values[i] += w * local.gradients.values[i];
    weighted_loss += w * local.loss;
    report.samples += local.samples;
  }
  if (report.samples == 0) throw ProtocolError("all-reduce step saw no samples");
  const double inv = 1.0 / static_cast<double>(report.samples);
  for (double& g : global.values) g *= inv;
  report.loss = weighted_loss * inv;

  for (std::size_t r = 0; r < p; ++r) update_node(cluster, r, global, lr);

  const double drift = consensus_distance(cluster);
  if (drift > 1e-8) {
    throw InvariantError(fmt::format("step {}: all-reduce replicas diverged by {}", cluster.step, drift));
  }
  finish_step(cluster, false);
  return report;
}

StepReport step_gossip_batchwise(ClusterState& cluster, const Dataset& data, double lr) {
  require_schedule(cluster);
  const auto plan = exchange_plan(*cluster.schedule, cluster.step);
  log_training(cluster);
  const StepReport report = train_locally(cluster, data, lr);

  auto snapshot = snapshot_params(cluster);
  auto next = snapshot;
  average_range(next, snapshot, plan, 0, snapshot[0].values.size());
  store_params(cluster, std::move(next));

  finish_step(cluster, true);
  return report;
}

StepReport step_gossip_layerwise(ClusterState& cluster, const Dataset& data, double lr) {
  require_schedule(cluster);
  const std::size_t layers = cluster.model.size();
  log_training(cluster);
  const StepReport report = train_locally(cluster, data, lr);

  auto snapshot = snapshot_params(cluster);
  auto next = snapshot;
  const auto& layout = snapshot[0].layout;
  for (std::size_t j = 0; j < layers; ++j) {
    const std::size_t layer = layers - 1 - j;
    const std::uint64_t exchange = cluster.step * layers + j;
    const auto plan = exchange_plan(*cluster.schedule, exchange);
    const auto& slice = layout.slices[layer];
    average_range(next, snapshot, plan, slice.begin(), slice.end());
  }
  store_params(cluster, std::move(next));

  finish_step(cluster, true);
  return report;
}

StepReport step_agd_every_logp(ClusterState& cluster, const Dataset& data, double lr, std::size_t phase) {
  if (phase < 1) throw ConfigError("agd-every-logp phase must be >= 1");
  log_training(cluster);
  const StepReport report = train_locally(cluster, data, lr);

  if ((cluster.step + 1) % phase == 0) {
    const std::size_t p = cluster.node_count();
    ParameterBuffer mean = ParameterBuffer::zeros_like(cluster.nodes[0].params);
    for (std::size_t r = 0; r < p; ++r) {
      const auto& v = cluster.nodes[r].params.values;
      for (std::size_t i = 0; i < v.size(); ++i) mean.values[i] += v[i];
    }
    for (double& v : mean.values) v /= static_cast<double>(p);
    for (auto& node : cluster.nodes) node.params = mean;
  }
  finish_step(cluster, false);
  return report;
}

StepReport step_no_comm(ClusterState& cluster, const Dataset& data, double lr) {
  log_training(cluster);
  const StepReport report = train_locally(cluster, data, lr);
  finish_step(cluster, false);
  return report;
}

StepReport advance(ClusterState& cluster, ProtocolKind kind, const Dataset& data, double lr) {
  switch (kind) {
    case ProtocolKind::sequential: return step_sequential(cluster, data, lr);
    case ProtocolKind::sgd_allreduce:
    case ProtocolKind::agd: return step_sgd_allreduce(cluster, data, lr);
    case ProtocolKind::gossip_batch:
    case ProtocolKind::gossip_batch_rotate: return step_gossip_batchwise(cluster, data, lr);
    case ProtocolKind::gossip_layer:
    case ProtocolKind::gossip_layer_rotate: return step_gossip_layerwise(cluster, data, lr);
    case ProtocolKind::agd_every_logp: return step_agd_every_logp(cluster, data, lr, ceil_log2(cluster.node_count()));
    case ProtocolKind::no_comm: return step_no_comm(cluster, data, lr);
  }
  throw ConfigError("unhandled protocol");
}

double weak_scale_lr(double base_lr, std::size_t p) {
  if (p < 1) throw ConfigError("weak_scale_lr: p must be >= 1");
  return base_lr * std::sqrt(static_cast<double>(p));
}

namespace {

double linf_spread(const std::vector<const std::vector<double>*>& buffers) {
  if (buffers.size() < 2) return 0.0;
  const std::size_t n = buffers[0]->size();
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double lo = (*buffers[0])[i];
    double hi = lo;
    for (std::size_t r = 1; r < buffers.size(); ++r) {
      lo = std::min(lo, (*buffers[r])[i]);
      hi = std::max(hi, (*buffers[r])[i]);
    }
    worst = std::max(worst, hi - lo);
  }
  return worst;
}

}  // namespace

// max_{r,s} max_i |w_r[i] - w_s[i]| equals max_i (max_r w_r[i] - min_r w_r[i]).
double consensus_distance(std::span<const ParameterBuffer> buffers) {
  std::vector<const std::vector<double>*> views;
  for (const auto& b : buffers) views.push_back(&b.values);
  return linf_spread(views);
}

double consensus_distance(const ClusterState& cluster) {
  std::vector<const std::vector<double>*> views;
  for (const auto& n : cluster.nodes) views.push_back(&n.params.values);
  return linf_spread(views);
}

}  // namespace gossipgrad

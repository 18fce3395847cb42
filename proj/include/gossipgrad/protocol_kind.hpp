#pragma once

#include <string>

namespace gossipgrad {

enum class ProtocolKind {
  sequential,
  sgd_allreduce,
  agd,
  gossip_batch,         // BaG
  gossip_batch_rotate,  // BaRG
  gossip_layer,         // LaG
  gossip_layer_rotate,  // LaRG
  agd_every_logp,
  no_comm,
};

std::string to_string(ProtocolKind kind);
ProtocolKind parse_protocol(const std::string& name);

bool is_gossip(ProtocolKind kind);
bool is_layerwise_gossip(ProtocolKind kind);
bool uses_rotation(ProtocolKind kind);
/// Baselines trained with a weak-scaled (sqrt p) learning rate.
bool is_weak_scaled_baseline(ProtocolKind kind);

}  // namespace gossipgrad

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "gossipgrad/nn.hpp"

namespace gossipgrad {

/// In-memory dataset. Sample ids are the row indices 0..N-1.
struct Dataset {
  Matrix samples;
  Matrix labels;
  std::size_t n_classes = 0;  // 0 for regression targets
  bool one_hot = true;

  std::size_t size() const { return samples.rows(); }
  std::size_t features() const { return samples.cols(); }
  std::size_t outputs() const { return labels.cols(); }

  Batch gather(std::span<const std::size_t> ids) const;
};

enum class DatasetKind { gaussian_blobs, two_spirals, linreg_quadratic };

std::string to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(const std::string& name);

struct SyntheticOptions {
  std::size_t features = 2;
  double cluster_std = 0.25;    // blobs: per-coordinate std
  double centroid_spacing = 1.0;  // blobs: distance between neighbouring centroids
  double noise = 0.0;           // spirals: jitter std; linreg: target noise std
  double spiral_turns = 1.5;
  std::size_t outputs = 1;      // linreg target width
};

/// Deterministic synthetic data. Throws ConfigError when n < n_classes or
/// n_classes < 2 (classification kinds).
Dataset make_synthetic(DatasetKind kind, std::size_t n, std::size_t n_classes, std::uint64_t seed,
                       const SyntheticOptions& options = {});

/// Disjoint per-node id lists. Sizes differ by at most one.
struct ShardAssignment {
  std::size_t node_count = 0;
  std::vector<std::vector<std::size_t>> shards;
};

ShardAssignment shard(std::span<const std::size_t> ids, std::size_t p, std::uint64_t seed);
ShardAssignment shard(const Dataset& dataset, std::size_t p, std::uint64_t seed);

/// Held-out split. `validation` gets round(fraction * n) ids (at least one
/// when fraction > 0), drawn by a seeded permutation.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};
Split split_validation(std::size_t n, double fraction, std::uint64_t seed);

/// A mini-batch worth of sample ids travelling around the sample ring.
struct Parcel {
  std::size_t id = 0;
  std::vector<std::size_t> sample_ids;
};

/// Per-node FIFO of parcels. The head parcel is what a node trains on next.
struct ShuffleRingState {
  std::vector<std::deque<Parcel>> queues;
  std::uint64_t rotations = 0;

  std::size_t node_count() const { return queues.size(); }
  std::size_t total_samples() const;
  const Parcel& head(std::size_t rank) const;
};

/// Cuts each shard into parcels of `batch_size` ids (the last one may be
/// shorter) and assigns parcel ids in rank-major order.
ShuffleRingState make_ring(const ShardAssignment& shards, std::size_t batch_size);

/// Each node's head parcel moves to the tail of node (rank + 1) mod p.
/// Throws ProtocolError if any queue is empty or p mismatches the state.
ShuffleRingState ring_rotate(ShuffleRingState state, std::size_t p);

/// Moves each node's head parcel to the tail of its own queue (no shuffle).
void cycle_local(ShuffleRingState& state);

}  // namespace gossipgrad

#include "gossipgrad/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <fmt/format.h>

#include "gossipgrad/errors.hpp"
#include "gossipgrad/rng.hpp"

namespace gossipgrad {

Batch Dataset::gather(std::span<const std::size_t> ids) const {
  Batch batch{Matrix(ids.size(), features()), Matrix(ids.size(), outputs()), {ids.begin(), ids.end()}};
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= size()) throw ProtocolError(fmt::format("sample id {} out of range", ids[i]));
    std::ranges::copy(samples.row(ids[i]), batch.inputs.row(i).begin());
    std::ranges::copy(labels.row(ids[i]), batch.labels.row(i).begin());
  }
  return batch;
}

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::gaussian_blobs: return "gaussian-blobs";
    case DatasetKind::two_spirals: return "two-spirals";
    case DatasetKind::linreg_quadratic: return "linreg-quadratic";
  }
  return "?";
}

DatasetKind parse_dataset_kind(const std::string& name) {
  if (name == "gaussian-blobs") return DatasetKind::gaussian_blobs;
  if (name == "two-spirals") return DatasetKind::two_spirals;
  if (name == "linreg-quadratic") return DatasetKind::linreg_quadratic;
  throw ConfigError(fmt::format("unknown dataset kind '{}'", name));
}

namespace {

Matrix blob_centroids(std::size_t k, std::size_t features, double spacing) {
  Matrix c(k, features);
  if (features >= k) {
    // Scaled basis vectors: every pair sits exactly `spacing` apart.
    for (std::size_t i = 0; i < k; ++i) c(i, i) = spacing / std::numbers::sqrt2;
  } else if (features >= 2) {
    const double radius = spacing / (2.0 * std::sin(std::numbers::pi / static_cast<double>(k)));
    for (std::size_t i = 0; i < k; ++i) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(k);
      c(i, 0) = radius * std::cos(angle);
      c(i, 1) = radius * std::sin(angle);
    }
  } else {
    for (std::size_t i = 0; i < k; ++i) c(i, 0) = spacing * (static_cast<double>(i) - 0.5 * static_cast<double>(k - 1));
  }
  return c;
}

}  // namespace

Dataset make_synthetic(DatasetKind kind, std::size_t n, std::size_t n_classes, std::uint64_t seed,
                       const SyntheticOptions& options) {
  Rng rng(seed, Stream::data);
  Dataset ds;

  if (kind == DatasetKind::linreg_quadratic) {
    if (n < 1) throw ConfigError("linreg-quadratic needs at least one sample");
    const std::size_t d = std::max<std::size_t>(options.features, 1);
    const std::size_t m = std::max<std::size_t>(options.outputs, 1);
    Matrix a(m, d);
    std::vector<double> bias(m);
    for (double& v : a.values()) v = rng.normal() / std::sqrt(static_cast<double>(d));
    for (double& v : bias) v = 0.5 * rng.normal();
    ds.samples = Matrix(n, d);
    ds.labels = Matrix(n, m);
    ds.n_classes = 0;
    ds.one_hot = false;
    for (std::size_t i = 0; i < n; ++i) {
      auto x = ds.samples.row(i);
      for (double& v : x) v = rng.normal();
      for (std::size_t o = 0; o < m; ++o) {
        double y = bias[o];
        for (std::size_t k = 0; k < d; ++k) y += a(o, k) * x[k];
        ds.labels(i, o) = y + options.noise * rng.normal();
      }
    }
    return ds;
  }

  if (n_classes < 2) throw ConfigError("classification datasets need at least 2 classes");
  if (n < n_classes) throw ConfigError(fmt::format("n = {} is smaller than n_classes = {}", n, n_classes));

  ds.n_classes = n_classes;
  ds.one_hot = true;
  ds.labels = Matrix(n, n_classes);

  if (kind == DatasetKind::gaussian_blobs) {
    const std::size_t d = std::max<std::size_t>(options.features, 1);
    const Matrix centroids = blob_centroids(n_classes, d, options.centroid_spacing);
    ds.samples = Matrix(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t cls = i % n_classes;
      for (std::size_t k = 0; k < d; ++k) ds.samples(i, k) = centroids(cls, k) + options.cluster_std * rng.normal();
      ds.labels(i, cls) = 1.0;
    }
    return ds;
  }

  // two-spirals: interleaved arms, one per class.
  if (n_classes != 2) throw ConfigError("two-spirals has exactly 2 classes");
  ds.samples = Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = i % 2;
    const double t = std::sqrt(rng.uniform());
    const double angle = t * options.spiral_turns * 2.0 * std::numbers::pi + static_cast<double>(cls) * std::numbers::pi;
    ds.samples(i, 0) = t * std::cos(angle) + options.noise * rng.normal();
    ds.samples(i, 1) = t * std::sin(angle) + options.noise * rng.normal();
    ds.labels(i, cls) = 1.0;
  }
  return ds;
}

ShardAssignment shard(std::span<const std::size_t> ids, std::size_t p, std::uint64_t seed) {
  if (p < 1) throw ConfigError("shard: node count must be >= 1");
  if (p > ids.size()) throw ConfigError(fmt::format("shard: {} nodes but only {} samples", p, ids.size()));
  std::vector<std::size_t> order(ids.begin(), ids.end());
  Rng rng(seed, Stream::shard);
  rng.shuffle(std::span<std::size_t>(order));

  ShardAssignment out;
  out.node_count = p;
  const std::size_t base = order.size() / p;
  const std::size_t extra = order.size() % p;
  std::size_t pos = 0;
  for (std::size_t r = 0; r < p; ++r) {
    const std::size_t len = base + (r < extra ? 1 : 0);
    out.shards.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(pos),
                            order.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return out;
}

ShardAssignment shard(const Dataset& dataset, std::size_t p, std::uint64_t seed) {
  std::vector<std::size_t> ids(dataset.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  return shard(ids, p, seed);
}

Split split_validation(std::size_t n, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction >= 1.0) throw ConfigError("validation fraction must be in [0, 1)");
  Rng rng(seed, Stream::validation);
  auto perm = random_permutation(n, rng);
  std::size_t n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (fraction > 0.0 && n_val == 0) n_val = 1;
  if (n_val >= n) throw ConfigError("validation split leaves no training samples");
  Split split;
  split.validation.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  split.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
  std::ranges::sort(split.validation);
  std::ranges::sort(split.train);
  return split;
}

std::size_t ShuffleRingState::total_samples() const {
  std::size_t total = 0;
  for (const auto& q : queues)
    for (const auto& parcel : q) total += parcel.sample_ids.size();
  return total;
}

const Parcel& ShuffleRingState::head(std::size_t rank) const {
  const auto& q = queues.at(rank);
  if (q.empty()) throw ProtocolError(fmt::format("node {} has no parcel to train on", rank));
  return q.front();
}

ShuffleRingState make_ring(const ShardAssignment& shards, std::size_t batch_size) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  ShuffleRingState state;
  std::size_t next_id = 0;
  for (const auto& ids : shards.shards) {
    std::deque<Parcel> queue;
    for (std::size_t pos = 0; pos < ids.size(); pos += batch_size) {
      const std::size_t end = std::min(ids.size(), pos + batch_size);
      queue.push_back({next_id++, {ids.begin() + static_cast<std::ptrdiff_t>(pos),
                                   ids.begin() + static_cast<std::ptrdiff_t>(end)}});
    }
    state.queues.push_back(std::move(queue));
  }
  return state;
}

ShuffleRingState ring_rotate(ShuffleRingState state, std::size_t p) {
  if (state.queues.size() != p) {
    throw ProtocolError(fmt::format("ring has {} queues but p = {}", state.queues.size(), p));
  }
  std::vector<Parcel> heads;
  heads.reserve(p);
  for (std::size_t r = 0; r < p; ++r) {
    auto& q = state.queues[r];
    if (q.empty()) throw ProtocolError(fmt::format("ring_rotate: node {} has an empty parcel queue", r));
    heads.push_back(std::move(q.front()));
    q.pop_front();
  }
  for (std::size_t r = 0; r < p; ++r) state.queues[(r + 1) % p].push_back(std::move(heads[r]));
  ++state.rotations;
  return state;
}

void cycle_local(ShuffleRingState& state) {
  for (std::size_t r = 0; r < state.queues.size(); ++r) {
    auto& q = state.queues[r];
    if (q.empty()) throw ProtocolError(fmt::format("node {} has an empty parcel queue", r));
    Parcel head = std::move(q.front());
    q.pop_front();
    q.push_back(std::move(head));
  }
}

}  // namespace gossipgrad

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gossipgrad/data.hpp"
#include "gossipgrad/nn.hpp"
#include "gossipgrad/protocol_kind.hpp"
#include "gossipgrad/topology.hpp"

namespace gossipgrad {

struct DatasetConfig {
  std::string kind = "gaussian-blobs";  // a DatasetKind name or "mnist"
  std::size_t samples = 512;
  std::size_t classes = 2;
  SyntheticOptions synthetic;
  std::filesystem::path mnist_dir;
  std::size_t mnist_limit = 0;

  bool operator==(const DatasetConfig& o) const;
};

/// Everything one simulated training run depends on.
///
/// File format: a `[run]` section of `key = value` lines; `#` and `;` start
/// comments. See configs/ for annotated examples.
struct RunConfig {
  ProtocolKind protocol = ProtocolKind::sgd_allreduce;
  TopologyKind topology = TopologyKind::dissemination;
  std::optional<bool> rotation_flag;  // must agree with the protocol when given
  std::size_t p = 2;

  std::vector<std::size_t> layers = {2, 16, 2};
  Activation hidden_activation = Activation::relu;
  Activation output_activation = Activation::softmax;

  DatasetConfig dataset;

  std::size_t batch_size = 16;
  double base_lr = 0.1;
  double momentum = 0.0;
  std::optional<std::uint64_t> steps;
  std::optional<std::uint64_t> epochs;
  std::uint64_t seed = 0;

  std::string cost_preset = "ideal";
  bool overlap_with_next_forward = false;
  std::optional<std::size_t> sample_bytes;      // default: 8 bytes per feature
  std::optional<double> priced_parameters;       // price messages as if the model had this many parameters
  std::optional<double> compute_seconds;         // override per-step compute total

  double validation_fraction = 0.1;
  std::uint64_t validation_every = 20;
  double init_jitter = 0.0;  // std of per-node perturbation added to the shared init

  std::filesystem::path output;

  Model model() const;
  bool rotation() const;
  /// Throws ConfigError describing the first violated constraint.
  void validate() const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace gossipgrad

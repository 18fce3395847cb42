#include "gossipgrad/selftest.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fmt/format.h>

#include "gossipgrad/data.hpp"
#include "gossipgrad/protocol.hpp"
#include "gossipgrad/topology.hpp"

namespace gossipgrad {

namespace {

SelftestResult allreduce_matches_sequential(std::size_t p) {
  constexpr std::uint64_t kSeed = 11;
  const std::array<std::size_t, 3> widths{2, 8, 3};
  const Model model = make_mlp(widths, Activation::relu, Activation::softmax);
  const Dataset data = make_synthetic(DatasetKind::gaussian_blobs, 96, 3, kSeed);
  const auto ring = make_ring(shard(data, p, kSeed), 4);
  const ParameterBuffer init = init_parameters(model, kSeed);
  ClusterState parallel = make_cluster(model, init, ring, std::nullopt, 0.0);
  ClusterState oracle = make_cluster(model, init, ring, std::nullopt, 0.0, true);
  double worst = 0.0;
  for (int s = 0; s < 5; ++s) {
    step_sgd_allreduce(parallel, data, 0.2);
    step_sequential(oracle, data, 0.2);
    const auto& a = parallel.nodes[0].params.values;
    const auto& b = oracle.nodes[0].params.values;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return {fmt::format("allreduce == sequential (p={})", p), worst <= 1e-9, fmt::format("max |dw| = {:.3g}", worst)};
}

SelftestResult diffusion_bound(TopologyKind kind, std::size_t p) {
  const GossipSchedule schedule(kind, p, false, 0);
  const std::size_t steps = ceil_log2(p);
  const bool full = all_true(diffusion_matrix(schedule, steps));
  const bool early = all_true(diffusion_matrix(schedule, steps - 1));
  return {fmt::format("{} diffusion (p={})", to_string(kind), p), full && !early,
          fmt::format("all-true at {} steps: {}, at {} steps: {}", steps, full, steps - 1, early)};
}

}  // namespace

std::vector<SelftestResult> run_selftest() {
  std::vector<SelftestResult> results;
  for (std::size_t p : {2, 4}) results.push_back(allreduce_matches_sequential(p));
  for (auto kind : {TopologyKind::hypercube, TopologyKind::dissemination})
    for (std::size_t p : {4, 8, 16, 32}) results.push_back(diffusion_bound(kind, p));
  return results;
}

}  // namespace gossipgrad

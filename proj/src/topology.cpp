#include "gossipgrad/topology.hpp"

#include <fmt/format.h>

#include "gossipgrad/errors.hpp"
#include "gossipgrad/rng.hpp"

namespace gossipgrad {

std::string to_string(TopologyKind kind) {
  return kind == TopologyKind::hypercube ? "hypercube" : "dissemination";
}

TopologyKind parse_topology(const std::string& name) {
  if (name == "hypercube") return TopologyKind::hypercube;
  if (name == "dissemination") return TopologyKind::dissemination;
  throw ConfigError(fmt::format("unknown topology '{}'", name));
}

bool is_power_of_two(std::size_t p) { return p != 0 && (p & (p - 1)) == 0; }

std::size_t ceil_log2(std::size_t p) {
  std::size_t k = 0;
  while ((std::size_t{1} << k) < p) ++k;
  return k;
}

GossipSchedule::GossipSchedule(TopologyKind kind, std::size_t p, bool rotation, std::uint64_t seed)
    : kind_(kind), p_(p), rotation_(rotation), phase_length_(0) {
  if (p < 2 || !is_power_of_two(p)) {
    throw ConfigError(fmt::format("gossip schedules need a power-of-two node count >= 2, got {}", p));
  }
  phase_length_ = ceil_log2(p);

  const std::size_t count = rotation ? p : 1;
  Rng rng(seed, Stream::rotation);
  perms_.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (i == 0) {
      std::vector<std::size_t> identity(p);
      for (std::size_t r = 0; r < p; ++r) identity[r] = r;
      perms_.push_back(std::move(identity));
    } else {
      perms_.push_back(random_permutation(p, rng));
    }
  }
  for (const auto& perm : perms_) {
    std::vector<std::size_t> inv(p);
    for (std::size_t v = 0; v < p; ++v) inv[perm[v]] = v;
    inverses_.push_back(std::move(inv));
  }
}

std::size_t advance_rotation(const GossipSchedule& schedule, std::uint64_t step) {
  if (!schedule.rotation()) return 0;
  return static_cast<std::size_t>((step / schedule.phase_length()) % schedule.node_count());
}

std::size_t exchange_exponent(const GossipSchedule& schedule, std::uint64_t step) {
  return static_cast<std::size_t>(step % schedule.phase_length());
}

namespace {

void check_rank(std::size_t rank, const GossipSchedule& schedule) {
  if (rank >= schedule.node_count()) {
    throw ProtocolError(fmt::format("rank {} outside 0..{}", rank, schedule.node_count() - 1));
  }
}

}  // namespace

PartnerPair dissemination_partner(std::size_t rank, std::uint64_t step, const GossipSchedule& schedule) {
  check_rank(rank, schedule);
  const std::size_t p = schedule.node_count();
  const std::size_t idx = advance_rotation(schedule, step);
  const auto& perm = schedule.permutation(idx);
  const std::size_t v = schedule.inverse(idx)[rank];
  const std::size_t offset = std::size_t{1} << exchange_exponent(schedule, step);
  return {perm[(v + offset) % p], perm[(v + p - offset) % p]};
}

PartnerPair hypercube_partner(std::size_t rank, std::uint64_t step, const GossipSchedule& schedule) {
  check_rank(rank, schedule);
  const std::size_t idx = advance_rotation(schedule, step);
  const std::size_t v = schedule.inverse(idx)[rank];
  const std::size_t other = schedule.permutation(idx)[v ^ (std::size_t{1} << exchange_exponent(schedule, step))];
  return {other, other};
}

PartnerPair partner(std::size_t rank, std::uint64_t step, const GossipSchedule& schedule) {
  return schedule.kind() == TopologyKind::hypercube ? hypercube_partner(rank, step, schedule)
                                                    : dissemination_partner(rank, step, schedule);
}

std::vector<PartnerPair> exchange_plan(const GossipSchedule& schedule, std::uint64_t step) {
  const std::size_t p = schedule.node_count();
  std::vector<PartnerPair> plan(p);
  std::vector<std::size_t> inbound(p, p);
  for (std::size_t r = 0; r < p; ++r) {
    plan[r] = partner(r, step, schedule);
    const std::size_t dst = plan[r].send_to;
    if (inbound[dst] != p) {
      throw ProtocolError(fmt::format("step {}: ranks {} and {} both send to {}", step, inbound[dst], r, dst));
    }
    inbound[dst] = r;
  }
  for (std::size_t r = 0; r < p; ++r) {
    if (inbound[r] != plan[r].recv_from) {
      throw ProtocolError(fmt::format("step {}: rank {} expects data from {} but {} sends to it", step, r,
                                      plan[r].recv_from, inbound[r]));
    }
  }
  return plan;
}

InfluenceMatrix diffusion_matrix(const GossipSchedule& schedule, std::uint64_t n_steps) {
  const std::size_t p = schedule.node_count();
  InfluenceMatrix m(p, std::vector<bool>(p, false));
  for (std::size_t i = 0; i < p; ++i) m[i][i] = true;
  for (std::uint64_t step = 0; step < n_steps; ++step) {
    const auto plan = exchange_plan(schedule, step);
    InfluenceMatrix next = m;
    for (std::size_t i = 0; i < p; ++i) {
      const auto& src = m[plan[i].recv_from];
      for (std::size_t j = 0; j < p; ++j) next[i][j] = next[i][j] || src[j];
    }
    m = std::move(next);
  }
  return m;
}

bool all_true(const InfluenceMatrix& m) {
  for (const auto& row : m)
    for (bool v : row)
      if (!v) return false;
  return true;
}

}  // namespace gossipgrad

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace gossipgrad {

enum class TopologyKind { hypercube, dissemination };

std::string to_string(TopologyKind kind);
TopologyKind parse_topology(const std::string& name);

/// Who a rank sends its model to and whose model it receives at one exchange.
struct PartnerPair {
  std::size_t send_to = 0;
  std::size_t recv_from = 0;
  bool operator==(const PartnerPair&) const = default;
};

/// Deterministic partner schedule over (step, rank).
///
/// Partners are computed in a "virtual" rank space: permutation `i` maps a
/// virtual position to a real rank. Permutation 0 is the identity; with
/// rotation on, permutation floor(step / log2 p) mod p is active, so the
/// communicator is reshuffled after every full phase of log2 p exchanges.
class GossipSchedule {
 public:
  /// Throws ConfigError unless p is a power of two and p >= 2.
  GossipSchedule(TopologyKind kind, std::size_t p, bool rotation, std::uint64_t seed);

  TopologyKind kind() const { return kind_; }
  std::size_t node_count() const { return p_; }
  bool rotation() const { return rotation_; }
  std::size_t phase_length() const { return phase_length_; }

  const std::vector<std::size_t>& permutation(std::size_t index) const { return perms_.at(index); }
  const std::vector<std::size_t>& inverse(std::size_t index) const { return inverses_.at(index); }

 private:
  TopologyKind kind_;
  std::size_t p_;
  bool rotation_;
  std::size_t phase_length_;
  std::vector<std::vector<std::size_t>> perms_;
  std::vector<std::vector<std::size_t>> inverses_;
};

/// Index of the active rotation permutation at `step` (always 0 when rotation is off).
std::size_t advance_rotation(const GossipSchedule& schedule, std::uint64_t step);

/// Offset exponent k = step mod log2 p.
std::size_t exchange_exponent(const GossipSchedule& schedule, std::uint64_t step);

/// Sends to (v + 2^k) mod p, receives from (v + p - 2^k) mod p in virtual space.
PartnerPair dissemination_partner(std::size_t rank, std::uint64_t step, const GossipSchedule& schedule);

/// Pairs v with v XOR 2^k in virtual space; send_to == recv_from.
PartnerPair hypercube_partner(std::size_t rank, std::uint64_t step, const GossipSchedule& schedule);

/// Dispatches on schedule.kind().
PartnerPair partner(std::size_t rank, std::uint64_t step, const GossipSchedule& schedule);

/// All ranks' partners at `step`. Throws ProtocolError if the send map or the
/// receive map is not a bijection, or the two disagree.
std::vector<PartnerPair> exchange_plan(const GossipSchedule& schedule, std::uint64_t step);

using InfluenceMatrix = std::vector<std::vector<bool>>;

/// M[i][j] is true iff node i's state after n_steps exchanges depends on
/// node j's initial state.
InfluenceMatrix diffusion_matrix(const GossipSchedule& schedule, std::uint64_t n_steps);

bool all_true(const InfluenceMatrix& m);

/// ceil(log2 p).
std::size_t ceil_log2(std::size_t p);
bool is_power_of_two(std::size_t p);

}  // namespace gossipgrad

#pragma once

#include <string>
#include <vector>

namespace gossipgrad {

struct SelftestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Data-parallel SGD against the single-replica oracle (p = 2, 4) and the
/// log2(p)-step diffusion bound for both topologies (p = 4..32).
std::vector<SelftestResult> run_selftest();

}  // namespace gossipgrad

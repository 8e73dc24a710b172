#pragma once

// Finite-difference verification of the tape on randomly drawn adversarial
// training graphs: a feature MLP feeding a softmax classifier and, through a
// gradient reversal node, a domain or label-domain discriminator.

#include <cstdint>
#include <string>
#include <vector>

namespace ruda::gradcheck {

struct Options {
  std::uint64_t seed = 0;
  int graphs = 20;
  double step = 1e-5;
};

struct GraphResult {
  int index = 0;
  std::string kind;  // adversary attached behind the reversal node
  std::size_t parameters = 0;
  double max_rel_error = 0.0;
};

struct Report {
  std::vector<GraphResult> graphs;
  double max_rel_error = 0.0;

  bool passed(double tolerance = 1e-4) const { return max_rel_error < tolerance; }
};

/// |a - n| / max(|a|, |n|, 1e-4): relative error with an absolute floor so
/// vanishing gradients are compared absolutely.
double relative_error(double analytic, double numeric);

Report run(const Options& opts);

}  // namespace ruda::gradcheck

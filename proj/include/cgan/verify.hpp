#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cgan/gan.hpp"

namespace cgan {

struct CheckResult {
  std::string name;
  bool pass = false;
  double stat = 0.0;  // max relative error for gradient checks
  std::string detail;
};

// Independent closed-form walk over a generator spec: per-layer input
// channels, spatial extents and the learnable parameter count. Used as the
// oracle against built networks.
struct GeneratorWalk {
  std::vector<int> in_channels;
  std::vector<int> out_channels;
  int64_t param_count = 0;
};
GeneratorWalk shape_walk_generator(const GeneratorSpec& spec);

struct DiscriminatorWalk {
  std::vector<int> spatial;  // after each conv
  int head_inputs = 0;
  int64_t param_count = 0;
};
DiscriminatorWalk shape_walk_discriminator(const DiscriminatorSpec& spec);

// Finite-difference verification of every differentiable op in 64-bit,
// including a tiny end-to-end generator -> discriminator -> loss graph.
std::vector<CheckResult> run_gradcheck_suite();

// Spatial preservation / ceil-halving sweeps and channel bookkeeping across
// the ablation flags, against the shape-walk oracle.
std::vector<CheckResult> run_shape_suite();

inline bool all_passed(const std::vector<CheckResult>& rs) {
  for (const auto& r : rs)
    if (!r.pass) return false;
  return true;
}

}  // namespace cgan

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pacg {

struct GradCheckResult {
  std::string component;
  double worst_rel_err = 0;
  bool pass = false;
};

// Central-difference verification of every backward rule: individual ops,
// the nn blocks, SCG, PFMG, the detection loss and the full
// backbone+fusion+head pipeline at tiny shapes. rel err =
// |analytic - fd| / max(|analytic|, |fd|, 1e-6); the floor keeps fd roundoff
// from dominating for near-zero gradients.
std::vector<GradCheckResult> run_gradcheck(uint64_t seed, double tolerance = 1e-4,
                                           double step = 1e-5);

}  // namespace pacg

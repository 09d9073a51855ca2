#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pwrules/classifier.hpp"

namespace testsupport {

struct GradCheckStats {
  long entries_checked = 0;
  long failures = 0;
  double max_rel_err = 0.0;
  std::string worst_tensor;
};

// Central finite differences (64-bit, given step) against backward() on a
// random toy config: every parameter tensor entry and every input embedding
// entry.  rel err = |a-n| / max(|a|,|n|,1e-6).
GradCheckStats gradient_check_one(uint64_t seed, double step, double tol);

GradCheckStats gradient_check_many(uint64_t seed, int n_configs, double step, double tol);

// random toy model + input for IG-style tests
struct ToyProblem {
  pwrules::model::ModelState state;
  std::vector<std::vector<double>> words;
  int target_fragment = 0;
};
ToyProblem random_toy(uint64_t seed);

// one module-invariant suite run under the property harness
struct PropertyResult {
  std::string name;
  long cases = 0;
  long failures = 0;
};

// every module's invariant suite; >= 1000 cases each where randomized
std::vector<PropertyResult> run_all_property_suites(uint64_t seed);

}  // namespace testsupport

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "armflow/params.hpp"

namespace armflow::nn {

// Central finite differences against analytic gradients, per parameter.
// rel err = |a - f| / max(|a|, |f|, 1e-8)
struct GradReport {
  struct Entry {
    std::string name;
    double max_rel_err = 0.0;
    int coords_checked = 0;
  };
  std::vector<Entry> entries;
  double max_rel_err = 0.0;

  bool pass(double tol) const { return max_rel_err <= tol; }
};

// loss_fn must rebuild the loss graph from the current parameter values and
// be deterministic (two evaluations at identical params must agree bitwise).
// Every non-frozen parameter touched by the loss appears in the report; a
// deterministic subset of at most max_coords coordinates is probed per tensor.
GradReport grad_check(const std::function<Tensor()>& loss_fn, ParamStore& params, double eps,
                      int max_coords = 8, uint64_t seed = 0);

}  // namespace armflow::nn

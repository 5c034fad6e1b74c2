#include "armflow/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace armflow::nn {

GradReport grad_check(const std::function<Tensor()>& loss_fn, ParamStore& params, double eps,
                      int max_coords, uint64_t seed) {
  Tensor l1 = loss_fn();
  Tensor l2 = loss_fn();
  if (l1.value()(0, 0) != l2.value()(0, 0))
    throw NonDeterministicLoss("grad_check: loss differs across evaluations");

  params.zero_grads();
  l1.backward();

  // snapshot analytic grads of touched, non-frozen parameters
  std::vector<std::pair<std::string, Mat>> analytic;
  for (const auto& name : params.names()) {
    const Tensor& p = params.at(name);
    if (params.is_frozen(name) || !p.has_grad()) continue;
    if (p.grad().cwiseAbs().sum() == 0.0 && !p.requires_grad()) continue;
    analytic.emplace_back(name, p.grad());
  }

  GradReport report;
  const Rng rng(Rng::mix(seed ^ 0xfdc17c5a1ULL));
  for (const auto& [name, grad] : analytic) {
    Tensor& p = params.at(name);
    Mat& val = p.leaf_value();
    const int64_t n = val.size();
    const int64_t checks = std::min<int64_t>(n, max_coords);
    const Rng prng = rng.derive(name);

    GradReport::Entry entry{name, 0.0, int(checks)};
    for (int64_t c = 0; c < checks; ++c) {
      const int64_t i = (n <= max_coords) ? c : int64_t(prng.integer(uint64_t(c), uint64_t(n)));
      const double orig = val.data()[i];
      val.data()[i] = orig + eps;
      const double up = loss_fn().value()(0, 0);
      val.data()[i] = orig - eps;
      const double dn = loss_fn().value()(0, 0);
      val.data()[i] = orig;
      const double fd = (up - dn) / (2.0 * eps);
      const double a = grad.data()[i];
      const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8});
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace armflow::nn

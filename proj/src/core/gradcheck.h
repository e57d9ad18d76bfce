#pragma once

#include <functional>
#include <vector>

#include "core/tape.h"
#include "core/tensor.h"

namespace refbase {

// Builds a scalar loss on the given tape from differentiable inputs bound to
// `params` (in order). The same builder is replayed on fresh tapes for the
// finite-difference probes, so it must be a pure function of the values.
using ScalarFn =
    std::function<Tape<double>::Id(Tape<double>&, const std::vector<Tape<double>::Id>&)>;

// Central-difference check of the tape's analytic gradients, 64-bit only
// (32-bit finite differences are dominated by rounding noise).
// Returns max over all coordinates of
//   |analytic - central| / (|analytic| + |central| + 1e-12).
inline double grad_check(const ScalarFn& fn, std::vector<Tensor<double>> params,
                         double eps) {
  if (!(eps > 0.0 && eps <= 1e-2))
    throw ConfigError("grad_check: eps must be in (0, 1e-2]");

  // inputs share the caller's storage: perturbations between evals are
  // visible to the next fresh tape without copying the full parameter set
  auto eval = [&](const std::vector<Tensor<double>>& ps) {
    Tape<double> tape;
    std::vector<Tape<double>::Id> ids;
    ids.reserve(ps.size());
    for (const auto& p : ps) ids.push_back(tape.input(p));
    return tape.value(fn(tape, ids)).item();
  };

  // analytic gradients (on a private copy so later perturbations cannot alias)
  Tape<double> tape;
  std::vector<Tape<double>::Id> ids;
  for (const auto& p : params) ids.push_back(tape.input(Tensor<double>(p.shape(), p.vec())));
  tape.backward(fn(tape, ids));
  std::vector<std::vector<double>> analytic;
  for (auto id : ids)
    analytic.push_back(tape.has_grad(id)
                           ? tape.grad(id)
                           : std::vector<double>(static_cast<size_t>(tape.value(id).size()), 0.0));

  double max_rel = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    std::vector<double>& coords = params[pi].mutable_vec();
    for (size_t ci = 0; ci < coords.size(); ++ci) {
      const double saved = coords[ci];
      coords[ci] = saved + eps;
      const double fp = eval(params);
      coords[ci] = saved - eps;
      const double fm = eval(params);
      coords[ci] = saved;
      const double central = (fp - fm) / (2.0 * eps);
      const double a = analytic[pi][ci];
      const double rel = std::abs(a - central) / (std::abs(a) + std::abs(central) + 1e-12);
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace refbase

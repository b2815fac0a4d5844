#pragma once

#include <algorithm>
#include <functional>
#include <span>

#include "capstext/tensor.hpp"

namespace capstext {

// Verifies reverse-mode gradients of a scalar-valued function against central
// finite differences, returning the worst relative error
//   |g_analytic - g_numeric| / max(1, |g_analytic|, |g_numeric|)
// over all elements of all params. The function must rebuild its graph from
// the current parameter values on every call and be deterministic; it is
// evaluated twice up front to verify that. Runs in 64-bit precision only.
inline double finite_diff_check(const std::function<Tensor<double>()>& fn,
                                std::span<Tensor<double>> params, double eps = 1e-5) {
  Tensor<double> first = fn();
  Tensor<double> second = fn();
  if (first.numel() != 1) {
    throw ContractError("finite_diff_check: function must be scalar-valued, got shape " +
                        shape_str(first.shape()));
  }
  if (!bitwise_equal(first, second)) {
    throw ContractError("finite_diff_check: function is not deterministic across evaluations");
  }
  for (const auto& p : params) {
    if (!p.requires_grad()) {
      throw ContractError("finite_diff_check: parameter '" + p.name() + "' does not require grad");
    }
  }

  GradientMap<double> grads = backward(first);

  double max_err = 0.0;
  for (auto& p : params) {
    std::string key = p.name().empty() ? "tensor#" + std::to_string(p.node()->id) : p.name();
    auto it = grads.find(key);
    auto storage = p.mutable_values();
    for (size_t k = 0; k < storage.size(); ++k) {
      double saved = storage[k];
      storage[k] = saved + eps;
      double fp = fn().scalar();
      storage[k] = saved - eps;
      double fm = fn().scalar();
      storage[k] = saved;
      double numeric = (fp - fm) / (2.0 * eps);
      double analytic = it == grads.end() ? 0.0 : it->second.values()[k];
      double err = std::abs(analytic - numeric) /
                   std::max({1.0, std::abs(analytic), std::abs(numeric)});
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace capstext

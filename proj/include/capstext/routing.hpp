#pragma once

#include "capstext/ops.hpp"
#include "capstext/tensor.hpp"

namespace capstext {

// Dynamic-routing knobs. baseline_mode reproduces the unmodified
// routing-by-agreement variant: plain softmax over parents, no coefficient
// amendment.
struct RoutingConfig {
  int iterations = 3;
  bool leaky = true;
  bool amend = true;
  bool baseline_mode = false;

  RoutingConfig normalized() const {
    RoutingConfig cfg = *this;
    if (cfg.baseline_mode) {
      cfg.leaky = false;
      cfg.amend = false;
    }
    return cfg;
  }
};

template <typename T>
struct RoutingResult {
  Tensor<T> parents;       // [N, d]
  Tensor<T> parent_probs;  // [N], norms of the parents
  Tensor<T> couplings;     // [H, N], the coefficients that built `parents`
};

// Iterative routing by agreement. Votes are [H, N, d] child-to-parent
// predictions, child_probs [H] the children's existence probabilities.
//
// Each iteration computes coupling coefficients from the logits (leaky or
// plain softmax over parents, optionally scaled per child by its existence
// probability), forms each parent as the squashed coupled sum of votes, and
// adds the vote/parent agreement to the logits. The logits start at zero,
// the update also runs after the last iteration (its result is unused), and
// the returned couplings are the ones that produced the returned parents.
// All iterations stay on the differentiation graph.
template <typename T>
RoutingResult<T> route(const Tensor<T>& votes, const Tensor<T>& child_probs,
                       const RoutingConfig& config, SquashKind squash_kind) {
  if (votes.rank() != 3) {
    throw ShapeError("route: votes must be [H, N, d], got " + shape_str(votes.shape()));
  }
  size_t children = votes.extent(0);
  size_t parents = votes.extent(1);
  if (child_probs.rank() != 1 || child_probs.extent(0) != children) {
    throw ShapeError("route: child probs " + shape_str(child_probs.shape()) +
                     " do not match votes " + shape_str(votes.shape()));
  }
  RoutingConfig cfg = config.normalized();
  if (cfg.iterations < 1) throw ContractError("route: iterations must be >= 1");
  for (T p : child_probs.values()) {
    if (!(p >= T(0) && p <= T(1))) {
      throw ContractError("route: child probability outside [0, 1]");
    }
  }

  Tensor<T> logits = Tensor<T>::zeros({children, parents});
  RoutingResult<T> result;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    Tensor<T> coefficients = cfg.leaky ? leaky_softmax(logits, 1) : softmax(logits, 1);
    if (cfg.amend) coefficients = mul_leading(coefficients, child_probs);
    Tensor<T> preactivation = weighted_sum_children(votes, coefficients);
    result.parents = squash(preactivation, 1, squash_kind);
    result.parent_probs = l2_norm(result.parents, 1);
    result.couplings = coefficients;
    logits = add(logits, parent_agreement(votes, result.parents));
  }
  return result;
}

}  // namespace capstext

#pragma once

// Independent plain-loop reference for the routing algorithm, kept free of
// the production tensor machinery on purpose. Oracle for the vectorized
// implementation.

#include <cmath>
#include <cstddef>
#include <vector>

#include "capstext/ops.hpp"

namespace testsupport {

struct NaiveRoutingResult {
  std::vector<double> parents;    // N * d
  std::vector<double> probs;      // N
  std::vector<double> couplings;  // H * N
};

inline double naive_squash_factor(capstext::SquashKind kind, double norm) {
  switch (kind) {
    case capstext::SquashKind::ratio:
      return (norm / (1.0 + norm)) / norm;
    case capstext::SquashKind::exp:
      return (1.0 - std::exp(-norm)) / norm;
    case capstext::SquashKind::tanh:
      return std::tanh(norm) / norm;
    case capstext::SquashKind::none:
      return 1.0;
  }
  return 1.0;
}

inline NaiveRoutingResult naive_route(const std::vector<double>& votes,
                                      const std::vector<double>& child_probs, size_t H, size_t N,
                                      size_t d, int iterations, bool leaky, bool amend,
                                      capstext::SquashKind kind) {
  std::vector<double> logits(H * N, 0.0);
  NaiveRoutingResult result;
  result.parents.assign(N * d, 0.0);
  result.probs.assign(N, 0.0);
  result.couplings.assign(H * N, 0.0);

  for (int iter = 0; iter < iterations; ++iter) {
    // coupling coefficients per child
    for (size_t i = 0; i < H; ++i) {
      double denom = leaky ? 1.0 : 0.0;  // leak slot carries logit 0
      for (size_t j = 0; j < N; ++j) denom += std::exp(logits[i * N + j]);
      for (size_t j = 0; j < N; ++j) {
        double c = std::exp(logits[i * N + j]) / denom;
        if (amend) c *= child_probs[i];
        result.couplings[i * N + j] = c;
      }
    }
    // parents from coupled sums
    for (size_t j = 0; j < N; ++j) {
      std::vector<double> s(d, 0.0);
      for (size_t i = 0; i < H; ++i) {
        for (size_t a = 0; a < d; ++a) {
          s[a] += result.couplings[i * N + j] * votes[(i * N + j) * d + a];
        }
      }
      double norm = 0.0;
      for (double v : s) norm += v * v;
      norm = std::sqrt(norm);
      double factor = norm == 0.0 ? 0.0 : naive_squash_factor(kind, norm);
      double out_norm = 0.0;
      for (size_t a = 0; a < d; ++a) {
        result.parents[j * d + a] = factor * s[a];
        out_norm += result.parents[j * d + a] * result.parents[j * d + a];
      }
      result.probs[j] = std::sqrt(out_norm);
    }
    // logit update from vote/parent agreement
    for (size_t i = 0; i < H; ++i) {
      for (size_t j = 0; j < N; ++j) {
        double dot = 0.0;
        for (size_t a = 0; a < d; ++a) {
          dot += votes[(i * N + j) * d + a] * result.parents[j * d + a];
        }
        logits[i * N + j] += dot;
      }
    }
  }
  return result;
}

}  // namespace testsupport

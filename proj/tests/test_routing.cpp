#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "capstext/gradcheck.hpp"
#include "capstext/routing.hpp"
#include "naive_routing.hpp"
#include "support.hpp"

using namespace capstext;
using testsupport::naive_route;
using testsupport::random_tensor;

namespace {

RoutingConfig make_config(int iterations, bool leaky, bool amend, bool baseline = false) {
  RoutingConfig cfg;
  cfg.iterations = iterations;
  cfg.leaky = leaky;
  cfg.amend = amend;
  cfg.baseline_mode = baseline;
  return cfg;
}

Tensor<double> unit_probs(size_t n) { return Tensor<double>::filled({n}, 1.0); }

}  // namespace

TEST_CASE("leaky softmax reference values") {
  auto zero3 = leaky_softmax(Tensor<double>::zeros({1, 3}), 1);
  for (double v : zero3.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

  auto zero1 = leaky_softmax(Tensor<double>::zeros({1, 1}), 1);
  CHECK(zero1.values()[0] == doctest::Approx(0.5).epsilon(1e-12));

  auto skew = leaky_softmax(Tensor<double>::from_values({1, 2}, {std::log(2.0), 0.0}), 1);
  CHECK(skew.values()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(skew.values()[1] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("leaky softmax is a strict sub-distribution") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    size_t n = 1 + rng.next_below(6);
    auto out = leaky_softmax(random_tensor(rng, {4, n}, false, 0.0, 3.0), 1);
    for (size_t row = 0; row < 4; ++row) {
      double total = 0.0;
      for (size_t j = 0; j < n; ++j) total += out.values()[row * n + j];
      CHECK(total < 1.0);
      CHECK(total > 0.0);
    }
  }
}

TEST_CASE("hand-traced baseline routing with two identical votes") {
  // two children voting e1 for a single parent, one iteration, plain softmax
  auto votes = Tensor<double>::from_values({2, 1, 3}, {1, 0, 0, 1, 0, 0});
  auto result = route(votes, unit_probs(2), make_config(1, false, false, true), SquashKind::ratio);

  CHECK(result.couplings.values()[0] == doctest::Approx(1.0));
  CHECK(result.couplings.values()[1] == doctest::Approx(1.0));
  // s = 2 e1, ratio squash scales to norm 2/3
  CHECK(result.parents.values()[0] == doctest::Approx(2.0 / 3.0));
  CHECK(result.parents.values()[1] == doctest::Approx(0.0));
  CHECK(result.parent_probs.values()[0] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("zero votes give zero parents under every configuration") {
  auto votes = Tensor<double>::zeros({3, 2, 4});
  auto probs = Tensor<double>::filled({3}, 0.5);
  for (bool leaky : {false, true}) {
    for (bool amend : {false, true}) {
      for (int r : {1, 3}) {
        auto result = route(votes, probs, make_config(r, leaky, amend), SquashKind::ratio);
        for (double v : result.parents.values()) CHECK(v == 0.0);
        for (double a : result.parent_probs.values()) CHECK(a == 0.0);
      }
    }
  }
}

TEST_CASE("route matches the naive loop oracle") {
  Rng rng(2024);
  int instances = 0;
  for (int trial = 0; trial < 60; ++trial) {
    size_t children = 1 + rng.next_below(8);
    size_t parents = 1 + rng.next_below(8);
    size_t dim = 1 + rng.next_below(4);
    int iterations = std::vector<int>{1, 3, 5}[rng.next_below(3)];
    bool leaky = rng.next_unit() < 0.5;
    bool amend = rng.next_unit() < 0.5;

    auto votes = random_tensor(rng, {children, parents, dim}, false);
    std::vector<double> probs_values(children);
    for (auto& p : probs_values) p = rng.next_unit();
    auto probs = Tensor<double>::from_values({children}, probs_values);

    auto got = route(votes, probs, make_config(iterations, leaky, amend), SquashKind::ratio);
    auto want = naive_route({votes.values().begin(), votes.values().end()}, probs_values,
                            children, parents, dim, iterations, leaky, amend, SquashKind::ratio);

    for (size_t i = 0; i < want.parents.size(); ++i) {
      CHECK(got.parents.values()[i] == doctest::Approx(want.parents[i]).epsilon(1e-9));
    }
    for (size_t i = 0; i < want.probs.size(); ++i) {
      CHECK(got.parent_probs.values()[i] == doctest::Approx(want.probs[i]).epsilon(1e-9));
    }
    for (size_t i = 0; i < want.couplings.size(); ++i) {
      CHECK(got.couplings.values()[i] == doctest::Approx(want.couplings[i]).epsilon(1e-9));
    }
    ++instances;
  }
  CHECK(instances == 60);
}

TEST_CASE("coupling coefficient bounds") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    size_t children = 2 + rng.next_below(5);
    size_t parents = 1 + rng.next_below(5);
    auto votes = random_tensor(rng, {children, parents, 3}, false);
    std::vector<double> probs_values(children);
    for (auto& p : probs_values) p = 0.05 + 0.9 * rng.next_unit();
    auto probs = Tensor<double>::from_values({children}, probs_values);

    // amend + leaky: rows bounded by the child's own probability, strictly
    auto both = route(votes, probs, make_config(3, true, true), SquashKind::ratio);
    for (size_t i = 0; i < children; ++i) {
      double row_sum = 0.0;
      for (size_t j = 0; j < parents; ++j) {
        double c = both.couplings.values()[i * parents + j];
        CHECK(c >= 0.0);
        CHECK(c <= probs_values[i]);
        row_sum += c;
      }
      CHECK(row_sum < probs_values[i]);
    }

    // leaky only: strict sub-distribution
    auto leaky_only = route(votes, probs, make_config(3, true, false), SquashKind::ratio);
    for (size_t i = 0; i < children; ++i) {
      double row_sum = 0.0;
      for (size_t j = 0; j < parents; ++j) row_sum += leaky_only.couplings.values()[i * parents + j];
      CHECK(row_sum < 1.0);
    }

    // baseline: exact conservation
    auto baseline = route(votes, probs, make_config(3, false, false, true), SquashKind::ratio);
    for (size_t i = 0; i < children; ++i) {
      double row_sum = 0.0;
      for (size_t j = 0; j < parents; ++j) row_sum += baseline.couplings.values()[i * parents + j];
      CHECK(std::abs(row_sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("agreeing parent's coupling never decreases across iterations") {
  Rng rng(47);
  for (int trial = 0; trial < 10; ++trial) {
    size_t children = 4, parents = 3, dim = 4;
    std::vector<double> votes_values(children * parents * dim);
    for (size_t i = 0; i < children; ++i) {
      for (size_t j = 0; j < parents; ++j) {
        for (size_t a = 0; a < dim; ++a) {
          // parent 0 receives the same unit vote from everyone; the others
          // receive scattered votes
          votes_values[(i * parents + j) * dim + a] =
              j == 0 ? (a == 0 ? 1.0 : 0.0) : rng.next_uniform(-1.0, 1.0);
        }
      }
    }
    auto votes = Tensor<double>::from_values({children, parents, dim}, votes_values);
    auto probs = unit_probs(children);

    std::vector<double> previous(children, -1.0);
    for (int r = 1; r <= 5; ++r) {
      auto result = route(votes, probs, make_config(r, true, true), SquashKind::ratio);
      for (size_t i = 0; i < children; ++i) {
        double c = result.couplings.values()[i * parents + 0];
        CHECK(c >= previous[i] - 1e-12);
        previous[i] = c;
      }
    }
  }
}

TEST_CASE("routing is equivariant under child permutation") {
  Rng rng(53);
  size_t children = 5, parents = 3, dim = 4;
  auto votes = random_tensor(rng, {children, parents, dim}, false);
  std::vector<double> probs_values(children);
  for (auto& p : probs_values) p = rng.next_unit();

  std::vector<size_t> perm{3, 0, 4, 1, 2};
  std::vector<double> permuted_votes(children * parents * dim);
  std::vector<double> permuted_probs(children);
  for (size_t i = 0; i < children; ++i) {
    permuted_probs[i] = probs_values[perm[i]];
    for (size_t rest = 0; rest < parents * dim; ++rest) {
      permuted_votes[i * parents * dim + rest] = votes.values()[perm[i] * parents * dim + rest];
    }
  }

  auto cfg = make_config(3, true, true);
  auto base = route(votes, Tensor<double>::from_values({children}, probs_values), cfg,
                    SquashKind::ratio);
  auto shuffled = route(Tensor<double>::from_values({children, parents, dim}, permuted_votes),
                        Tensor<double>::from_values({children}, permuted_probs), cfg,
                        SquashKind::ratio);

  for (size_t i = 0; i < parents * dim; ++i) {
    CHECK(base.parents.values()[i] == doctest::Approx(shuffled.parents.values()[i]).epsilon(1e-12));
  }
  for (size_t i = 0; i < children; ++i) {
    for (size_t j = 0; j < parents; ++j) {
      CHECK(shuffled.couplings.values()[i * parents + j] ==
            doctest::Approx(base.couplings.values()[perm[i] * parents + j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("single-iteration output ignores the logit update") {
  // with r = 1 the couplings come straight from the zero logits
  Rng rng(59);
  size_t children = 4, parents = 3;
  auto votes = random_tensor(rng, {children, parents, 3}, false);
  auto result = route(votes, unit_probs(children), make_config(1, false, false), SquashKind::ratio);
  for (double c : result.couplings.values()) {
    CHECK(c == doctest::Approx(1.0 / static_cast<double>(parents)).epsilon(1e-12));
  }
}

TEST_CASE("baseline mode forces plain softmax without amendment") {
  Rng rng(61);
  auto votes = random_tensor(rng, {3, 2, 3}, false);
  std::vector<double> probs_values{0.2, 0.5, 0.9};
  auto probs = Tensor<double>::from_values({3}, probs_values);

  auto baseline = route(votes, probs, make_config(3, true, true, true), SquashKind::ratio);
  auto plain = route(votes, probs, make_config(3, false, false, false), SquashKind::ratio);
  CHECK(bitwise_equal(baseline.parents, plain.parents));
  CHECK(bitwise_equal(baseline.couplings, plain.couplings));
}

TEST_CASE("route contract errors") {
  auto votes = Tensor<double>::zeros({2, 2, 2});
  CHECK_THROWS_AS(route(votes, Tensor<double>::filled({2}, 1.5), make_config(3, true, true),
                        SquashKind::ratio),
                  ContractError);
  CHECK_THROWS_AS(route(votes, Tensor<double>::filled({2}, -0.1), make_config(3, true, true),
                        SquashKind::ratio),
                  ContractError);
  CHECK_THROWS_AS(route(votes, Tensor<double>::filled({2}, 0.5), make_config(0, true, true),
                        SquashKind::ratio),
                  ContractError);
  CHECK_THROWS_AS(route(votes, Tensor<double>::filled({3}, 0.5), make_config(3, true, true),
                        SquashKind::ratio),
                  ShapeError);
}

TEST_CASE("gradients flow through unrolled routing") {
  Rng rng(67);
  auto votes = random_tensor(rng, {3, 2, 3}).set_name("votes");
  std::vector<double> raw(3);
  for (auto& p : raw) p = 0.2 + 0.6 * rng.next_unit();
  auto probs = Tensor<double>::from_values({3}, raw, true).set_name("probs");

  std::vector<Tensor<double>> params{votes, probs};
  auto cfg = make_config(3, true, true);
  testsupport::WeightedProbe probe(
      route(votes, probs, cfg, SquashKind::ratio).parents, rng);
  double err = finite_diff_check(
      [&] { return probe(route(votes, probs, cfg, SquashKind::ratio).parents); }, params);
  CHECK(err <= 1e-3);
}

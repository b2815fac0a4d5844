#pragma once

#include <optional>
#include <string>
#include <vector>

#include "capstext/ops.hpp"
#include "capstext/routing.hpp"
#include "capstext/tensor.hpp"

namespace capstext {

// A spatially arranged block of capsules: poses [positions, channels, d] and
// their existence probabilities [positions, channels] (the pose norms).
template <typename T>
struct CapsuleGrid {
  Tensor<T> poses;
  Tensor<T> activations;

  size_t positions() const { return poses.extent(0); }
  size_t channels() const { return poses.extent(1); }
  size_t dim() const { return poses.extent(2); }
};

// Sliding n-gram feature extractor: [L, V] -> ReLU(conv + bias) -> [L-K1+1, B].
template <typename T>
struct NGramConvLayer {
  size_t ngram = 3;
  Tensor<T> filters;  // [B, K1, V]
  Tensor<T> bias;     // [B]

  static NGramConvLayer init(size_t ngram, size_t filter_count, size_t embed_dim, Rng& rng,
                             const std::string& name_prefix) {
    NGramConvLayer layer;
    layer.ngram = ngram;
    layer.filters = Tensor<T>::glorot_uniform({filter_count, ngram, embed_dim}, ngram * embed_dim,
                                              filter_count, rng.next_u64());
    layer.filters.set_name(name_prefix + ".filters");
    layer.bias = Tensor<T>::zeros({filter_count}, true);
    layer.bias.set_name(name_prefix + ".bias");
    return layer;
  }

  Tensor<T> forward(const Tensor<T>& embedded) const {
    return relu(add_bias(conv1d_valid(embedded, filters), bias));
  }
};

// Turns each feature-map row into C capsule poses: squash(W_c^T M_i + b_c).
template <typename T>
struct PrimaryCapsuleLayer {
  Tensor<T> filters;  // [C, B, d]
  Tensor<T> bias;     // [C, d]

  static PrimaryCapsuleLayer init(size_t channels, size_t feature_count, size_t capsule_dim,
                                  Rng& rng, const std::string& name_prefix) {
    PrimaryCapsuleLayer layer;
    layer.filters = Tensor<T>::glorot_uniform({channels, feature_count, capsule_dim},
                                              feature_count, capsule_dim, rng.next_u64());
    layer.filters.set_name(name_prefix + ".filters");
    layer.bias = Tensor<T>::zeros({channels, capsule_dim}, true);
    layer.bias.set_name(name_prefix + ".bias");
    return layer;
  }

  CapsuleGrid<T> forward(const Tensor<T>& feature_map, SquashKind squash_kind) const {
    size_t channels = filters.extent(0);
    size_t feature_count = filters.extent(1);
    size_t dim = filters.extent(2);
    if (feature_map.rank() != 2 || feature_map.extent(1) != feature_count) {
      throw ShapeError("primary capsules: feature map " + shape_str(feature_map.shape()) +
                       " does not match filters " + shape_str(filters.shape()));
    }
    size_t positions = feature_map.extent(0);
    std::vector<Tensor<T>> per_channel;
    per_channel.reserve(channels);
    for (size_t c = 0; c < channels; ++c) {
      Tensor<T> w = reshape(slice_rows(filters, c, c + 1), {feature_count, dim});
      Tensor<T> b = reshape(slice_rows(bias, c, c + 1), {dim});
      Tensor<T> poses = add_bias(matmul(feature_map, w), b);  // [positions, d]
      per_channel.push_back(reshape(poses, {positions, 1, dim}));
    }
    CapsuleGrid<T> grid;
    grid.poses = squash(concat(per_channel, 1), 2, squash_kind);
    grid.activations = l2_norm(grid.poses, 2);
    return grid;
  }
};

// Child-to-parent transform weights. Shared mode applies one d x d matrix per
// parent to every child; non-shared mode keys the matrix on (child, parent)
// and therefore pins the child count. The bias is per parent.
template <typename T>
struct TransformSpec {
  bool shared = false;
  Tensor<T> weights;  // shared: [N, d, d]; non-shared: [H, N, d, d]
  Tensor<T> bias;     // [N, d]

  static TransformSpec init(bool shared, size_t children, size_t parents, size_t dim, Rng& rng,
                            const std::string& name_prefix) {
    TransformSpec spec;
    spec.shared = shared;
    Shape shape = shared ? Shape{parents, dim, dim} : Shape{children, parents, dim, dim};
    spec.weights = Tensor<T>::glorot_uniform(std::move(shape), dim, dim, rng.next_u64());
    spec.weights.set_name(name_prefix + ".weights");
    spec.bias = Tensor<T>::zeros({parents, dim}, true);
    spec.bias.set_name(name_prefix + ".bias");
    return spec;
  }

  size_t parents() const { return shared ? weights.extent(0) : weights.extent(1); }
};

// Votes [H, N, d] from child poses [H, d].
template <typename T>
Tensor<T> compute_votes(const Tensor<T>& children, const TransformSpec<T>& spec) {
  if (!spec.shared && children.extent(0) != spec.weights.extent(0)) {
    throw ShapeError("compute_votes: non-shared transform expects " +
                     std::to_string(spec.weights.extent(0)) + " children, got " +
                     std::to_string(children.extent(0)));
  }
  return capsule_transform(children, spec.weights, spec.bias);
}

// Capsule convolution: every output position routes the K2 x C child capsules
// of its window (stride 1) to D parents.
template <typename T>
struct ConvCapsuleLayer {
  size_t window = 3;  // K2
  TransformSpec<T> transform;

  static ConvCapsuleLayer init(bool shared, size_t window, size_t in_channels, size_t parents,
                               size_t dim, Rng& rng, const std::string& name_prefix) {
    ConvCapsuleLayer layer;
    layer.window = window;
    layer.transform =
        TransformSpec<T>::init(shared, window * in_channels, parents, dim, rng, name_prefix);
    return layer;
  }

  CapsuleGrid<T> forward(const CapsuleGrid<T>& grid, const RoutingConfig& routing,
                         SquashKind squash_kind) const {
    size_t in_positions = grid.positions();
    if (in_positions < window) {
      throw ShapeError("conv capsules: " + std::to_string(in_positions) +
                       " input positions shorter than window " + std::to_string(window));
    }
    size_t channels = grid.channels();
    size_t dim = grid.dim();
    size_t out_positions = in_positions - window + 1;
    size_t parents = transform.parents();

    std::vector<Tensor<T>> pose_rows, prob_rows;
    pose_rows.reserve(out_positions);
    prob_rows.reserve(out_positions);
    for (size_t p = 0; p < out_positions; ++p) {
      Tensor<T> children =
          reshape(slice_rows(grid.poses, p, p + window), {window * channels, dim});
      Tensor<T> child_probs =
          reshape(slice_rows(grid.activations, p, p + window), {window * channels});
      RoutingResult<T> routed = route(compute_votes(children, transform), child_probs, routing,
                                      squash_kind);
      pose_rows.push_back(reshape(routed.parents, {1, parents, dim}));
      prob_rows.push_back(reshape(routed.parent_probs, {1, parents}));
    }
    CapsuleGrid<T> out;
    out.poses = concat(pose_rows, 0);
    out.activations = concat(prob_rows, 0);
    return out;
  }
};

template <typename T>
struct FCCapsuleOutput {
  Tensor<T> poses;      // [E, d]
  Tensor<T> probs;      // [E]
  Tensor<T> couplings;  // [H, E], final-iteration coefficients
};

// Flattens the grid into one child list and routes it to the E output
// capsules.
template <typename T>
struct FCCapsuleLayer {
  TransformSpec<T> transform;

  static FCCapsuleLayer init(bool shared, size_t children, size_t parents, size_t dim, Rng& rng,
                             const std::string& name_prefix) {
    FCCapsuleLayer layer;
    layer.transform = TransformSpec<T>::init(shared, children, parents, dim, rng, name_prefix);
    return layer;
  }

  FCCapsuleOutput<T> forward(const CapsuleGrid<T>& grid, const RoutingConfig& routing,
                             SquashKind squash_kind) const {
    size_t children = grid.positions() * grid.channels();
    Tensor<T> flat_poses = reshape(grid.poses, {children, grid.dim()});
    Tensor<T> flat_probs = reshape(grid.activations, {children});
    RoutingResult<T> routed =
        route(compute_votes(flat_poses, transform), flat_probs, routing, squash_kind);
    return {routed.parents, routed.parent_probs, routed.couplings};
  }
};

}  // namespace capstext

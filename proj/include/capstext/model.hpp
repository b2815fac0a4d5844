#pragma once

#include <string>
#include <vector>

#include "capstext/config.hpp"
#include "capstext/error.hpp"
#include "capstext/layers.hpp"
#include "capstext/text.hpp"

namespace capstext {

// One branch of the network: n-gram convolution, primary capsules, optional
// capsule convolution, fully connected capsules.
template <typename T>
struct LayerStack {
  NGramConvLayer<T> conv;
  PrimaryCapsuleLayer<T> primary;
  std::optional<ConvCapsuleLayer<T>> conv_caps;
  FCCapsuleLayer<T> fc;
};

template <typename T>
struct Model {
  ModelConfig config;
  Tensor<T> embeddings;  // [vocab, V], row 0 is the padding vector
  std::vector<LayerStack<T>> branches;

  size_t real_category_count() const { return config.categories.size(); }

  std::vector<Tensor<T>> parameters() {
    std::vector<Tensor<T>> params;
    params.push_back(embeddings);
    for (auto& branch : branches) {
      params.push_back(branch.conv.filters);
      params.push_back(branch.conv.bias);
      params.push_back(branch.primary.filters);
      params.push_back(branch.primary.bias);
      if (branch.conv_caps) {
        params.push_back(branch.conv_caps->transform.weights);
        params.push_back(branch.conv_caps->transform.bias);
      }
      params.push_back(branch.fc.transform.weights);
      params.push_back(branch.fc.transform.bias);
    }
    return params;
  }

  std::vector<Tensor<T>> trainable_parameters() {
    std::vector<Tensor<T>> params;
    for (auto& p : parameters()) {
      if (p.requires_grad()) params.push_back(p);
    }
    return params;
  }
};

template <typename T>
struct ClassOutputs {
  Tensor<T> probs;  // [E]
  Tensor<T> poses;  // [E, d]
  // Final-iteration couplings of the FC routing, one [H, E] tensor per
  // branch; only populated when the forward pass was asked to retain them.
  std::vector<Tensor<T>> branch_couplings;
};

template <typename T>
Model<T> build_model(const ModelConfig& config, const EmbeddingTable& table) {
  config.validate();
  if (table.rows != config.vocab_size || table.dim != config.embed_dim) {
    throw ConfigError("embedding table " + std::to_string(table.rows) + "x" +
                      std::to_string(table.dim) + " does not match config " +
                      std::to_string(config.vocab_size) + "x" + std::to_string(config.embed_dim));
  }

  Model<T> model;
  model.config = config;

  std::vector<T> embed_values(table.data.begin(), table.data.end());
  model.embeddings = Tensor<T>::from_values({table.rows, table.dim}, std::move(embed_values),
                                            config.train_embeddings);
  model.embeddings.set_name("embedding");

  Rng rng(config.seed);
  size_t outputs = config.output_count();
  auto ngrams = config.branch_ngrams();
  for (size_t bi = 0; bi < ngrams.size(); ++bi) {
    std::string prefix = "branch" + std::to_string(bi);
    LayerStack<T> stack;
    stack.conv = NGramConvLayer<T>::init(ngrams[bi], config.conv_filters, config.embed_dim, rng,
                                         prefix + ".conv");
    stack.primary = PrimaryCapsuleLayer<T>::init(config.primary_channels, config.conv_filters,
                                                 config.capsule_dim, rng, prefix + ".primary");
    size_t positions = config.max_len - ngrams[bi] + 1;
    size_t fc_children;
    if (config.arch == Arch::shortcut) {
      fc_children = positions * config.primary_channels;
    } else {
      stack.conv_caps = ConvCapsuleLayer<T>::init(
          config.shared_weights, config.conv_caps_window, config.primary_channels,
          config.conv_caps_filters, config.capsule_dim, rng, prefix + ".conv_caps");
      fc_children = (positions - config.conv_caps_window + 1) * config.conv_caps_filters;
    }
    stack.fc = FCCapsuleLayer<T>::init(config.shared_weights, fc_children, outputs,
                                       config.capsule_dim, rng, prefix + ".fc");
    model.branches.push_back(std::move(stack));
  }
  return model;
}

template <typename T>
ClassOutputs<T> forward_example(const Model<T>& model, const EncodedSentence& sentence,
                                bool retain_couplings = false) {
  if (sentence.indices.size() != model.config.max_len) {
    throw ShapeError("forward: sentence encoded to length " +
                     std::to_string(sentence.indices.size()) + ", model expects " +
                     std::to_string(model.config.max_len));
  }
  Tensor<T> embedded = embed_rows(model.embeddings, sentence.indices);

  ClassOutputs<T> out;
  std::vector<Tensor<T>> branch_probs, branch_poses;
  size_t outputs = model.config.output_count();
  size_t dim = model.config.capsule_dim;
  for (const auto& branch : model.branches) {
    Tensor<T> features = branch.conv.forward(embedded);
    CapsuleGrid<T> grid = branch.primary.forward(features, model.config.squash);
    if (branch.conv_caps) {
      grid = branch.conv_caps->forward(grid, model.config.routing, model.config.squash);
    }
    FCCapsuleOutput<T> fc = branch.fc.forward(grid, model.config.routing, model.config.squash);
    branch_probs.push_back(reshape(fc.probs, {1, outputs}));
    branch_poses.push_back(reshape(fc.poses, {1, outputs, dim}));
    if (retain_couplings) out.branch_couplings.push_back(fc.couplings);
  }

  if (model.branches.size() == 1) {
    out.probs = reshape(branch_probs[0], {outputs});
    out.poses = reshape(branch_poses[0], {outputs, dim});
  } else {
    out.probs = mean(concat(branch_probs, 0), 0);
    out.poses = mean(concat(branch_poses, 0), 0);
  }
  return out;
}

template <typename T>
std::vector<ClassOutputs<T>> forward_batch(const Model<T>& model,
                                           const std::vector<EncodedSentence>& batch,
                                           bool retain_couplings = false) {
  std::vector<ClassOutputs<T>> outputs;
  outputs.reserve(batch.size());
  for (const auto& sentence : batch) {
    outputs.push_back(forward_example(model, sentence, retain_couplings));
  }
  return outputs;
}

namespace detail {

// [n]-tensor with the scalar value replicated.
template <typename T>
Tensor<T> broadcast_scalar(const Tensor<T>& scalar, size_t n) {
  return reshape(mul_leading(Tensor<T>::filled({1, n}, T(1)), scalar), {n});
}

template <typename T>
Tensor<T> one_hot(const std::vector<size_t>& targets, size_t slots) {
  std::vector<T> values(slots, T(0));
  for (size_t t : targets) values[t] = T(1);
  return Tensor<T>::from_values({slots}, std::move(values));
}

}  // namespace detail

// Per-example loss over the output probabilities. Targets are indices of
// real categories; the orphan slot only ever acts as a negative class.
//
// margin:  sum_k T_k max(0, 0.9 - a_k)^2 + 0.5 (1 - T_k) max(0, a_k - 0.1)^2
// spread:  sum_{k != t} max(0, 0.2 - (a_t - a_k))^2, single-label only
// cross_entropy: -log softmax(a)_t, single-label only
template <typename T>
Tensor<T> example_loss(const ClassOutputs<T>& outputs, const std::vector<size_t>& targets,
                       LossKind kind, size_t real_categories) {
  size_t slots = outputs.probs.extent(0);
  if (targets.empty()) throw ContractError("loss: example has no target");
  for (size_t t : targets) {
    if (t >= real_categories) {
      throw ContractError("loss: target index " + std::to_string(t) +
                          " is not a real category (orphan cannot be a target)");
    }
  }
  Tensor<T> truth = detail::one_hot<T>(targets, slots);
  const Tensor<T>& probs = outputs.probs;

  switch (kind) {
    case LossKind::margin: {
      Tensor<T> present = relu(sub(Tensor<T>::filled({slots}, T(0.9)), probs));
      Tensor<T> absent = relu(sub(probs, Tensor<T>::filled({slots}, T(0.1))));
      Tensor<T> positive = mul(truth, mul(present, present));
      Tensor<T> negative =
          scale(mul(sub(Tensor<T>::filled({slots}, T(1)), truth), mul(absent, absent)), T(0.5));
      return sum_all(add(positive, negative));
    }
    case LossKind::spread: {
      if (targets.size() != 1) throw ContractError("spread loss requires a single-label target");
      Tensor<T> target_prob = sum_all(mul(truth, probs));  // [1]
      Tensor<T> gap = add(sub(Tensor<T>::filled({slots}, T(0.2)),
                              detail::broadcast_scalar(target_prob, slots)),
                          probs);
      Tensor<T> hinge = relu(gap);
      Tensor<T> masked = mul(sub(Tensor<T>::filled({slots}, T(1)), truth), mul(hinge, hinge));
      return sum_all(masked);
    }
    case LossKind::cross_entropy: {
      if (targets.size() != 1) {
        throw ContractError("cross-entropy loss requires a single-label target");
      }
      Tensor<T> log_probs = log(softmax(probs, 0));
      return scale(sum_all(mul(truth, log_probs)), T(-1));
    }
  }
  throw ContractError("loss: unknown kind");
}

// Mean loss over a batch.
template <typename T>
Tensor<T> batch_loss(const std::vector<ClassOutputs<T>>& outputs,
                     const std::vector<std::vector<size_t>>& targets, LossKind kind,
                     size_t real_categories) {
  if (outputs.empty() || outputs.size() != targets.size()) {
    throw ContractError("batch_loss: outputs and targets must align and be non-empty");
  }
  std::vector<Tensor<T>> losses;
  losses.reserve(outputs.size());
  for (size_t i = 0; i < outputs.size(); ++i) {
    losses.push_back(example_loss(outputs[i], targets[i], kind, real_categories));
  }
  return mean(concat(losses, 0), 0);
}

// Argmax over real categories (the orphan slot never predicts); ties break
// toward the lower index.
inline size_t predict_single(std::span<const double> probs, size_t real_categories) {
  if (real_categories == 0 || probs.size() < real_categories) {
    throw ContractError("predict: invalid category count");
  }
  size_t best = 0;
  for (size_t k = 1; k < real_categories; ++k) {
    if (probs[k] > probs[best]) best = k;
  }
  return best;
}

// All real categories above the threshold; falls back to the argmax
// singleton when none clears it.
inline std::vector<size_t> predict_multi(std::span<const double> probs, size_t real_categories,
                                         double threshold) {
  std::vector<size_t> picked;
  for (size_t k = 0; k < real_categories; ++k) {
    if (probs[k] > threshold) picked.push_back(k);
  }
  if (picked.empty()) picked.push_back(predict_single(probs, real_categories));
  return picked;
}

template <typename T>
std::vector<double> extract_probs(const ClassOutputs<T>& outputs) {
  auto values = outputs.probs.values();
  return std::vector<double>(values.begin(), values.end());
}

}  // namespace capstext

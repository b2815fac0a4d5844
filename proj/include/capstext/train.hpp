#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "capstext/config.hpp"
#include "capstext/metrics.hpp"
#include "capstext/model.hpp"
#include "capstext/text.hpp"

namespace capstext {

struct TrainConfig {
  double learning_rate = 1e-3;
  size_t batch_size = 25;
  size_t epochs = 10;
  uint64_t seed = 0;
  bool shuffle = true;
  Precision precision = Precision::f32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Stop once train-split accuracy reaches this value; 0 disables the check.
  double early_stop_train_accuracy = 0.0;
};

struct TrainHistoryStep {
  size_t step = 0;   // 1-based, monotone
  size_t epoch = 0;  // 1-based
  double loss = 0.0;
  bool has_dev_metric = false;
  double dev_metric = 0.0;
  int64_t timestamp_ms = 0;
};

struct TrainHistory {
  std::vector<TrainHistoryStep> steps;

  // Mean training loss of the steps belonging to one epoch.
  double epoch_mean_loss(size_t epoch) const {
    double total = 0.0;
    size_t count = 0;
    for (const auto& s : steps) {
      if (s.epoch == epoch) {
        total += s.loss;
        ++count;
      }
    }
    return count == 0 ? 0.0 : total / static_cast<double>(count);
  }

  size_t last_epoch() const { return steps.empty() ? 0 : steps.back().epoch; }
};

inline void write_history_csv(const TrainHistory& history, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write history: " + path);
  out << "step,epoch,loss,dev_metric,timestamp_ms\n";
  for (const auto& s : history.steps) {
    out << s.step << "," << s.epoch << "," << s.loss << ",";
    if (s.has_dev_metric) out << s.dev_metric;
    out << "," << s.timestamp_ms << "\n";
  }
}

// Loss/metric content comparison; wall-clock stamps excluded.
inline bool history_equivalent(const TrainHistory& a, const TrainHistory& b) {
  if (a.steps.size() != b.steps.size()) return false;
  for (size_t i = 0; i < a.steps.size(); ++i) {
    const auto& x = a.steps[i];
    const auto& y = b.steps[i];
    if (x.step != y.step || x.epoch != y.epoch || x.loss != y.loss ||
        x.has_dev_metric != y.has_dev_metric ||
        (x.has_dev_metric && x.dev_metric != y.dev_metric)) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename T>
struct AdamState {
  int64_t t = 0;
  std::map<std::string, std::pair<std::vector<T>, std::vector<T>>> moments;  // m, v per name
};

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One bias-corrected Adam update over the given parameters. Parameters
// without a gradient entry are treated as zero-gradient.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, const GradientMap<T>& grads, AdamState<T>& state,
               const AdamHyper& hyper) {
  ++state.t;
  T correction1 = T(1) - static_cast<T>(std::pow(hyper.beta1, static_cast<double>(state.t)));
  T correction2 = T(1) - static_cast<T>(std::pow(hyper.beta2, static_cast<double>(state.t)));
  T b1 = static_cast<T>(hyper.beta1);
  T b2 = static_cast<T>(hyper.beta2);
  T lr = static_cast<T>(hyper.learning_rate);
  T eps = static_cast<T>(hyper.epsilon);

  for (auto& param : params) {
    auto it = grads.find(param.name());
    if (it != grads.end() && it->second.shape() != param.shape()) {
      throw ContractError("adam_step: gradient shape " + shape_str(it->second.shape()) +
                          " does not match parameter '" + param.name() + "' " +
                          shape_str(param.shape()));
    }
    auto& [m, v] = state.moments[param.name()];
    if (m.size() != param.numel()) {
      m.assign(param.numel(), T(0));
      v.assign(param.numel(), T(0));
    }
    auto storage = param.mutable_values();
    std::span<const T> g;
    if (it != grads.end()) g = it->second.values();
    for (size_t i = 0; i < storage.size(); ++i) {
      T gi = g.empty() ? T(0) : g[i];
      m[i] = b1 * m[i] + (T(1) - b1) * gi;
      v[i] = b2 * v[i] + (T(1) - b2) * gi * gi;
      T mhat = m[i] / correction1;
      T vhat = v[i] / correction2;
      storage[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

template <typename T>
size_t category_index(const Model<T>& model, const std::string& label) {
  const auto& cats = model.config.categories;
  auto it = std::find(cats.begin(), cats.end(), label);
  if (it == cats.end()) throw ContractError("unknown category '" + label + "'");
  return static_cast<size_t>(it - cats.begin());
}

template <typename T>
std::vector<std::vector<size_t>> label_targets(const Model<T>& model,
                                               const std::vector<LabeledExample>& split) {
  std::vector<std::vector<size_t>> targets;
  targets.reserve(split.size());
  for (const auto& example : split) {
    std::vector<size_t> t;
    for (const auto& label : example.labels) t.push_back(category_index(model, label));
    targets.push_back(std::move(t));
  }
  return targets;
}

template <typename T>
MetricsReport evaluate_single(const Model<T>& model, const std::vector<LabeledExample>& split,
                              const Vocabulary& vocab) {
  std::vector<size_t> predictions, truths;
  for (const auto& example : split) {
    if (example.labels.size() != 1) {
      throw ContractError("evaluate_single: multi-label example present");
    }
    truths.push_back(category_index(model, *example.labels.begin()));
    auto outputs = forward_example(model, encode_example(example, vocab, model.config.max_len));
    predictions.push_back(predict_single(extract_probs(outputs), model.real_category_count()));
  }
  return metrics_single(predictions, truths);
}

template <typename T>
MetricsReport evaluate_multi(const Model<T>& model, const std::vector<LabeledExample>& split,
                             const Vocabulary& vocab, double threshold,
                             bool include_macro = false) {
  std::vector<std::set<size_t>> predictions, truths;
  for (const auto& example : split) {
    std::set<size_t> truth;
    for (const auto& label : example.labels) truth.insert(category_index(model, label));
    truths.push_back(std::move(truth));
    auto outputs = forward_example(model, encode_example(example, vocab, model.config.max_len));
    auto picked = predict_multi(extract_probs(outputs), model.real_category_count(), threshold);
    predictions.emplace_back(picked.begin(), picked.end());
  }
  return metrics_multi(predictions, truths, model.real_category_count(), include_macro);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
std::vector<std::vector<T>> snapshot_params(Model<T>& model) {
  std::vector<std::vector<T>> snap;
  for (auto& p : model.parameters()) {
    auto v = p.values();
    snap.emplace_back(v.begin(), v.end());
  }
  return snap;
}

template <typename T>
void restore_params(Model<T>& model, const std::vector<std::vector<T>>& snap) {
  auto params = model.parameters();
  for (size_t i = 0; i < params.size(); ++i) {
    auto storage = params[i].mutable_values();
    std::copy(snap[i].begin(), snap[i].end(), storage.begin());
  }
}

inline int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace detail

// Aborts the run when a step produces a non-finite loss, naming the step and
// the examples in the offending batch.
inline void ensure_finite_loss(double loss, size_t step, const std::vector<size_t>& example_ids) {
  if (std::isfinite(loss)) return;
  std::ostringstream ids;
  for (size_t i = 0; i < example_ids.size(); ++i) ids << (i ? "," : "") << example_ids[i];
  throw TrainError("non-finite loss at step " + std::to_string(step) + " (examples " + ids.str() +
                   ")");
}

// Seeded mini-batch training with Adam. Records the loss of every step; the
// dev split, when non-empty, is scored after each epoch (accuracy for
// single-label dev sets, micro-F1 otherwise) and the best-scoring parameters
// are restored at the end.
template <typename T>
TrainHistory train(Model<T>& model, const std::vector<LabeledExample>& train_split,
                   const std::vector<LabeledExample>& dev_split, const Vocabulary& vocab,
                   const TrainConfig& cfg) {
  if (train_split.empty()) throw ContractError("train: empty training split");
  if (cfg.batch_size < 1) throw ContractError("train: batch size must be >= 1");
  if (!(cfg.learning_rate > 0.0) && cfg.learning_rate != 0.0) {
    throw ContractError("train: negative learning rate");
  }

  std::vector<EncodedSentence> encoded;
  encoded.reserve(train_split.size());
  for (const auto& example : train_split) {
    encoded.push_back(encode_example(example, vocab, model.config.max_len));
  }
  auto targets = label_targets(model, train_split);
  if (model.config.loss != LossKind::margin) {
    for (size_t i = 0; i < targets.size(); ++i) {
      if (targets[i].size() != 1) {
        throw ContractError("train: " + to_string(model.config.loss) +
                            " loss requires single-label examples (example " + std::to_string(i) +
                            " has " + std::to_string(targets[i].size()) + " labels)");
      }
    }
  }

  bool dev_multi = false;
  for (const auto& example : dev_split) {
    if (example.labels.size() > 1) dev_multi = true;
  }

  auto params = model.parameters();
  AdamState<T> adam;
  AdamHyper hyper{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon};

  TrainHistory history;
  Rng shuffle_rng(cfg.seed);
  std::vector<size_t> order(train_split.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_dev = -1.0;
  std::vector<std::vector<T>> best_params;
  size_t step = 0;

  for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle) {
      for (size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);
      }
    }
    size_t batches = (order.size() + cfg.batch_size - 1) / cfg.batch_size;
    for (size_t b = 0; b < batches; ++b) {
      size_t begin = b * cfg.batch_size;
      size_t end = std::min(begin + cfg.batch_size, order.size());
      std::vector<EncodedSentence> batch;
      std::vector<std::vector<size_t>> batch_targets;
      for (size_t i = begin; i < end; ++i) {
        batch.push_back(encoded[order[i]]);
        batch_targets.push_back(targets[order[i]]);
      }
      auto outputs = forward_batch(model, batch);
      Tensor<T> loss =
          batch_loss(outputs, batch_targets, model.config.loss, model.real_category_count());
      double loss_value = static_cast<double>(loss.scalar());
      ++step;
      ensure_finite_loss(loss_value, step,
                         std::vector<size_t>(order.begin() + static_cast<ptrdiff_t>(begin),
                                             order.begin() + static_cast<ptrdiff_t>(end)));
      GradientMap<T> grads = backward(loss);
      if (model.config.train_embeddings) {
        auto it = grads.find("embedding");
        if (it != grads.end()) {
          // padding row stays fixed at zero
          auto g = it->second.mutable_values();
          std::fill(g.begin(), g.begin() + static_cast<ptrdiff_t>(model.config.embed_dim), T(0));
        }
      }
      adam_step(params, grads, adam, hyper);

      TrainHistoryStep record;
      record.step = step;
      record.epoch = epoch;
      record.loss = loss_value;
      record.timestamp_ms = detail::now_ms();
      history.steps.push_back(record);
    }

    if (!dev_split.empty()) {
      MetricsReport report =
          dev_multi ? evaluate_multi(model, dev_split, vocab, model.config.threshold)
                    : evaluate_single(model, dev_split, vocab);
      double metric = dev_multi ? report.f1 : report.accuracy;
      history.steps.back().has_dev_metric = true;
      history.steps.back().dev_metric = metric;
      // ties keep the later snapshot: with small dev sets the metric
      // saturates and the longer-trained model is the better pick
      if (metric >= best_dev) {
        best_dev = metric;
        best_params = detail::snapshot_params(model);
      }
    }

    if (cfg.early_stop_train_accuracy > 0.0) {
      MetricsReport report = evaluate_single(model, train_split, vocab);
      if (report.accuracy >= cfg.early_stop_train_accuracy) break;
    }
  }

  if (!best_params.empty()) detail::restore_params(model, best_params);
  return history;
}

}  // namespace capstext

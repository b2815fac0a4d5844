#pragma once

// Shared helpers for the test suites: random tensors, naive reference
// implementations, and synthetic keyword corpora.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "capstext/ops.hpp"
#include "capstext/rng.hpp"
#include "capstext/tensor.hpp"
#include "capstext/text.hpp"

namespace testsupport {

using capstext::Rng;
using capstext::Shape;
using capstext::Tensor;

// Values drawn from +-[lo, hi], keeping inputs away from kinks (relu at 0)
// so finite differences stay valid.
inline std::vector<double> random_values(Rng& rng, size_t n, double lo = 0.1, double hi = 1.0) {
  std::vector<double> values(n);
  for (auto& v : values) {
    double magnitude = rng.next_uniform(lo, hi);
    v = rng.next_unit() < 0.5 ? -magnitude : magnitude;
  }
  return values;
}

inline Tensor<double> random_tensor(Rng& rng, Shape shape, bool requires_grad = true,
                                    double lo = 0.1, double hi = 1.0) {
  size_t n = capstext::shape_numel(shape);
  return Tensor<double>::from_values(std::move(shape), random_values(rng, n, lo, hi),
                                     requires_grad);
}

inline Tensor<double> random_positive_tensor(Rng& rng, Shape shape, bool requires_grad = true) {
  size_t n = capstext::shape_numel(shape);
  std::vector<double> values(n);
  for (auto& v : values) v = rng.next_uniform(0.1, 2.0);
  return Tensor<double>::from_values(std::move(shape), std::move(values), requires_grad);
}

// Scalar probe: sum of out * fixed random weights, so every output element
// contributes a distinct gradient path. The weights are drawn once so the
// probe stays deterministic across re-evaluations.
class WeightedProbe {
 public:
  WeightedProbe(const Tensor<double>& sample, Rng& rng)
      : weights_(Tensor<double>::from_values(sample.shape(),
                                             random_values(rng, sample.numel()))) {}

  Tensor<double> operator()(const Tensor<double>& out) const {
    return capstext::sum_all(capstext::mul(out, weights_));
  }

 private:
  Tensor<double> weights_;
};

// ---------------------------------------------------------------------------
// Synthetic keyword corpora
// ---------------------------------------------------------------------------

struct SyntheticCorpus {
  std::vector<capstext::LabeledExample> train;
  std::vector<capstext::LabeledExample> dev;
  std::vector<capstext::LabeledExample> multi_test;  // two-label concatenations
  std::vector<std::string> categories;
};

// Single-label sentences built from per-class signature keywords plus shared
// filler words; multi-label test documents concatenate two sentences of
// different classes. The halves of a concatenation use their own length
// range so the combined document stays inside the encoding window while
// single-label lengths cover the whole position range.
inline SyntheticCorpus make_keyword_corpus(size_t classes, size_t train_per_class,
                                           size_t dev_per_class, size_t multi_count,
                                           uint64_t seed, size_t min_len = 8,
                                           size_t max_len = 13, size_t pair_half_min = 0,
                                           size_t pair_half_max = 0) {
  if (pair_half_min == 0) pair_half_min = min_len;
  if (pair_half_max == 0) pair_half_max = max_len;
  Rng rng(seed);
  std::vector<std::string> filler;
  for (size_t i = 0; i < 24; ++i) filler.push_back("w" + std::to_string(i));
  std::vector<std::vector<std::string>> keywords(classes);
  for (size_t c = 0; c < classes; ++c) {
    for (size_t k = 0; k < 4; ++k) {
      keywords[c].push_back("k" + std::to_string(c) + "x" + std::to_string(k));
    }
  }

  SyntheticCorpus corpus;
  for (size_t c = 0; c < classes; ++c) corpus.categories.push_back("cat" + std::to_string(c));

  auto make_sentence = [&](size_t cls, size_t lo, size_t hi) {
    capstext::LabeledExample example;
    example.labels.insert(corpus.categories[cls]);
    size_t len = lo + rng.next_below(hi - lo + 1);
    size_t planted = 0;
    for (size_t i = 0; i < len; ++i) {
      if (rng.next_unit() < 0.5) {
        example.tokens.push_back(keywords[cls][rng.next_below(keywords[cls].size())]);
        ++planted;
      } else {
        example.tokens.push_back(filler[rng.next_below(filler.size())]);
      }
    }
    while (planted < 4) {
      example.tokens[rng.next_below(example.tokens.size())] =
          keywords[cls][rng.next_below(keywords[cls].size())];
      ++planted;
    }
    return example;
  };

  for (size_t c = 0; c < classes; ++c) {
    for (size_t i = 0; i < train_per_class; ++i) {
      corpus.train.push_back(make_sentence(c, min_len, max_len));
    }
    for (size_t i = 0; i < dev_per_class; ++i) {
      corpus.dev.push_back(make_sentence(c, min_len, max_len));
    }
  }
  for (size_t i = 0; i < multi_count; ++i) {
    size_t a = rng.next_below(classes);
    size_t b = rng.next_below(classes);
    while (b == a) b = rng.next_below(classes);
    capstext::LabeledExample first = make_sentence(a, pair_half_min, pair_half_max);
    capstext::LabeledExample second = make_sentence(b, pair_half_min, pair_half_max);
    capstext::LabeledExample merged;
    merged.tokens = first.tokens;
    merged.tokens.insert(merged.tokens.end(), second.tokens.begin(), second.tokens.end());
    merged.labels.insert(corpus.categories[a]);
    merged.labels.insert(corpus.categories[b]);
    corpus.multi_test.push_back(std::move(merged));
  }
  return corpus;
}

inline void write_tsv(const std::vector<capstext::LabeledExample>& examples,
                      const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  for (const auto& example : examples) {
    std::string labels;
    for (const auto& label : example.labels) {
      if (!labels.empty()) labels += ",";
      labels += label;
    }
    out << labels << "\t";
    for (size_t i = 0; i < example.tokens.size(); ++i) {
      out << (i ? " " : "") << example.tokens[i];
    }
    out << "\n";
  }
}

inline std::string write_corpus_dir(const SyntheticCorpus& corpus, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_tsv(corpus.train, dir + "/train.tsv");
  write_tsv(corpus.dev, dir + "/dev.tsv");
  std::vector<capstext::LabeledExample> test =
      corpus.multi_test.empty() ? corpus.dev : corpus.multi_test;
  write_tsv(test, dir + "/test.tsv");
  return dir;
}

inline std::string temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace testsupport

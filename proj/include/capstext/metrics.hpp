#pragma once

#include <cstddef>
#include <set>
#include <vector>

namespace capstext {

struct MetricsReport {
  enum class Mode { single, multi };
  Mode mode = Mode::single;
  size_t examples = 0;

  // single-label
  double accuracy = 0.0;
  size_t correct = 0;

  // multi-label, micro-averaged over pooled (example, class) counts
  double exact_match = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  size_t true_positives = 0;
  size_t false_positives = 0;
  size_t false_negatives = 0;

  // macro variants, filled only when requested
  bool has_macro = false;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
};

MetricsReport metrics_single(const std::vector<size_t>& predictions,
                             const std::vector<size_t>& truths);

MetricsReport metrics_multi(const std::vector<std::set<size_t>>& predictions,
                            const std::vector<std::set<size_t>>& truths, size_t category_count,
                            bool include_macro = false);

}  // namespace capstext

#include "capstext/metrics.hpp"

#include "capstext/error.hpp"

namespace capstext {

namespace {

double safe_f1(double precision, double recall) {
  double denom = precision + recall;
  return denom == 0.0 ? 0.0 : 2.0 * precision * recall / denom;
}

}  // namespace

MetricsReport metrics_single(const std::vector<size_t>& predictions,
                             const std::vector<size_t>& truths) {
  if (predictions.size() != truths.size()) {
    throw ContractError("metrics_single: prediction/truth count mismatch");
  }
  MetricsReport report;
  report.mode = MetricsReport::Mode::single;
  report.examples = truths.size();
  for (size_t i = 0; i < truths.size(); ++i) {
    if (predictions[i] == truths[i]) ++report.correct;
  }
  report.accuracy = report.examples == 0
                        ? 0.0
                        : static_cast<double>(report.correct) / static_cast<double>(report.examples);
  return report;
}

MetricsReport metrics_multi(const std::vector<std::set<size_t>>& predictions,
                            const std::vector<std::set<size_t>>& truths, size_t category_count,
                            bool include_macro) {
  if (predictions.size() != truths.size()) {
    throw ContractError("metrics_multi: prediction/truth count mismatch");
  }
  MetricsReport report;
  report.mode = MetricsReport::Mode::multi;
  report.examples = truths.size();

  std::vector<size_t> tp(category_count, 0), fp(category_count, 0), fn(category_count, 0);
  size_t exact = 0;
  for (size_t i = 0; i < truths.size(); ++i) {
    if (predictions[i] == truths[i]) ++exact;
    for (size_t k : predictions[i]) {
      if (k >= category_count) throw ContractError("metrics_multi: prediction index out of range");
      if (truths[i].count(k)) {
        ++tp[k];
      } else {
        ++fp[k];
      }
    }
    for (size_t k : truths[i]) {
      if (k >= category_count) throw ContractError("metrics_multi: truth index out of range");
      if (!predictions[i].count(k)) ++fn[k];
    }
  }

  for (size_t k = 0; k < category_count; ++k) {
    report.true_positives += tp[k];
    report.false_positives += fp[k];
    report.false_negatives += fn[k];
  }
  size_t predicted = report.true_positives + report.false_positives;
  size_t actual = report.true_positives + report.false_negatives;
  report.precision =
      predicted == 0 ? 0.0 : static_cast<double>(report.true_positives) / static_cast<double>(predicted);
  report.recall =
      actual == 0 ? 0.0 : static_cast<double>(report.true_positives) / static_cast<double>(actual);
  report.f1 = safe_f1(report.precision, report.recall);
  report.exact_match =
      report.examples == 0 ? 0.0 : static_cast<double>(exact) / static_cast<double>(report.examples);

  if (include_macro) {
    report.has_macro = true;
    double psum = 0.0, rsum = 0.0, fsum = 0.0;
    for (size_t k = 0; k < category_count; ++k) {
      size_t pred_k = tp[k] + fp[k];
      size_t act_k = tp[k] + fn[k];
      double pk = pred_k == 0 ? 0.0 : static_cast<double>(tp[k]) / static_cast<double>(pred_k);
      double rk = act_k == 0 ? 0.0 : static_cast<double>(tp[k]) / static_cast<double>(act_k);
      psum += pk;
      rsum += rk;
      fsum += safe_f1(pk, rk);
    }
    double n = static_cast<double>(category_count);
    report.macro_precision = category_count == 0 ? 0.0 : psum / n;
    report.macro_recall = category_count == 0 ? 0.0 : rsum / n;
    report.macro_f1 = category_count == 0 ? 0.0 : fsum / n;
  }
  return report;
}

}  // namespace capstext

#pragma once

#include <string>
#include <vector>

#include "medmerge/tensor.hpp"

namespace mm {

struct MetricsReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> per_class_f1;
  std::vector<bool> class_included;  // false when absent from both preds and labels
  std::vector<std::vector<int64_t>> confusion;  // [true][pred]
  int64_t sample_count = 0;

  std::string summary() const {
    std::string s = "samples " + std::to_string(sample_count) + "\naccuracy " +
                    std::to_string(accuracy) + "\nmacro_f1 " + std::to_string(macro_f1) + "\n";
    for (size_t c = 0; c < per_class_f1.size(); ++c)
      s += "f1_class" + std::to_string(c) + " " +
           (class_included[c] ? std::to_string(per_class_f1[c]) : std::string("excluded")) + "\n";
    return s;
  }
};

/// Confusion-matrix metrics. Per-class F1 = 2PR/(P+R) with 0/0 -> 0.
/// Classes absent from both predictions and labels are excluded from the
/// macro mean; classes absent from one side only contribute F1 = 0.
inline MetricsReport compute_metrics(const IntTensor& preds, const IntTensor& labels,
                                     int64_t class_count) {
  require(preds.size() == labels.size(), "metrics: preds/labels length mismatch");
  require(!preds.empty(), "metrics: empty prediction set");
  MetricsReport rep;
  rep.sample_count = static_cast<int64_t>(preds.size());
  rep.confusion.assign(static_cast<size_t>(class_count),
                       std::vector<int64_t>(static_cast<size_t>(class_count), 0));
  for (size_t i = 0; i < preds.size(); ++i) {
    int64_t p = preds[i], y = labels[i];
    require(p >= 0 && p < class_count && y >= 0 && y < class_count,
            "metrics: class index out of range");
    ++rep.confusion[static_cast<size_t>(y)][static_cast<size_t>(p)];
  }
  int64_t correct = 0;
  double f1_sum = 0.0;
  int64_t included = 0;
  for (int64_t c = 0; c < class_count; ++c) {
    int64_t tp = rep.confusion[static_cast<size_t>(c)][static_cast<size_t>(c)];
    int64_t true_total = 0, pred_total = 0;
    for (int64_t j = 0; j < class_count; ++j) {
      true_total += rep.confusion[static_cast<size_t>(c)][static_cast<size_t>(j)];
      pred_total += rep.confusion[static_cast<size_t>(j)][static_cast<size_t>(c)];
    }
    correct += tp;
    bool include = true_total > 0 || pred_total > 0;
    double precision = pred_total > 0 ? static_cast<double>(tp) / static_cast<double>(pred_total) : 0.0;
    double recall = true_total > 0 ? static_cast<double>(tp) / static_cast<double>(true_total) : 0.0;
    double f1 = (precision + recall > 0.0) ? 2.0 * precision * recall / (precision + recall) : 0.0;
    rep.per_class_f1.push_back(f1);
    rep.class_included.push_back(include);
    if (include) {
      f1_sum += f1;
      ++included;
    }
  }
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(rep.sample_count);
  rep.macro_f1 = included > 0 ? f1_sum / static_cast<double>(included) : 0.0;
  return rep;
}

inline double macro_f1(const IntTensor& preds, const IntTensor& labels, int64_t class_count) {
  return compute_metrics(preds, labels, class_count).macro_f1;
}

}  // namespace mm

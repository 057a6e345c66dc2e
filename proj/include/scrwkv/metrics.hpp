#pragma once

#include <iosfwd>

#include "scrwkv/tensor.hpp"

namespace scrwkv {

struct Confusion {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  Confusion& operator+=(const Confusion& o) {
    tp += o.tp, fp += o.fp, fn += o.fn, tn += o.tn;
    return *this;
  }
};

struct PrfPoint {
  double threshold = 0;
  double precision = 0, recall = 0, f1 = 0;
};

// P = tp/(tp+fp), R = tp/(tp+fn), F1 = 2PR/(P+R). An empty denominator gives
// 0, except that a mask and prediction both empty score P = R = F1 = 1.
PrfPoint prf(const Confusion& c, double threshold);

// Crack and background IoU averaged; an empty union scores 1.
double mean_iou(const Confusion& c);

struct MetricReport {
  double ods = 0, ois = 0;
  double precision = 0, recall = 0, f1 = 0;  // at the ODS threshold
  double miou = 0;                           // at the ODS threshold
  double threshold = 0;                      // ODS-optimal threshold
  std::vector<PrfPoint> curve;               // dataset-level, one per threshold
};

// 0.01, 0.02, ..., 0.99.
std::vector<double> default_thresholds();

/// Binarizes with pred >= threshold. ODS maximizes F1 of the confusion
/// summed over all images; OIS averages each image's best F1. Ties pick the
/// lowest threshold.
MetricReport compute_metrics(const std::vector<Tensor<float>>& preds,
                             const std::vector<Tensor<float>>& gts,
                             const std::vector<double>& thresholds = default_thresholds());

void write_report_csv(std::ostream& os, const MetricReport& report);
void write_report_text(std::ostream& os, const MetricReport& report);

}  // namespace scrwkv

#include "scrwkv/metrics.hpp"

#include <iomanip>
#include <ostream>

namespace scrwkv {

PrfPoint prf(const Confusion& c, double threshold) {
  PrfPoint p{threshold, 0, 0, 0};
  if (c.tp + c.fp + c.fn == 0) {
    p.precision = p.recall = p.f1 = 1;
    return p;
  }
  if (c.tp + c.fp > 0) p.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) p.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  // 2PR/(P+R) in integer form: equal ratios give identical doubles, so
  // threshold ties are decided by the tie rule and not by rounding.
  if (c.tp > 0) p.f1 = 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
  return p;
}

double mean_iou(const Confusion& c) {
  auto iou = [](std::int64_t hit, std::int64_t uni) {
    return uni == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(uni);
  };
  return 0.5 * (iou(c.tp, c.tp + c.fp + c.fn) + iou(c.tn, c.tn + c.fp + c.fn));
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 1; i <= 99; ++i) t.push_back(i / 100.0);
  return t;
}

namespace {

// Confusion at every threshold for one image. Pixel p is predicted positive
// at threshold m iff pred >= thr[m]; with ascending thresholds that is a
// prefix of the list, so one count per pixel plus a suffix sum suffices.
std::vector<Confusion> image_sweep(const Tensor<float>& pred, const Tensor<float>& gt,
                                   const std::vector<double>& thr) {
  const std::size_t m = thr.size();
  std::vector<std::int64_t> pos_hist(m + 1, 0), neg_hist(m + 1, 0);
  std::int64_t positives = 0, negatives = 0;
  for (Index i = 0; i < pred.size(); ++i) {
    const double v = pred[i];
    // Number of thresholds <= v.
    const auto k = static_cast<std::size_t>(std::upper_bound(thr.begin(), thr.end(), v) - thr.begin());
    if (gt[i] > 0.5f) {
      ++pos_hist[k];
      ++positives;
    } else {
      ++neg_hist[k];
      ++negatives;
    }
  }
  std::vector<Confusion> out(m);
  std::int64_t tp = 0, fp = 0;
  for (std::size_t j = m; j-- > 0;) {
    tp += pos_hist[j + 1];
    fp += neg_hist[j + 1];
    out[j] = {tp, fp, positives - tp, negatives - fp};
  }
  return out;
}

}  // namespace

MetricReport compute_metrics(const std::vector<Tensor<float>>& preds,
                             const std::vector<Tensor<float>>& gts,
                             const std::vector<double>& thresholds) {
  if (preds.empty()) throw ShapeError("compute_metrics: empty prediction list");
  if (preds.size() != gts.size())
    throw ShapeError("compute_metrics: " + std::to_string(preds.size()) + " predictions vs " +
                     std::to_string(gts.size()) + " masks");
  if (thresholds.empty() || !std::is_sorted(thresholds.begin(), thresholds.end()))
    throw ShapeError("compute_metrics: thresholds must be non-empty and ascending");
  const std::size_t m = thresholds.size();
  std::vector<Confusion> total(m);
  double ois_sum = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].shape() != gts[i].shape())
      throw ShapeError("compute_metrics: image " + std::to_string(i) + " prediction " +
                       shape_str(preds[i].shape()) + " vs mask " + shape_str(gts[i].shape()));
    const auto sweep = image_sweep(preds[i], gts[i], thresholds);
    double best = 0;
    for (std::size_t j = 0; j < m; ++j) {
      total[j] += sweep[j];
      best = std::max(best, prf(sweep[j], thresholds[j]).f1);
    }
    ois_sum += best;
  }

  MetricReport r;
  std::size_t best_j = 0;
  for (std::size_t j = 0; j < m; ++j) {
    r.curve.push_back(prf(total[j], thresholds[j]));
    if (r.curve[j].f1 > r.curve[best_j].f1) best_j = j;
  }
  const PrfPoint& op = r.curve[best_j];
  r.ods = op.f1;
  r.ois = ois_sum / static_cast<double>(preds.size());
  r.precision = op.precision;
  r.recall = op.recall;
  r.f1 = op.f1;
  r.threshold = op.threshold;
  r.miou = mean_iou(total[best_j]);
  return r;
}

void write_report_csv(std::ostream& os, const MetricReport& r) {
  os << std::setprecision(10);
  os << "metric,value\n";
  os << "ods," << r.ods << "\nois," << r.ois << "\nprecision," << r.precision << "\nrecall,"
     << r.recall << "\nf1," << r.f1 << "\nmiou," << r.miou << "\nthreshold," << r.threshold
     << "\n\nthreshold,precision,recall,f1\n";
  for (const auto& p : r.curve)
    os << p.threshold << ',' << p.precision << ',' << p.recall << ',' << p.f1 << '\n';
}

void write_report_text(std::ostream& os, const MetricReport& r) {
  const auto old = os.flags();
  os << std::fixed << std::setprecision(4);
  os << std::left << std::setw(11) << "ODS" << r.ods << '\n'
     << std::setw(11) << "OIS" << r.ois << '\n'
     << std::setw(11) << "Precision" << r.precision << '\n'
     << std::setw(11) << "Recall" << r.recall << '\n'
     << std::setw(11) << "F1" << r.f1 << '\n'
     << std::setw(11) << "mIoU" << r.miou << '\n'
     << std::setw(11) << "Threshold" << std::setprecision(2) << r.threshold << '\n';
  os.flags(old);
}

}  // namespace scrwkv

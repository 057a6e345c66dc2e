#include <doctest.h>

#include <sstream>

#include "../support/oracles.hpp"
#include "scrwkv/metrics.hpp"

using namespace scrwkv;
using F = Tensor<float>;

namespace {

F random_mask(Rng& rng, Index h, Index w, double density) {
  F m({h, w});
  std::bernoulli_distribution coin(density);
  for (Index i = 0; i < m.size(); ++i) m[i] = coin(rng) ? 1.0f : 0.0f;
  return m;
}

}  // namespace

TEST_CASE("prf and iou edge rules") {
  CHECK(prf(Confusion{0, 0, 0, 9}, 0.5).f1 == 1.0);
  CHECK(prf(Confusion{0, 3, 0, 6}, 0.5).f1 == 0.0);
  CHECK(prf(Confusion{0, 0, 3, 6}, 0.5).precision == 0.0);
  const PrfPoint p = prf(Confusion{3, 1, 2, 10}, 0.5);
  CHECK(p.precision == 0.75);
  CHECK(p.recall == 0.6);
  CHECK(p.f1 == doctest::Approx(2 * 0.75 * 0.6 / 1.35).epsilon(1e-15));
  CHECK(mean_iou(Confusion{0, 0, 0, 0}) == 1.0);
  CHECK(mean_iou(Confusion{0, 0, 0, 5}) == 1.0);
}

TEST_CASE("default thresholds") {
  const auto t = default_thresholds();
  REQUIRE(t.size() == 99);
  CHECK(t.front() == 0.01);
  CHECK(t.back() == 0.99);
}

TEST_CASE("4x4 example with half the crack found") {
  F gt({4, 4}), pred({4, 4});
  for (Index i : {0, 1, 2, 3}) gt[i] = 1;
  for (Index i : {2, 3, 4, 5}) pred[i] = 0.9f;
  const MetricReport r = compute_metrics({pred}, {gt});
  CHECK(r.precision == 0.5);
  CHECK(r.recall == 0.5);
  CHECK(r.f1 == 0.5);
  CHECK(r.miou == doctest::Approx(11.0 / 21.0).epsilon(1e-15));
  const oracle::Counts c = oracle::confusion(pred, gt, r.threshold);
  CHECK(c.tp == 2);
  CHECK(oracle::miou(c) == r.miou);
  CHECK(r.threshold == 0.01);
}

TEST_CASE("perfect and inverted predictions") {
  Rng rng(1);
  std::vector<F> gts, inverse;
  for (int i = 0; i < 3; ++i) {
    gts.push_back(random_mask(rng, 8, 8, 0.3));
    F inv = gts.back();
    inv.array() = 1.0f - inv.array();
    inverse.push_back(inv);
  }
  const MetricReport perfect = compute_metrics(gts, gts);
  CHECK(perfect.ods == 1.0);
  CHECK(perfect.ois == 1.0);
  CHECK(perfect.f1 == 1.0);
  CHECK(perfect.miou == 1.0);
  CHECK(compute_metrics(inverse, gts).miou == 0.0);
}

TEST_CASE("agreement with the brute-force oracle") {
  Rng rng(2);
  std::uniform_int_distribution<int> count(1, 4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<F> preds, gts;
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      gts.push_back(random_mask(rng, 8, 8, 0.05 + 0.1 * (trial % 4)));
      F p = uniform<float>({8, 8}, rng, 0, 1);
      // Correlate with the mask so the optimum is interior.
      p.array() = 0.5f * p.array() + 0.45f * gts.back().array();
      // Values landing exactly on thresholds exercise the >= rule.
      if (trial % 5 == 0) p[3] = 0.37f, p[9] = 0.5f;
      preds.push_back(p);
    }
    const MetricReport r = compute_metrics(preds, gts);
    const oracle::Metrics o = oracle::metrics(preds, gts, default_thresholds());
    CHECK(r.ods == o.ods);
    CHECK(r.ois == o.ois);
    CHECK(r.miou == o.miou);
    CHECK(r.threshold == o.threshold);
    CHECK(r.f1 == r.ods);
    for (const auto& pt : r.curve) CHECK(pt.f1 <= r.ods);
  }
}

TEST_CASE("OIS can fall below ODS") {
  // Image a is found perfectly; image b has its only crack pixel missed and a
  // false alarm at 0.9, so its best F1 is 0 at every threshold.
  F gt_a({4, 4}), pred_a({4, 4}), gt_b({4, 4}), pred_b({4, 4});
  for (Index i = 0; i < 10; ++i) gt_a[i] = 1, pred_a[i] = 0.95f;
  gt_b[0] = 1;
  pred_b[5] = 0.9f;
  const MetricReport r = compute_metrics({pred_a, pred_b}, {gt_a, gt_b});
  CHECK(r.ois == 0.5);
  CHECK(r.ods == 20.0 / 21.0);
  // 0.9f is just below 0.9, so the false alarm already drops out at 0.90.
  CHECK(r.threshold == 0.9);
}

TEST_CASE("rejections") {
  CHECK_THROWS_AS(compute_metrics({}, {}), ShapeError);
  CHECK_THROWS_AS(compute_metrics({F({2, 2})}, {}), ShapeError);
  CHECK_THROWS_AS(compute_metrics({F({2, 2})}, {F({2, 3})}), ShapeError);
  CHECK_THROWS_AS(compute_metrics({F({2, 2})}, {F({2, 2})}, {0.5, 0.2}), ShapeError);
}

TEST_CASE("report serialization") {
  F gt({4, 4}), pred({4, 4});
  gt[0] = 1;
  pred[0] = 0.8f;
  const MetricReport r = compute_metrics({pred}, {gt}, {0.25, 0.5, 0.9});
  std::ostringstream csv, text;
  write_report_csv(csv, r);
  write_report_text(text, r);
  CHECK(csv.str().rfind("metric,value\nods,1\n", 0) == 0);
  CHECK(csv.str().find("threshold,precision,recall,f1\n0.25,1,1,1\n") != std::string::npos);
  CHECK(text.str().find("ODS        1.0000") != std::string::npos);
  CHECK(text.str().find("Threshold  0.25") != std::string::npos);
}

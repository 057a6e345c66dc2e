// Acceptance suite: one PASS/FAIL line per criterion.
#include <CLI11.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "scrwkv/functional.hpp"
#include "scrwkv/gradsuite.hpp"
#include "scrwkv/io.hpp"

using namespace scrwkv;
using T = Tensor<double>;
using V = Var<double>;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

std::string fixed(double v, int digits = 1) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

// Relative error of a WKV output: |a - b| divided by the same weighted mean
// taken over |v|. A signed mean can cancel to near zero; this scale cannot.
double wkv_rel_err(const T& a, const T& b, const T& k, const T& v, const T& w, const T& u) {
  T magnitude = v;
  magnitude.array() = v.array().abs();
  const T scale = dywkv_naive(k, magnitude, w, u);
  double worst = 0;
  for (Index i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]) / scale[i]);
  return worst;
}

Index draw(Rng& rng, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

struct WkvCase {
  T k, v, w, u;
};

WkvCase wkv_case(Rng& rng, Index t, Index c) {
  return {uniform<double>({t, c}, rng, -4, 4), uniform<double>({t, c}, rng, -2, 2),
          uniform<double>({c}, rng, 0.01, 5), uniform<double>({c}, rng, -2, 2)};
}

Outcome criterion1() {
  Stopwatch clock;
  Rng rng(101);
  double worst = 0;
  int failures = 0;
  for (int i = 0; i < 500; ++i) {
    const WkvCase cs = wkv_case(rng, draw(rng, 1, 256), draw(rng, 1, 16));
    const double err = wkv_rel_err(dywkv_scan(cs.k, cs.v, cs.w, cs.u),
                                   dywkv_naive(cs.k, cs.v, cs.w, cs.u), cs.k, cs.v, cs.w, cs.u);
    worst = std::max(worst, err);
    failures += err >= 1e-10;
  }
  const double secs = clock.seconds();
  return {failures == 0 && secs < 30,
          "scan vs naive on 500 cases (T 1..256, C 1..16): max rel err " + sci(worst) +
              " (< 1e-10), " + std::to_string(failures) + " failures, " + fixed(secs) + " s (< 30 s)"};
}

Outcome criterion2() {
  Rng rng(202);
  int shift_fail = 0, bound_fail = 0, single_fail = 0, const_fail = 0;
  double worst_shift = 0;
  using Fn = Tensor<double> (*)(const T&, const T&, const T&, const T&);
  const Fn kernels[2] = {&dywkv_scan<double>, &dywkv_naive<double>};
  for (int trial = 0; trial < 1000; ++trial) {
    const Index t = draw(rng, 1, 96), c = draw(rng, 1, 8);
    const WkvCase cs = wkv_case(rng, t, c);
    const double offset = std::uniform_real_distribution<double>(-30, 30)(rng);
    T shifted = cs.k;
    shifted.array() += offset;
    const WkvCase one = wkv_case(rng, 1, c);
    WkvCase flat = wkv_case(rng, t, c);
    for (Index i = 0; i < t; ++i)
      for (Index ch = 0; ch < c; ++ch) flat.v[i * c + ch] = flat.v[ch];
    bool shift_ok = true, bound_ok = true, single_ok = true, const_ok = true;
    for (Fn f : kernels) {
      const T y = f(cs.k, cs.v, cs.w, cs.u);
      const double err = wkv_rel_err(f(shifted, cs.v, cs.w, cs.u), y, cs.k, cs.v, cs.w, cs.u);
      worst_shift = std::max(worst_shift, err);
      shift_ok = shift_ok && err < 1e-10;
      for (Index ch = 0; ch < c; ++ch) {
        double lo = 1e300, hi = -1e300;
        for (Index i = 0; i < t; ++i) lo = std::min(lo, cs.v[i * c + ch]), hi = std::max(hi, cs.v[i * c + ch]);
        for (Index i = 0; i < t; ++i)
          bound_ok = bound_ok && y[i * c + ch] >= lo - 1e-12 && y[i * c + ch] <= hi + 1e-12;
      }
      single_ok = single_ok && max_abs_diff(f(one.k, one.v, one.w, one.u), one.v) <= 1e-15;
      const_ok = const_ok && max_abs_diff(f(flat.k, flat.v, flat.w, flat.u), flat.v) <= 1e-12;
    }
    shift_fail += !shift_ok, bound_fail += !bound_ok, single_fail += !single_ok, const_fail += !const_ok;
  }
  const int total = shift_fail + bound_fail + single_fail + const_fail;
  return {total == 0, "1000 trials each, scan and naive: key shift failures " + std::to_string(shift_fail) +
                          " (max rel err " + sci(worst_shift) + " < 1e-10), convex bound failures " +
                          std::to_string(bound_fail) + ", T=1 identity failures " +
                          std::to_string(single_fail) + ", constant-v failures " + std::to_string(const_fail)};
}

Outcome criterion3() {
  Stopwatch clock;
  WkvBenchOptions opt;  // T = 4096..32768, C = 32
  const auto rows = bench_wkv(opt);
  bool pass = true;
  std::string scan, naive;
  for (const auto& r : rows) {
    if (r.ratio == 0) continue;
    const bool is_scan = r.variant == "scan";
    const bool ok = is_scan ? (r.ratio >= 1.6 && r.ratio <= 2.6) : (r.ratio >= 3.2 && r.ratio <= 4.8);
    pass = pass && ok;
    (is_scan ? scan : naive) += (is_scan ? scan : naive).empty() ? fixed(r.ratio, 2) : " " + fixed(r.ratio, 2);
  }
  const double secs = clock.seconds();
  return {pass && secs < 120, "doubling ratios scan [" + scan + "] in [1.6, 2.6], naive [" + naive +
                                  "] in [3.2, 4.8], T 4096..32768, C 32, " + fixed(secs) +
                                  " s (< 120 s)"};
}

Outcome criterion4() {
  Stopwatch clock;
  Rng rng(404);
  int mismatches = 0, identity_fail = 0;
  double worst_adj = 0;
  for (int i = 0; i < 200; ++i) {
    const Index b = draw(rng, 1, 3), c = draw(rng, 8, 40), h = draw(rng, 2, 12), w = draw(rng, 2, 12);
    const Index s = draw(rng, 0, std::min(h, w) - 1);
    const GbstSpec spec{s, h, w, c};
    const T x = uniform<double>({b, h * w, c}, rng), g = uniform<double>({b, h * w, c}, rng);
    mismatches += !(gbst(x, spec) == oracle::gbst(x, s, h, w));
    identity_fail += !(gbst(x, GbstSpec{0, h, w, c}) == x);
    const double lhs = inner(gbst(x, spec), g), rhs = inner(x, gbst_adjoint(g, spec));
    worst_adj = std::max(worst_adj, std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-12));
  }
  const double secs = clock.seconds();
  return {mismatches == 0 && identity_fail == 0 && worst_adj < 1e-6 && secs < 30,
          "200 configurations: oracle mismatches " + std::to_string(mismatches) +
              ", s=0 identity failures " + std::to_string(identity_fail) + ", adjoint rel err " +
              sci(worst_adj) + " (< 1e-6), " + fixed(secs, 2) + " s (< 30 s)"};
}

Outcome criterion5() {
  Stopwatch clock;
  const auto reports = run_gradient_suite("all");
  std::set<std::string> passed;
  std::string failed;
  double worst = 0;
  for (const auto& r : reports) {
    worst = std::max(worst, r.max_rel_error);
    if (r.pass && r.tolerance <= 1e-4) passed.insert(r.op);
    else failed += " " + r.op;
  }
  bool covered = true;
  for (const char* op : {"gbst", "dywkv_naive", "dscd", "amcm_forward", "spatial_mix", "channel_mix",
                         "cshf_forward", "hybrid_loss", "network"})
    covered = covered && passed.count(op);
  const double secs = clock.seconds();
  return {covered && failed.empty() && secs < 60,
          std::to_string(passed.size()) + "/" + std::to_string(reports.size()) +
              " operators pass at 64-bit, h 1e-5, max rel err " + sci(worst) + " (< 1e-4)" +
              (failed.empty() ? "" : ", failed:" + failed) + ", " + fixed(secs) + " s (< 60 s)"};
}

Outcome criterion6() {
  Rng rng(606);
  std::vector<std::string> problems;
  auto note = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  };

  double softmax_err = 0;
  for (int i = 0; i < 100; ++i) {
    const Shape shape{draw(rng, 1, 4), draw(rng, 1, 9), draw(rng, 1, 7)};
    const Index axis = draw(rng, 0, 2);
    const T p = softmax(uniform<double>(shape, rng, -40, 40), axis);
    const Index n = shape[static_cast<std::size_t>(axis)];
    Index stride = 1;
    for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < shape.size(); ++d) stride *= shape[d];
    for (Index base = 0; base < p.size(); ++base) {
      if ((base / stride) % n != 0) continue;
      double total = 0;
      for (Index j = 0; j < n; ++j) total += p[base + j * stride];
      softmax_err = std::max(softmax_err, std::abs(total - 1));
    }
  }
  note(softmax_err <= 1e-6, "softmax sums");

  // Scale attention in the decoder and grid attention in AMCM.
  double attn_err = 0;
  {
    ParamStore<double> store;
    const auto p = make_cshf_params(ParamBuilder<double>(store, rng, "d"), 8, 6, 4);
    for (auto& v : store.vars()) v.mutable_value() = uniform<double>(v.shape(), rng, -1, 1);
    std::vector<V> feats;
    for (int i = 0; i < 4; ++i) feats.push_back(V(uniform<double>({2, 12, 8}, rng)));
    CshfTrace<double> trace;
    cshf_forward(feats, 3, 4, p, &trace);
    const T& a = trace.scale_attention.value();
    const Index hw = a.dim(2) * a.dim(3);
    for (Index b = 0; b < a.dim(0); ++b)
      for (Index q = 0; q < hw; ++q) {
        double total = 0;
        for (Index l = 0; l < 4; ++l) total += a[(b * 4 + l) * hw + q];
        attn_err = std::max(attn_err, std::abs(total - 1));
      }
  }
  AmcmParams<double> amcm;
  ParamStore<double> amcm_store;
  {
    amcm = make_amcm_params(ParamBuilder<double>(amcm_store, rng, "a"), 8, 4);
    for (auto& v : amcm_store.vars()) v.mutable_value() = uniform<double>(v.shape(), rng, -1, 1);
    AmcmTrace<double> trace;
    amcm_forward(V(uniform<double>({2, 8, 8, 12}, rng)), amcm, &trace);
    const T& a = trace.attention.value();
    for (Index r = 0; r < a.size() / 16; ++r) {
      double total = 0;
      for (Index n = 0; n < 16; ++n) total += a[r * 16 + n];
      attn_err = std::max(attn_err, std::abs(total - 1));
    }
  }
  note(attn_err <= 1e-6, "attention sums");

  // DSCD ratio strictly inside (1/e, 1).
  int range_fail = 0;
  for (int i = 0; i < 200; ++i) {
    const Index c = draw(rng, 1, 8);
    // Projections kept where the sigmoid is not rounded to exactly 0 or 1.
    const DecayParams<double> p{V(uniform<double>({c}, rng, -3, 3)), V(uniform<double>({c, c}, rng, -1, 1)),
                                V(uniform<double>({c}, rng, -2, 2)), V(T({c}))};
    const V x(uniform<double>({2, draw(rng, 1, 10), c}, rng, -2, 2));
    const T base = softplus(p.base_raw.value());
    for (DecayMode mode : {DecayMode::instance, DecayMode::per_token}) {
      const T w = dscd(x, p, mode).value();
      for (Index j = 0; j < w.size(); ++j) {
        const double r = w[j] / base[j % c];
        range_fail += !(r > std::exp(-1.0) && r < 1.0);
      }
    }
  }
  note(range_fail == 0, "dscd range");

  // Residual identities with zeroed output projections.
  bool residual_ok = true;
  {
    amcm.out_weight = V(T(amcm.out_weight.shape()));
    amcm.out_bias = V(T(amcm.out_bias.shape()));
    const V x(uniform<double>({2, 8, 8, 12}, rng));
    residual_ok = residual_ok && amcm_forward(x, amcm).value() == x.value();
    ParamStore<double> store;
    auto p = make_sciu_params(ParamBuilder<double>(store, rng, "b"), 8, 2, 2);
    for (auto& v : store.vars()) v.mutable_value() = uniform<double>(v.shape(), rng, -1, 1);
    for (V* v : {&p.v_weight, &p.v_bias, &p.amcm.out_weight, &p.amcm.out_bias, &p.cm_v_weight, &p.cm_v_bias})
      *v = V(T(v->shape()));
    SciuOptions opt;
    opt.gbst = {1, 4, 5, 8};
    const V tokens(uniform<double>({2, 20, 8}, rng));
    residual_ok = residual_ok && sciu_forward(tokens, p, opt).value() == tokens.value();
  }
  note(residual_ok, "residual identities");

  // End-to-end shapes over the layer and patch knobs.
  int shape_fail = 0;
  {
    NoGradGuard ng;
    for (Index n : {2, 4, 8, 16})
      for (Index patch : {4, 8, 16, 32}) {
        ModelConfig cfg;
        cfg.layers = n;
        cfg.patch = patch;
        cfg.channels = 8;
        cfg.decoder_width = 4;
        cfg.height = cfg.width = 64;
        const Model<float> m(cfg);
        const auto y = m.forward(Var<float>(uniform<float>({1, 3, 64, 64}, rng, 0, 1)));
        shape_fail += !(y.shape() == Shape{1, 1, 64, 64} && all_finite(y.value()));
      }
  }
  note(shape_fail == 0, "shape contracts");

  std::string detail = "softmax max |sum-1| " + sci(softmax_err) + ", attention max |sum-1| " +
                       sci(attn_err) + " (<= 1e-6), dscd range violations " +
                       std::to_string(range_fail) + ", zeroed-projection identities " +
                       (residual_ok ? "exact" : "broken") + ", 64x64 shape contracts " +
                       std::to_string(16 - shape_fail) + "/16 (N 2..16, P 4..32)";
  for (const auto& p : problems) detail += "; failed: " + p;
  return {problems.empty(), detail};
}

Outcome criterion7() {
  Rng rng(707);
  int mismatches = 0, ois_below = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Tensor<float>> preds, gts;
    const Index n = draw(rng, 1, 4);
    for (Index i = 0; i < n; ++i) {
      Tensor<float> gt({8, 8});
      std::bernoulli_distribution coin(0.05 + 0.1 * (trial % 4));
      for (Index j = 0; j < gt.size(); ++j) gt[j] = coin(rng) ? 1.0f : 0.0f;
      Tensor<float> p = uniform<float>({8, 8}, rng, 0, 1);
      p.array() = 0.5f * p.array() + 0.45f * gt.array();
      preds.push_back(p);
      gts.push_back(gt);
    }
    const MetricReport r = compute_metrics(preds, gts);
    const oracle::Metrics o = oracle::metrics(preds, gts, default_thresholds());
    mismatches += !(r.ods == o.ods && r.ois == o.ois && r.miou == o.miou && r.threshold == o.threshold);
    ois_below += r.ois < r.ods;
  }

  Tensor<float> gt({4, 4}), pred({4, 4});
  for (Index i : {0, 1, 2, 3}) gt[i] = 1;
  for (Index i : {2, 3, 4, 5}) pred[i] = 0.9f;
  const MetricReport ex = compute_metrics({pred}, {gt});
  const bool example_ok = ex.f1 == 0.5 && std::abs(ex.miou - 11.0 / 21.0) < 1e-15;

  std::vector<Tensor<float>> masks;
  for (const auto& s : synth_cracks(3, 32, 7)) masks.push_back(s.mask);
  const MetricReport perfect = compute_metrics(masks, masks);
  const bool perfect_ok = perfect.ods == 1 && perfect.ois == 1 && perfect.precision == 1 &&
                          perfect.recall == 1 && perfect.f1 == 1 && perfect.miou == 1;

  return {mismatches == 0 && example_ok && perfect_ok && ois_below == 0,
          "oracle mismatches " + std::to_string(mismatches) + "/50, 4x4 example F1 " +
              fixed(ex.f1, 4) + " mIoU " + fixed(ex.miou, 4) + " (11/21 = 0.5238), perfect case " +
              (perfect_ok ? "all 1.0" : "not 1.0") + ", OIS < ODS on " + std::to_string(ois_below) +
              "/50 trials"};
}

Outcome criterion8(const fs::path& config) {
  Stopwatch clock;
  const RunConfig rc = load_run_config(config);
  const ModelConfig& m = rc.model;
  const bool setup = m.patch == 4 && m.channels == 16 && m.layers == 2 && m.decoder_width == 16 &&
                     m.height == 64 && m.width == 64 && rc.data.samples == 8 && rc.data.size == 64 &&
                     rc.optim.lr == 5e-4 && rc.optim.weight_decay == 0.01 && rc.optim.seed == 42 &&
                     m.seed == 42 && rc.optim.max_steps == 300 &&
                     std::abs(rc.loss.beta / rc.loss.alpha - 3.0) < 1e-12;
  Model<float> model(m);
  TrainOptions opt;
  opt.loss = rc.loss;
  opt.optim = rc.optim;
  opt.batch_size = rc.batch_size;
  const TrainResult r = train(model, synth_cracks(rc.data.samples, rc.data.size, rc.data.seed, rc.data.synth), opt);
  const double start = r.log.front().loss;
  double best = 0;
  for (const auto& row : r.log) best = std::max(best, row.dice);
  const double secs = clock.seconds();
  const double ratio = r.final_loss / start;
  return {setup && r.final_dice >= 0.90 && ratio < 0.25 && secs < 600,
          std::string(setup ? "" : "config does not match the toy setup; ") + "300 steps: Dice " +
              fixed(r.final_dice, 4) + " after the last step (best batch " + fixed(best, 4) +
              ", >= 0.90), loss " + fixed(r.final_loss, 4) + " vs " + fixed(start, 4) +
              " at step 0 = " + fixed(100 * ratio, 1) + "% (< 25%), " + fixed(secs) + " s (< 600 s)"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run(const std::string& command, const fs::path& log) {
  const std::string line = command + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(line.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome criterion9(const fs::path& cli, const fs::path& configs) {
  const fs::path dir = fs::temp_directory_path() / ("scrwkv_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir / "masks");
  struct Cleanup {
    fs::path p;
    ~Cleanup() { fs::remove_all(p); }
  } cleanup{dir};

  // Checkpoint round trip through a differently seeded model.
  ModelConfig cfg = load_run_config(configs / "toy.json").model;
  Model<float> a(cfg);
  Rng rng(909);
  for (auto& v : a.params().vars()) v.mutable_value() = normal<float>(v.shape(), rng);
  save_checkpoint(dir / "a.ckpt", cfg, a.params());
  ModelConfig other = cfg;
  other.seed = cfg.seed + 1;
  Model<float> b(other);
  load_checkpoint(dir / "a.ckpt", b.params());
  bool same = true;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const auto& x = a.params().vars()[i].value();
    const auto& y = b.params().vars()[i].value();
    same = same && x.shape() == y.shape() &&
           std::memcmp(x.data(), y.data(), sizeof(float) * static_cast<std::size_t>(x.size())) == 0;
  }
  save_checkpoint(dir / "b.ckpt", cfg, b.params());
  const bool ckpt_ok = same && slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt");

  // eval on identical directories.
  const auto samples = synth_cracks(4, 32, 9);
  for (std::size_t i = 0; i < samples.size(); ++i)
    write_gray(dir / "masks" / ("m" + std::to_string(i) + ".png"), samples[i].mask);
  const std::string exe = "\"" + cli.string() + "\"";
  const int eval_status = run(exe + " eval --pred-dir \"" + (dir / "masks").string() + "\" --gt-dir \"" +
                                  (dir / "masks").string() + "\" --report \"" + (dir / "r.csv").string() + "\"",
                              dir / "eval.log");
  std::map<std::string, double> metrics;
  {
    std::istringstream csv(slurp(dir / "r.csv"));
    std::string line;
    while (std::getline(csv, line) && !line.empty()) {
      const auto comma = line.find(',');
      if (comma == std::string::npos || line.rfind("metric,", 0) == 0) continue;
      metrics[line.substr(0, comma)] = std::atof(line.c_str() + comma + 1);
    }
  }
  bool eval_ok = eval_status == 0;
  for (const char* key : {"ods", "ois", "precision", "recall", "f1", "miou"})
    eval_ok = eval_ok && metrics.count(key) && metrics[key] == 1.0;

  // count against the published reference.
  const int count_status =
      run(exe + " count --config \"" + (configs / "default.json").string() + "\"", dir / "count.log");
  const std::string count_out = slurp(dir / "count.log");
  std::string total_line;
  {
    std::istringstream lines(count_out);
    std::string line;
    while (std::getline(lines, line))
      if (line.rfind("input ", 0) == 0) total_line = line;
  }
  const bool count_ok = count_status == 0 && !total_line.empty() &&
                        count_out.find("1.22M") != std::string::npos;

  return {ckpt_ok && eval_ok && count_ok,
          std::string("checkpoint round trip ") + (ckpt_ok ? "bitwise identical" : "differs") +
              ", eval on identical dirs " + (eval_ok ? "reports 1.0 for all metrics" : "did not report 1.0") +
              ", count: \"" + total_line + "\" with reference 1.22M " +
              (count_ok ? "printed" : "missing")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scrwkv acceptance suite"};
  std::string cli, configs;
  std::vector<int> only;
  app.add_option("--cli", cli, "path to the scrwkv executable")->required();
  app.add_option("--configs", configs, "directory holding default.json and toy.json")->required();
  std::vector<int> known_red;
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  app.add_option("--known-red", known_red, "criteria expected to fail; they do not fail the run")
      ->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"Dy-WKV equivalence", criterion1},
      {"Dy-WKV properties", criterion2},
      {"linear complexity", criterion3},
      {"GBST oracle", criterion4},
      {"gradient suite", criterion5},
      {"structural invariants", criterion6},
      {"metrics oracle", criterion7},
      {"trainability", [&] { return criterion8(fs::path(configs) / "toy.json"); }},
      {"plumbing", [&] { return criterion9(fs::path(cli), fs::path(configs)); }},
  };
  int passed = 0, ran = 0, unexpected = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    ++ran;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const bool known = std::find(known_red.begin(), known_red.end(), id) != known_red.end();
    passed += o.pass;
    unexpected += !o.pass && !known;
    std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first
              << ": " << o.detail;
    if (known) std::cout << (o.pass ? " [listed as known red, now passes]" : " [known red]");
    std::cout << std::endl;
  }
  std::cout << "acceptance: " << passed << "/" << ran << " criteria passed";
  if (unexpected == 0 && passed < ran) std::cout << ", remaining failures are listed as known red";
  std::cout << std::endl;
  return unexpected == 0 ? 0 : 1;
}

#include "scrwkv/gradsuite.hpp"

#include "scrwkv/functional.hpp"
#include "scrwkv/gbst.hpp"
#include "scrwkv/network.hpp"
#include "scrwkv/train.hpp"

namespace scrwkv {
namespace {

using V = Var<double>;
using T = Tensor<double>;

V leaf(T value, const char* name) { return V::parameter(std::move(value), name); }

// sum(y * R) for a fixed random R, so every output element matters.
struct Projector {
  V weights;
  V operator()(const V& y) {
    if (!weights.defined()) {
      Rng rng(weights_seed);
      weights = V(uniform<double>(y.shape(), rng));
    }
    return sum(mul(y, weights));
  }
  std::uint64_t weights_seed = 99;
};

// Replaces every parameter value with U(-lo, hi) draws so that gradients are
// well away from zero.
void randomize(ParamStore<double>& store, Rng& rng, double half_range = 0.5) {
  for (auto& v : store.vars()) v.mutable_value() = uniform<double>(v.shape(), rng, -half_range, half_range);
}

std::vector<V> concat(std::vector<V> a, const std::vector<V>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

GradCheckReport check_gbst(const GradCheckOptions& opt) {
  Rng rng(1);
  const GbstSpec spec{1, 3, 3, 8};
  return finite_diff_check(
      "gbst", [proj = Projector{}, spec](const V& x) mutable { return proj(gbst(x, spec)); },
      uniform<double>({2, 9, 8}, rng), opt);
}

std::vector<GradCheckReport> check_dywkv(const GradCheckOptions& opt) {
  Rng rng(2);
  const Index t = 6, c = 3;
  std::vector<GradCheckReport> out;
  for (auto [label, per_token, algorithm] :
       {std::tuple{"dywkv_naive", false, WkvAlgorithm::naive},
        std::tuple{"dywkv_naive per-token", true, WkvAlgorithm::naive},
        std::tuple{"dywkv_scan", false, WkvAlgorithm::scan}}) {
    V k = leaf(uniform<double>({1, t, c}, rng, -2, 2), "k");
    V v = leaf(uniform<double>({1, t, c}, rng), "v");
    V w = leaf(uniform<double>(per_token ? Shape{1, t, c} : Shape{1, c}, rng, 0.2, 1.5), "w");
    V u = leaf(uniform<double>({c}, rng), "u");
    const V weights(uniform<double>({1, t, c}, rng));
    const WkvAlgorithm alg = algorithm;
    out.push_back(finite_diff_check(
        label, [&, alg] { return mean(mul(dywkv(k, v, w, u, alg), weights)); },
        {k, v, w, u}, opt));
  }
  return out;
}

std::vector<GradCheckReport> check_dscd(const GradCheckOptions& opt) {
  Rng rng(3);
  const Index c = 4;
  std::vector<GradCheckReport> out;
  for (DecayMode mode : {DecayMode::instance, DecayMode::per_token}) {
    V x = leaf(uniform<double>({2, 5, c}, rng), "x");
    DecayParams<double> p{leaf(uniform<double>({c}, rng), "base_raw"),
                          leaf(uniform<double>({c, c}, rng), "proj_weight"),
                          leaf(uniform<double>({c}, rng), "proj_bias"), V()};
    Projector proj;
    out.push_back(finite_diff_check(
        mode == DecayMode::instance ? "dscd" : "dscd per-token",
        [&, mode] { return proj(dscd(x, p, mode)); },
        {x, p.base_raw, p.proj_weight, p.proj_bias}, opt));
  }
  return out;
}

GradCheckReport check_amcm(const GradCheckOptions& opt) {
  Rng rng(4);
  ParamStore<double> store;
  ParamBuilder<double> builder(store, rng, "amcm");
  const AmcmParams<double> p = make_amcm_params(builder, 8, 2);
  randomize(store, rng);
  V x = leaf(uniform<double>({1, 8, 8, 8}, rng), "x");
  Projector proj;
  return finite_diff_check(
      "amcm_forward", [&] { return proj(amcm_forward(x, p)); }, concat({x}, store.vars()), opt);
}

struct BlockFixture {
  ParamStore<double> store;
  SciuParams<double> params;
  SciuOptions options;
  V x;

  explicit BlockFixture(std::uint64_t seed) {
    Rng rng(seed);
    params = make_sciu_params(ParamBuilder<double>(store, rng, "block"), 8, 2, 2);
    randomize(store, rng);
    options.gbst = {1, 4, 4, 8};
    x = leaf(uniform<double>({1, 16, 8}, rng), "x");
  }

  std::vector<V> spatial_leaves() const {
    const auto& p = params;
    return {x, p.mu_c, p.r_weight, p.r_bias, p.k_weight, p.k_bias, p.v_weight, p.v_bias,
            p.decay.base_raw, p.decay.proj_weight, p.decay.proj_bias, p.decay.bonus};
  }
  std::vector<V> channel_leaves() const {
    const auto& p = params;
    return {x, p.ctx_weight, p.ctx_bias, p.mu_k, p.mu_r, p.cm_r_weight, p.cm_r_bias,
            p.cm_k_weight, p.cm_k_bias, p.cm_v_weight, p.cm_v_bias};
  }
};

GradCheckReport check_spatial(const GradCheckOptions& opt) {
  BlockFixture f(5);
  Projector proj;
  return finite_diff_check(
      "spatial_mix", [&] { return proj(spatial_mix(f.x, f.params, f.options)); },
      f.spatial_leaves(), opt);
}

GradCheckReport check_channel(const GradCheckOptions& opt) {
  BlockFixture f(6);
  Projector proj;
  return finite_diff_check(
      "channel_mix", [&] { return proj(channel_mix(f.x, f.params, f.options)); },
      f.channel_leaves(), opt);
}

GradCheckReport check_sciu(const GradCheckOptions& opt) {
  BlockFixture f(7);
  Projector proj;
  return finite_diff_check(
      "sciu_forward", [&] { return proj(sciu_forward(f.x, f.params, f.options)); },
      concat({f.x}, f.store.vars()), opt);
}

GradCheckReport check_cshf(const GradCheckOptions& opt) {
  Rng rng(8);
  ParamStore<double> store;
  const CshfParams<double> p = make_cshf_params(ParamBuilder<double>(store, rng, "cshf"), 8, 4, 2);
  randomize(store, rng);
  std::vector<V> feats;
  for (int i = 0; i < 4; ++i) feats.push_back(leaf(uniform<double>({1, 16, 8}, rng), "feature"));
  Projector proj;
  return finite_diff_check(
      "cshf_forward", [&] { return proj(cshf_forward(feats, 4, 4, p)); },
      concat(feats, store.vars()), opt);
}

GradCheckReport check_loss(const GradCheckOptions& opt) {
  Rng rng(9);
  T target({2, 1, 4, 4});
  for (auto& t : target.values()) t = (rng() % 4 == 0) ? 1.0 : 0.0;
  const LossConfig cfg;
  return finite_diff_check(
      "hybrid_loss", [&](const V& p) { return hybrid_loss(p, target, cfg); },
      uniform<double>({2, 1, 4, 4}, rng, 0.05, 0.95), opt);
}

GradCheckReport check_network(GradCheckOptions opt) {
  ModelConfig cfg;
  cfg.patch = 4;
  cfg.channels = 16;
  cfg.layers = 2;
  cfg.decoder_width = 16;
  cfg.height = cfg.width = 32;
  Model<double> model(cfg);
  Rng rng(10);
  randomize(model.params(), rng, 0.3);
  const V img(uniform<double>({1, 3, 32, 32}, rng, 0.0, 1.0));
  opt.min_coords = 12;
  return finite_diff_check(
      "network", [&] { return mean(model.forward(img)); }, model.params().vars(), opt);
}

}  // namespace

const std::vector<std::string>& gradient_suite_modules() {
  static const std::vector<std::string> names = {
      "gbst",        "dywkv", "dscd",        "amcm_forward", "spatial_mix", "channel_mix",
      "sciu_forward", "cshf_forward", "hybrid_loss", "network"};
  return names;
}

std::vector<GradCheckReport> run_gradient_suite(const std::string& module,
                                                const GradCheckOptions& options) {
  const auto& names = gradient_suite_modules();
  if (module != "all" && std::find(names.begin(), names.end(), module) == names.end())
    throw ShapeError("gradcheck: unknown module '" + module + "'");
  auto want = [&](const char* name) { return module == "all" || module == name; };
  std::vector<GradCheckReport> out;
  auto extend = [&](std::vector<GradCheckReport> r) { out.insert(out.end(), r.begin(), r.end()); };
  if (want("gbst")) out.push_back(check_gbst(options));
  if (want("dywkv")) extend(check_dywkv(options));
  if (want("dscd")) extend(check_dscd(options));
  if (want("amcm_forward")) out.push_back(check_amcm(options));
  if (want("spatial_mix")) out.push_back(check_spatial(options));
  if (want("channel_mix")) out.push_back(check_channel(options));
  if (want("sciu_forward")) out.push_back(check_sciu(options));
  if (want("cshf_forward")) out.push_back(check_cshf(options));
  if (want("hybrid_loss")) out.push_back(check_loss(options));
  if (want("network")) out.push_back(check_network(options));
  return out;
}

}  // namespace scrwkv

#include <doctest.h>

#include <queue>
#include <sstream>

#include "scrwkv/functional.hpp"
#include "scrwkv/train.hpp"

using namespace scrwkv;
using T = Tensor<double>;
using V = Var<double>;

namespace {

double loss_of(const T& prob, const T& target, const LossConfig& cfg = {}) {
  return hybrid_loss(V(prob), target, cfg).value()[0];
}

// 8-connected components of a binary [H,W] mask, returned as pixel counts.
std::vector<Index> components(const Tensor<float>& mask) {
  const Index h = mask.dim(0), w = mask.dim(1);
  std::vector<int> seen(static_cast<std::size_t>(h * w), 0);
  std::vector<Index> sizes;
  for (Index start = 0; start < h * w; ++start) {
    if (mask[start] == 0 || seen[static_cast<std::size_t>(start)]) continue;
    Index count = 0;
    std::queue<Index> todo;
    todo.push(start);
    seen[static_cast<std::size_t>(start)] = 1;
    while (!todo.empty()) {
      const Index p = todo.front();
      todo.pop();
      ++count;
      for (Index dy = -1; dy <= 1; ++dy)
        for (Index dx = -1; dx <= 1; ++dx) {
          const Index y = p / w + dy, x = p % w + dx;
          if (y < 0 || y >= h || x < 0 || x >= w) continue;
          const Index q = y * w + x;
          if (mask[q] != 0 && !seen[static_cast<std::size_t>(q)]) {
            seen[static_cast<std::size_t>(q)] = 1;
            todo.push(q);
          }
        }
    }
    sizes.push_back(count);
  }
  return sizes;
}

}  // namespace

TEST_CASE("loss weights normalize to one") {
  const LossConfig n = LossConfig{1.0, 3.0, 1e-6}.normalized();
  CHECK(n.alpha == doctest::Approx(0.25));
  CHECK(n.beta == doctest::Approx(0.75));
}

TEST_CASE("hybrid loss examples") {
  SUBCASE("prediction equal to the target") {
    const T t({2, 1, 2, 2}, {1, 0, 0, 1, 0, 0, 1, 1});
    CHECK(loss_of(t, t) < 1e-5);
    CHECK(loss_of(t, t) >= 0);
  }
  SUBCASE("all-ones target against a zero prediction") {
    const T t = T::constant({1, 1, 4, 4}, 1.0);
    const double expect = 0.75 + 0.25 * std::log(1e7);
    CHECK(loss_of(T({1, 1, 4, 4}), t) == doctest::Approx(expect).epsilon(1e-6));
  }
  SUBCASE("2x2 hand evaluation") {
    const T t({1, 1, 2, 2}, {1, 0, 0, 0});
    const T p({1, 1, 2, 2}, {0.8, 0.2, 0.2, 0.2});
    const double bce = -(std::log(0.8) + 3 * std::log(0.8)) / 4;
    const double dice = 1 - (2 * 0.8 + 1e-6) / (1.4 + 1 + 1e-6);
    CHECK(loss_of(p, t) == doctest::Approx(0.25 * bce + 0.75 * dice).epsilon(1e-12));
  }
  SUBCASE("dice is averaged per sample") {
    const T t({2, 1, 1, 2}, {1, 0, 0, 1});
    const T p({2, 1, 1, 2}, {0.5, 0.5, 0.25, 0.75});
    const LossConfig dice_only{0, 1, 0};
    const double d0 = 1 - 2 * 0.5 / 2.0, d1 = 1 - 2 * 0.75 / 2.0;
    CHECK(loss_of(p, t, dice_only) == doctest::Approx((d0 + d1) / 2).epsilon(1e-12));
  }
  SUBCASE("single pixel loss decreases toward the target") {
    double prev = 1e300;
    for (double q = 0.05; q < 1.0; q += 0.05) {
      const double l = loss_of(T({1, 1}, {q}), T({1, 1}, {1.0}));
      CHECK(l < prev);
      CHECK(l >= 0);
      prev = l;
    }
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(loss_of(T({1, 4}), T({1, 3})), ShapeError);
  }
}

TEST_CASE("hybrid loss gradient matches finite differences") {
  Rng rng(1);
  const T t({1, 1, 3, 3}, {1, 0, 0, 1, 1, 0, 0, 0, 1});
  const T p = uniform<double>({1, 1, 3, 3}, rng, 0.1, 0.9);
  const V pv = V::parameter(p, "p");
  const T g = backward(hybrid_loss(pv, t, LossConfig{})).operator[](pv);
  for (Index i = 0; i < p.size(); ++i) {
    T hi = p, lo = p;
    hi[i] += 1e-6;
    lo[i] -= 1e-6;
    CHECK(g[i] == doctest::Approx((loss_of(hi, t) - loss_of(lo, t)) / 2e-6).epsilon(1e-6));
  }
}

TEST_CASE("poly schedule") {
  OptimConfig cfg;
  cfg.max_steps = 100;
  CHECK(poly_lr(0, cfg) == cfg.lr);
  CHECK(poly_lr(100, cfg) == 0);
  CHECK(poly_lr(250, cfg) == 0);
  cfg.power = 1;
  CHECK(poly_lr(50, cfg) == doctest::Approx(cfg.lr / 2));
  cfg.power = 0.9;
  CHECK(poly_lr(30, cfg) == doctest::Approx(cfg.lr * std::pow(0.7, 0.9)));
}

TEST_CASE("AdamW steps match the closed form") {
  OptimConfig cfg;
  cfg.lr = 0.1;
  AdamW<double> opt(cfg);
  std::vector<V> params{V::parameter(T({1}, {2.0}), "w")};
  auto grads_for = [&](double slope) { return backward(scale(params[0], slope)); };

  opt.step(params, grads_for(1.0), cfg.lr);
  // Decay first, then the bias-corrected moment ratio g / (|g| + eps).
  double w = 2.0 * (1 - 0.1 * 0.01);
  w -= 0.1 * 1.0 / (1.0 + 1e-8);
  CHECK(params[0].value()[0] == doctest::Approx(w).epsilon(1e-14));
  CHECK(opt.steps_taken() == 1);

  opt.step(params, grads_for(-3.0), cfg.lr);
  const double m = 0.9 * 0.1 * 1.0 + 0.1 * -3.0, v = 0.999 * 0.001 * 1.0 + 0.001 * 9.0;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  w *= 1 - 0.1 * 0.01;
  w -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
  CHECK(params[0].value()[0] == doctest::Approx(w).epsilon(1e-14));
}

TEST_CASE("AdamW leaves unreached parameters to weight decay alone") {
  OptimConfig cfg;
  cfg.lr = 0.5;
  AdamW<double> opt(cfg);
  std::vector<V> params{V::parameter(T({2}, {1.0, -4.0}), "a"), V::parameter(T({1}, {1.0}), "b")};
  opt.step(params, backward(sum(params[1])), cfg.lr);
  CHECK(params[0].value()[0] == doctest::Approx(1.0 * (1 - 0.5 * 0.01)));
  CHECK(params[0].value()[1] == doctest::Approx(-4.0 * (1 - 0.5 * 0.01)));
}

TEST_CASE("hard dice") {
  const T t({4}, {1, 1, 0, 0});
  CHECK(hard_dice(T({4}, {0.9, 0.5, 0.1, 0.49}), t) == 1.0);
  CHECK(hard_dice(T({4}, {0.9, 0.1, 0.6, 0.0}), t) == doctest::Approx(0.5));
  CHECK(hard_dice(T({4}), T({4})) == 1.0);
  CHECK(hard_dice(T({4}), t) == 0.0);
}

TEST_CASE("synthetic cracks") {
  const auto a = synth_cracks(6, 64, 11), b = synth_cracks(6, 64, 11);
  const auto c = synth_cracks(6, 64, 12);
  REQUIRE(a.size() == 6);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image == b[i].image);
    CHECK(a[i].mask == b[i].mask);
    differs = differs || !(a[i].mask == c[i].mask);
    CHECK(a[i].image.shape() == Shape{3, 64, 64});
    CHECK(a[i].mask.shape() == Shape{64, 64});
    CHECK(a[i].image.array().minCoeff() >= 0);
    CHECK(a[i].image.array().maxCoeff() <= 1);
    for (float m : a[i].mask.values()) CHECK((m == 0 || m == 1));
    const double frac = a[i].mask.array().mean();
    CHECK(frac > 0);
    CHECK(frac < 0.2);
  }
  CHECK(differs);
  CHECK_THROWS_AS(synth_cracks(1, 16, 0), ShapeError);
}

TEST_CASE("crack masks are 8-connected per stroke") {
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    for (const auto& s : synth_cracks(4, 48 + 16 * static_cast<Index>(seed % 3), seed)) {
      const auto sizes = components(s.mask);
      CHECK(!sizes.empty());
      CHECK(static_cast<Index>(sizes.size()) <= s.strokes);
      for (Index n : sizes) CHECK(n > 1);
    }
}

TEST_CASE("batches stack samples in order") {
  const auto data = synth_cracks(3, 32, 5);
  Tensor<float> images, targets;
  stack_batch(data, images, targets);
  CHECK(images.shape() == Shape{3, 3, 32, 32});
  CHECK(targets.shape() == Shape{3, 1, 32, 32});
  CHECK(targets.array().segment(2 * 1024, 1024).isApprox(data[2].mask.array()));
  CHECK(images.array().segment(3 * 1024, 3 * 1024).isApprox(data[1].image.array()));
}

TEST_CASE("a short training run lowers the loss and logs each step") {
  ModelConfig cfg;
  cfg.patch = 8;
  cfg.channels = 8;
  cfg.layers = 2;
  cfg.decoder_width = 8;
  cfg.height = cfg.width = 32;
  Model<float> model(cfg);
  TrainOptions opt;
  opt.optim.max_steps = 12;
  opt.optim.lr = 5e-3;
  opt.batch_size = 2;
  Index calls = 0;
  opt.on_step = [&](const TrainLogRow&) { return ++calls < 10; };
  const TrainResult r = train(model, synth_cracks(4, 32, 3), opt);
  CHECK(calls == 10);
  REQUIRE(r.log.size() == 10);
  CHECK(r.log[0].step == 0);
  CHECK(r.log[0].lr == doctest::Approx(5e-3));
  CHECK(r.final_loss < r.log[0].loss);
  std::ostringstream os;
  write_train_log(os, r.log);
  CHECK(os.str().rfind("step,lr,loss,dice\n0,", 0) == 0);
}

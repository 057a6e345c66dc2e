#include <doctest.h>

#include "scrwkv/functional.hpp"
#include "scrwkv/network.hpp"

using namespace scrwkv;
using T = Tensor<double>;
using V = Var<double>;

namespace {

ModelConfig toy() {
  ModelConfig cfg;
  cfg.patch = 4;
  cfg.channels = 16;
  cfg.layers = 2;
  cfg.decoder_width = 16;
  cfg.height = cfg.width = 64;
  return cfg;
}

}  // namespace

TEST_CASE("token count for the default resolution") {
  CHECK(ModelConfig{}.tokens() == 16384);
  CHECK(ModelConfig{}.effective_grid() == 8);
}

TEST_CASE("config validation") {
  auto expect_reject = [](auto edit) {
    ModelConfig cfg = toy();
    edit(cfg);
    CHECK_THROWS_AS(cfg.validate(), ShapeError);
  };
  expect_reject([](ModelConfig& c) { c.patch = 6; });
  expect_reject([](ModelConfig& c) { c.layers = 3; });
  expect_reject([](ModelConfig& c) { c.channels = 6; });
  expect_reject([](ModelConfig& c) { c.channels = 15; });
  expect_reject([](ModelConfig& c) { c.height = 66; });
  expect_reject([](ModelConfig& c) { c.shift = 16; });
  CHECK_NOTHROW(toy().validate());
}

TEST_CASE("config JSON round trip and strictness") {
  ModelConfig cfg = toy();
  cfg.decay_mode = DecayMode::per_token;
  cfg.seed = 7;
  CHECK(model_config_from_json(to_json(cfg)) == cfg);
  CHECK_THROWS_AS(model_config_from_json(R"({"patch_size": 4, "colour": 3})"), ShapeError);
  CHECK_THROWS_AS(model_config_from_json(R"({"decay_mode": "sometimes"})"), ShapeError);
  CHECK_THROWS_AS(model_config_from_json(R"({"patch_size": 5})"), ShapeError);
  const ModelConfig partial = model_config_from_json(R"({"embed_dim": 32})");
  CHECK(partial.channels == 32);
  CHECK(partial.patch == 4);
}

TEST_CASE("tap blocks are ceil(i*N/4)") {
  CHECK(tap_blocks(4) == std::array<Index, 4>{1, 2, 3, 4});
  CHECK(tap_blocks(2) == std::array<Index, 4>{1, 1, 2, 2});
  CHECK(tap_blocks(8) == std::array<Index, 4>{2, 4, 6, 8});
  CHECK(tap_blocks(16) == std::array<Index, 4>{4, 8, 12, 16});
}

TEST_CASE("patch embedding") {
  SUBCASE("zero image with zero bias and position gives zero tokens") {
    Model<double> m(toy());
    const T tok = m.patch_embed(V(T({1, 3, 64, 64}))).value();
    CHECK(tok.shape() == Shape{1, 256, 16});
    CHECK(tok == T({1, 256, 16}));
  }
  SUBCASE("a single patch is one matrix-vector product") {
    ModelConfig cfg = toy();
    cfg.height = cfg.width = 4;
    cfg.shift = 0;
    Model<double> m(cfg);
    Rng rng(1);
    m.patch_weight.mutable_value() = uniform<double>({16, 48}, rng);
    m.patch_bias.mutable_value() = uniform<double>({16}, rng);
    m.pos_embed.mutable_value() = uniform<double>({1, 16}, rng);
    const T img = uniform<double>({1, 3, 4, 4}, rng);
    const T tok = m.patch_embed(V(img)).value();
    REQUIRE(tok.shape() == Shape{1, 1, 16});
    for (Index o = 0; o < 16; ++o) {
      double acc = m.patch_bias.value()[o] + m.pos_embed.value()[o];
      // Patch vector order: channel, then row, then column.
      for (Index i = 0; i < 48; ++i) acc += m.patch_weight.value()[o * 48 + i] * img[i];
      CHECK(tok[o] == doctest::Approx(acc).epsilon(1e-14));
    }
  }
  SUBCASE("indivisible input is rejected") {
    Model<double> m(toy());
    CHECK_THROWS_AS(m.patch_embed(V(T({1, 3, 62, 64}))), ShapeError);
    CHECK_THROWS_AS(m.forward(V(T({1, 3, 32, 32}))), ShapeError);
  }
}

TEST_CASE("parameter count of the toy configuration by hand") {
  // patch: 16*48 + 16, position: 256*16
  const Index patch = 16 * 48 + 16 + 256 * 16;
  // AMCM at C=16 (t=5, 4C=64, G=8)
  const Index gate = 8 * 9 + 8;
  const Index psi7 = (25 + 5) + (5 * 49 + 5) + (25 + 5);
  const Index proj = 25 + 5;
  const Index psi9 = (100 + 10) + (10 * 81 + 10) + (100 + 10);
  const Index dilated = 16 * 16 * 9 + 16;
  const Index multi = 16 * (25 + 49 + 81 + 121) + 4 * 16;
  const Index topo = 64 * 64;
  const Index omega_beta = 2 * (64 * 64 + 64);
  const Index out = 16 * 64 + 16;
  const Index amcm = gate + psi7 + proj + psi9 + dilated + multi + topo + omega_beta + 1 + out;
  CHECK(amcm == 21717);
  // SCIU at C=16, hidden 32
  const Index norms = 4 * 16;
  const Index spatial = 16 + 3 * (256 + 16) + (16 + 256 + 16 + 16);
  const Index channel = (256 + 16) + 16 + 16 + (256 + 16) + (32 * 16 + 32) + (16 * 32 + 16);
  const Index block = norms + spatial + amcm + channel;
  // Decoder at D=16, s=4
  const Index level = (256 + 16) + (32 * 16 + 32) + 16;
  const Index decoder = 4 * level + (4 * 64 + 4) + (64 * 16 + 64) + 2 * 64 + (64 * 9 + 1);
  const Index total = patch + amcm + 2 * block + decoder;
  CHECK(total == 81108);

  CHECK(total_params(toy()) == total);
  Model<float> m(toy());
  CHECK(m.params().numel() == total);
  const auto items = count_params(toy());
  REQUIRE(items.size() == 5);
  CHECK(items[0].module == "patch_embed");
  CHECK(items[0].params == patch);
  CHECK(items[1].params == amcm);
  CHECK(items[2].params == block);
  CHECK(items[3].params == block);
  CHECK(items[4].params == decoder);
}

TEST_CASE("pointwise projection contributes Cin*Cout + Cout") {
  ParamStore<double> store;
  Rng rng(2);
  const auto p = make_amcm_params(ParamBuilder<double>(store, rng, "a"), 10, 2);
  CHECK(p.out_weight.value().size() + p.out_bias.value().size() == 40 * 10 + 10);
}

TEST_CASE("FLOP itemization") {
  const auto items = count_flops(toy());
  REQUIRE(items.size() == 5);
  CHECK(items[0].flops == 2.0 * 256 * 48 * 16);
  for (const auto& it : items) CHECK(it.flops > 0);
  CHECK(items[2].flops == items[3].flops);
  ModelConfig big = toy();
  big.height = big.width = 128;
  CHECK(count_flops(big)[0].flops == 4 * items[0].flops);
}

TEST_CASE("forward contract over the knob domains") {
  Rng rng(3);
  for (Index p : {4, 8, 16, 32})
    for (Index n : {2, 4}) {
      ModelConfig cfg;
      cfg.patch = p;
      cfg.layers = n;
      cfg.channels = 8;
      cfg.decoder_width = 4;
      cfg.height = 64;
      cfg.width = 32 * (1 + p % 3);
      const Model<float> m(cfg);
      NoGradGuard ng;
      const auto y = m.forward(Var<float>(uniform<float>({2, 3, cfg.height, cfg.width}, rng, 0, 1)));
      CHECK(y.shape() == Shape{2, 1, cfg.height, cfg.width});
      CHECK(all_finite(y.value()));
    }
}

TEST_CASE("initialization is seeded and forward is deterministic") {
  const Model<float> a(toy()), b(toy());
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    CHECK(a.params().vars()[i].name() == b.params().vars()[i].name());
    CHECK(a.params().vars()[i].value() == b.params().vars()[i].value());
  }
  ModelConfig other = toy();
  other.seed = 43;
  const Model<float> c(other);
  CHECK_FALSE(c.params().at("patch.weight").value() == a.params().at("patch.weight").value());

  Rng rng(4);
  const Var<float> img(uniform<float>({1, 3, 64, 64}, rng, 0, 1));
  NoGradGuard ng;
  CHECK(a.forward(img).value() == a.forward(img).value());
  CHECK(a.forward(img).value() == b.forward(img).value());
}

TEST_CASE("initial values follow the documented scheme") {
  const Model<double> m(toy());
  const auto& ps = m.params();
  CHECK(ps.at("pos_embed").value() == T({256, 16}));
  CHECK(ps.at("patch.bias").value() == T({16}));
  for (double v : ps.at("block1.spatial.decay.base_raw").value().values())
    CHECK(softplus(v) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(softplus(ps.at("stem.tau_raw").value()[0]) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ps.at("block1.spatial.decay.bonus").value() == T({16}));
  const T& w = ps.at("patch.weight").value();
  CHECK(w.array().abs().maxCoeff() <= 0.04);
  const double sd = std::sqrt(w.array().square().mean());
  CHECK(sd > 0.012);
  CHECK(sd < 0.022);
}

TEST_CASE("logits stay finite across seeds") {
  ModelConfig cfg;
  cfg.patch = 8;
  cfg.channels = 8;
  cfg.layers = 2;
  cfg.decoder_width = 4;
  cfg.height = cfg.width = 32;
  Rng rng(5);
  NoGradGuard ng;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    cfg.seed = seed;
    const Model<float> m(cfg);
    CHECK(all_finite(m.forward(Var<float>(uniform<float>({1, 3, 32, 32}, rng, 0, 1))).value()));
  }
}

#include "scrwkv/network.hpp"

#include <json.hpp>

#include "scrwkv/functional.hpp"

namespace scrwkv {

using nlohmann::json;

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ShapeError("ModelConfig: " + what); };
  if (patch != 4 && patch != 8 && patch != 16 && patch != 32)
    fail("patch must be one of 4, 8, 16, 32 (got " + std::to_string(patch) + ")");
  if (layers != 2 && layers != 4 && layers != 8 && layers != 16)
    fail("layers must be one of 2, 4, 8, 16 (got " + std::to_string(layers) + ")");
  if (channels < 8 || channels % 2 != 0)
    fail("channels must be even and >= 8 (got " + std::to_string(channels) + ")");
  if (height < 1 || width < 1 || height % patch != 0 || width % patch != 0)
    fail("resolution " + std::to_string(height) + "x" + std::to_string(width) +
         " is not divisible by patch " + std::to_string(patch));
  if (shift < 0 || shift >= std::min(grid_h(), grid_w()))
    fail("shift must satisfy 0 <= s < min token-grid dim (got " + std::to_string(shift) + ")");
  if (grid < 1) fail("grid must be >= 1");
  if (decoder_width < 1) fail("decoder_width must be >= 1");
  if (ratio < 1) fail("ratio must be >= 1");
}

NLOHMANN_JSON_SERIALIZE_ENUM(DecayMode, {{DecayMode::instance, "instance"},
                                         {DecayMode::per_token, "per_token"}})

std::string to_json(const ModelConfig& c) {
  const json j = {{"patch_size", c.patch},     {"embed_dim", c.channels},
                  {"sciu_layers", c.layers},   {"shift", c.shift},
                  {"grid", c.grid},            {"decoder_width", c.decoder_width},
                  {"mlp_ratio", c.ratio},      {"decay_mode", c.decay_mode},
                  {"height", c.height},        {"width", c.width},
                  {"seed", c.seed}};
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ShapeError(std::string("ModelConfig: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ShapeError("ModelConfig: JSON root must be an object");
  static const std::vector<std::string> known = {"patch_size", "embed_dim", "sciu_layers",
                                                 "shift",      "grid",      "decoder_width",
                                                 "mlp_ratio",  "decay_mode", "height",
                                                 "width",      "seed"};
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ShapeError("ModelConfig: unknown key '" + key + "'");
  ModelConfig c;
  try {
    c.patch = j.value("patch_size", c.patch);
    c.channels = j.value("embed_dim", c.channels);
    c.layers = j.value("sciu_layers", c.layers);
    c.shift = j.value("shift", c.shift);
    c.grid = j.value("grid", c.grid);
    c.decoder_width = j.value("decoder_width", c.decoder_width);
    c.ratio = j.value("mlp_ratio", c.ratio);
    if (j.contains("decay_mode")) {
      const std::string mode = j.at("decay_mode").get<std::string>();
      if (mode != "instance" && mode != "per_token")
        throw ShapeError("ModelConfig: decay_mode must be 'instance' or 'per_token'");
      c.decay_mode = j.at("decay_mode").get<DecayMode>();
    }
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ShapeError(std::string("ModelConfig: ") + e.what());
  }
  c.validate();
  return c;
}

std::array<Index, 4> tap_blocks(Index layers) {
  std::array<Index, 4> taps{};
  for (Index i = 1; i <= 4; ++i) taps[static_cast<std::size_t>(i - 1)] = (i * layers + 3) / 4;
  return taps;
}

template <typename Scalar>
Model<Scalar>::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  ParamBuilder<Scalar> root(store_, rng);
  const Index c = cfg_.channels, patch_dim = 3 * cfg_.patch * cfg_.patch;
  patch_weight = root.projection("patch.weight", {c, patch_dim});
  patch_bias = root.zeros("patch.bias", {c});
  pos_embed = root.zeros("pos_embed", {cfg_.tokens(), c});
  stem = make_amcm_params(root.scope("stem"), c, cfg_.effective_grid());
  for (Index i = 0; i < cfg_.layers; ++i)
    blocks.push_back(make_sciu_params(root.scope("block" + std::to_string(i + 1)), c, cfg_.ratio,
                                      cfg_.effective_grid()));
  decoder = make_cshf_params(root.scope("decoder"), c, cfg_.decoder_width, cfg_.patch);
}

template <typename Scalar>
SciuOptions Model<Scalar>::block_options() const {
  SciuOptions opt;
  opt.gbst = {cfg_.shift, cfg_.grid_h(), cfg_.grid_w(), cfg_.channels};
  opt.decay_mode = cfg_.decay_mode;
  return opt;
}

template <typename Scalar>
Var<Scalar> Model<Scalar>::patch_embed(const Var<Scalar>& img) const {
  const Shape& s = img.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != cfg_.height || s[3] != cfg_.width)
    throw ShapeError("Model: input must be [B,3," + std::to_string(cfg_.height) + "," +
                     std::to_string(cfg_.width) + "], got " + shape_str(s));
  const Var<Scalar> tokens = linear(patchify(img, cfg_.patch), patch_weight, patch_bias);
  return add(tokens, broadcast_leading(pos_embed, tokens.shape()));
}

template <typename Scalar>
std::vector<Var<Scalar>> Model<Scalar>::features(const Var<Scalar>& img) const {
  const Index gh = cfg_.grid_h(), gw = cfg_.grid_w();
  Var<Scalar> x = image_to_tokens(amcm_forward(tokens_to_image(patch_embed(img), gh, gw), stem));
  const SciuOptions opt = block_options();
  const auto taps = tap_blocks(cfg_.layers);
  std::vector<Var<Scalar>> out;
  for (Index i = 0; i < cfg_.layers; ++i) {
    x = sciu_forward(x, blocks[static_cast<std::size_t>(i)], opt);
    for (Index t : taps)
      if (t == i + 1) out.push_back(x);
  }
  return out;
}

template <typename Scalar>
Var<Scalar> Model<Scalar>::forward(const Var<Scalar>& img) const {
  return cshf_forward(features(img), cfg_.grid_h(), cfg_.grid_w(), decoder);
}

template class Model<float>;
template class Model<double>;

std::vector<CountItem> count_params(const ModelConfig& cfg) {
  const Model<float> model(cfg);
  std::vector<CountItem> items;
  for (const auto& v : model.params().vars()) {
    std::string module = v.name().substr(0, v.name().find('.'));
    if (module == "patch" || module == "pos_embed") module = "patch_embed";
    if (items.empty() || items.back().module != module) items.push_back({module, 0, 0});
    items.back().params += v.value().size();
  }
  return items;
}

Index total_params(const ModelConfig& cfg) {
  Index n = 0;
  for (const auto& item : count_params(cfg)) n += item.params;
  return n;
}

namespace {

// Multiply-accumulates of one AMCM on a C x H x W field with grid g.
double amcm_macs(Index c, Index h, Index w, Index g) {
  const double hw = static_cast<double>(h * w), t = static_cast<double>(c / 3);
  auto psi = [&](double width, double k) { return (2 * width * width + k * k * width) * hw; };
  double macs = 9.0 * static_cast<double>(c / 2) * hw;  // gate
  macs += psi(t, 7) + t * t * hw + psi(2 * t, 9);
  macs += 9.0 * c * c * hw;  // dilated
  for (Index k : kMultiScaleKernels) macs += static_cast<double>(k * k) * c * hw;
  const double m = static_cast<double>(g * g), wide = 4.0 * c;
  macs += 2 * wide * wide * m;  // omega, beta
  macs += m * m * wide;         // attention x (omega + beta)
  macs += wide * c * hw;        // out projection
  return macs;
}

}  // namespace

std::vector<CountItem> count_flops(const ModelConfig& cfg) {
  cfg.validate();
  const auto params = count_params(cfg);
  auto params_of = [&](const std::string& module) {
    for (const auto& it : params)
      if (it.module == module) return it.params;
    return Index{0};
  };
  const double n = static_cast<double>(cfg.tokens()), c = static_cast<double>(cfg.channels);
  const double hidden = static_cast<double>(cfg.ratio) * c;
  const double pixels = static_cast<double>(cfg.height * cfg.width);
  const double d = static_cast<double>(cfg.decoder_width);
  const double s2 = static_cast<double>(cfg.patch * cfg.patch);
  std::vector<CountItem> items;
  items.push_back({"patch_embed", params_of("patch_embed"), 2 * n * 3 * s2 * c});
  items.push_back({"stem", params_of("stem"),
                   2 * amcm_macs(cfg.channels, cfg.grid_h(), cfg.grid_w(), cfg.effective_grid())});
  for (Index i = 1; i <= cfg.layers; ++i) {
    double macs = 4 * n * c * c;  // r, k, v, decay projection
    // Scan: two directional passes plus the merge, about 3 MACs each per
    // token-channel; the per-token mode evaluates every pair.
    macs += cfg.decay_mode == DecayMode::instance ? 9 * n * c : 2 * n * n * c;
    macs += 2 * n * c * c + 2 * n * c * hidden;  // context, receptance, key, value
    macs += amcm_macs(cfg.channels, cfg.grid_h(), cfg.grid_w(), cfg.effective_grid());
    const std::string name = "block" + std::to_string(i);
    items.push_back({name, params_of(name), 2 * macs});
  }
  double dec = 4 * n * c * d;                          // level projections
  dec += 4 * n * d * 2 * s2;                           // offset projections
  dec += 4 * pixels * d * 4;                           // scale attention logits
  dec += 4 * pixels * d;                               // scale fusion
  dec += pixels * d * 4 * d;                           // expansion
  dec += 9 * pixels * 4 * d;                           // head
  items.push_back({"decoder", params_of("decoder"), 2 * dec});
  return items;
}

}  // namespace scrwkv

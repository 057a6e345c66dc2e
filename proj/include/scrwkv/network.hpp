#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>

#include "scrwkv/cshf.hpp"
#include "scrwkv/sciu.hpp"

namespace scrwkv {

struct ModelConfig {
  Index patch = 4;
  Index channels = 64;
  Index layers = 4;
  Index shift = 1;
  Index grid = 8;
  Index decoder_width = 32;
  Index ratio = 2;
  DecayMode decay_mode = DecayMode::instance;
  Index height = 512;
  Index width = 512;
  std::uint64_t seed = 42;

  Index grid_h() const { return height / patch; }
  Index grid_w() const { return width / patch; }
  Index tokens() const { return grid_h() * grid_w(); }
  // Grid attention size actually used: G clamped to the token grid.
  Index effective_grid() const { return std::min({grid, grid_h(), grid_w()}); }

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

std::string to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

// Block indices (1-based) whose outputs feed the decoder: ceil(i*N/4).
std::array<Index, 4> tap_blocks(Index layers);

template <typename Scalar>
class Model {
 public:
  // Draws all parameters from cfg.seed.
  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const noexcept { return cfg_; }
  ParamStore<Scalar>& params() noexcept { return store_; }
  const ParamStore<Scalar>& params() const noexcept { return store_; }

  // img [B,3,H,W] -> tokens [B,N,C] (patch projection + positional embedding).
  Var<Scalar> patch_embed(const Var<Scalar>& img) const;

  // img [B,3,H,W] -> logits [B,1,H,W].
  Var<Scalar> forward(const Var<Scalar>& img) const;

  // Decoder inputs for an image: the four tapped block outputs.
  std::vector<Var<Scalar>> features(const Var<Scalar>& img) const;

  SciuOptions block_options() const;

  Var<Scalar> patch_weight, patch_bias, pos_embed;
  AmcmParams<Scalar> stem;
  std::vector<SciuParams<Scalar>> blocks;
  CshfParams<Scalar> decoder;

 private:
  ModelConfig cfg_;
  ParamStore<Scalar> store_;
};

struct CountItem {
  std::string module;
  Index params = 0;
  double flops = 0;
};

// Itemized parameter counts by enumeration of a freshly built model.
std::vector<CountItem> count_params(const ModelConfig& cfg);
Index total_params(const ModelConfig& cfg);

// Forward FLOPs at the config resolution, multiply-accumulate = 2 FLOPs,
// itemized per module. Convolutions, projections, attention products and
// the WKV scan are counted; elementwise activations are not.
std::vector<CountItem> count_flops(const ModelConfig& cfg);

}  // namespace scrwkv

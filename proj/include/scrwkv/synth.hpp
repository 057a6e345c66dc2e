#pragma once

#include <cstdint>

#include "scrwkv/tensor.hpp"

namespace scrwkv {

struct CrackSample {
  Tensor<float> image;  // [3,H,W] in [0,1]
  Tensor<float> mask;   // [H,W] in {0,1}
  Index strokes = 0;    // number of crack strokes drawn
};

struct SynthOptions {
  Index min_width = 1;
  Index max_width = 3;
  Index max_strokes = 2;
};

/// Grey textured backgrounds crossed by dark curved cracks (quadratic Bezier
/// strokes, 1-3 px wide). The mask is the exact rasterized stroke set.
/// Deterministic for a given seed. Requires size >= 32.
std::vector<CrackSample> synth_cracks(Index count, Index size, std::uint64_t seed,
                                      const SynthOptions& options = {});

}  // namespace scrwkv

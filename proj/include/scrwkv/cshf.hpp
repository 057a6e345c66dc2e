#pragma once

#include <array>

#include "scrwkv/params.hpp"

namespace scrwkv {

inline constexpr double kDySampleBound = 0.25;  // input pixels

/// Cross-scale fusion decoder: four token taps of width C to one logit map.
template <typename Scalar>
struct CshfParams {
  Index in_channels = 0;
  Index width = 0;   // D
  Index factor = 1;  // upsampling factor s
  std::array<Var<Scalar>, 4> proj_weight, proj_bias;      // [D,C], [D]
  std::array<Var<Scalar>, 4> offset_weight, offset_bias;  // [2s^2,D,1,1], [2s^2]
  std::array<Var<Scalar>, 4> scale_embed;                 // [D]
  Var<Scalar> attn_weight, attn_bias;                     // [4,4D,1,1]
  Var<Scalar> exp_weight, exp_bias;                       // [4D,D,1,1]
  Var<Scalar> norm_gain, norm_shift;                      // [4D]
  Var<Scalar> head_weight, head_bias;                     // dense 3x3, [1,4D,3,3]
};

template <typename Scalar>
CshfParams<Scalar> make_cshf_params(ParamBuilder<Scalar> builder, Index in_channels, Index width,
                                    Index factor);

/// Samples x [B,D,h,w] bilinearly at the half-pixel-centre source coordinate
/// of every output position of an s-times upsampling, displaced by
/// offsets [B,2s^2,h,w]. Sub-position j = sy*s + sx of input pixel (y, x)
/// reads its displacement (dy, dx) from channels (2j, 2j+1). Zero offsets
/// give exactly bilinear_resize(x, s*h, s*w).
template <typename Scalar>
Var<Scalar> offset_sample(const Var<Scalar>& x, const Var<Scalar>& offsets, Index factor);

// offset_sample(x, bound * tanh(offset_proj(x)), s).
template <typename Scalar>
Var<Scalar> dysample_up(const Var<Scalar>& x, Index factor, const Var<Scalar>& offset_weight,
                        const Var<Scalar>& offset_bias, Scalar bound = Scalar(kDySampleBound));

/// out[b,d] = sum_i attn[b,i] * features[b, i*D + d] with attn [B,L,H,W] and
/// features [B,L*D,H,W].
template <typename Scalar>
Var<Scalar> scale_fusion(const Var<Scalar>& attn, const Var<Scalar>& features);

template <typename Scalar>
struct CshfTrace {
  Var<Scalar> scale_attention;  // [B,4,H',W'], softmax over axis 1
  Var<Scalar> harmonic;         // [B,D,H',W']
  std::array<Var<Scalar>, 4> embedded;  // F-hat
};

/// features: four token tensors [B,h*w,C]. Returns logits [B,1,s*h,s*w].
template <typename Scalar>
Var<Scalar> cshf_forward(const std::vector<Var<Scalar>>& features, Index h, Index w,
                         const CshfParams<Scalar>& p, CshfTrace<Scalar>* trace = nullptr);

}  // namespace scrwkv

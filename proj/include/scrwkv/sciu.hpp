#pragma once

#include "scrwkv/amcm.hpp"
#include "scrwkv/dywkv.hpp"
#include "scrwkv/gbst.hpp"

namespace scrwkv {

/// One structure-calibrated block over tokens [B,N,C] on an H x W grid.
template <typename Scalar>
struct SciuParams {
  Index channels = 0;
  Index hidden = 0;  // channel-mix width, ratio * C
  Var<Scalar> ln1_gain, ln1_shift, ln2_gain, ln2_shift;

  // Spatial mix.
  Var<Scalar> mu_c;  // [C], sigmoid-exposed
  Var<Scalar> r_weight, r_bias, k_weight, k_bias, v_weight, v_bias;  // [C,C], [C]
  DecayParams<Scalar> decay;

  AmcmParams<Scalar> amcm;

  // Channel mix.
  Var<Scalar> ctx_weight, ctx_bias;  // [C,C]
  Var<Scalar> mu_k, mu_r;            // [C]
  Var<Scalar> cm_r_weight, cm_r_bias;  // [C,C]
  Var<Scalar> cm_k_weight, cm_k_bias;  // [hidden,C]
  Var<Scalar> cm_v_weight, cm_v_bias;  // [C,hidden]
};

template <typename Scalar>
SciuParams<Scalar> make_sciu_params(ParamBuilder<Scalar> builder, Index channels, Index ratio,
                                    Index grid);

struct SciuOptions {
  GbstSpec gbst;
  DecayMode decay_mode = DecayMode::instance;
  WkvAlgorithm algorithm = WkvAlgorithm::scan;
};

// sigmoid(r) * dywkv(k, v, dscd(x)) with r, k, v projected from the
// gate-interpolated mix of x and gbst(x). No residual.
template <typename Scalar>
Var<Scalar> spatial_branch(const Var<Scalar>& x, const SciuParams<Scalar>& p,
                           const SciuOptions& opt);

// x + spatial_branch(x).
template <typename Scalar>
Var<Scalar> spatial_mix(const Var<Scalar>& x, const SciuParams<Scalar>& p, const SciuOptions& opt);

// sigmoid(W_r x'_r) * W_v relu(W_k x'_k)^2 with context-gated shift mixes.
// No residual.
template <typename Scalar>
Var<Scalar> channel_branch(const Var<Scalar>& x, const SciuParams<Scalar>& p,
                           const SciuOptions& opt);

// x + channel_branch(x).
template <typename Scalar>
Var<Scalar> channel_mix(const Var<Scalar>& x, const SciuParams<Scalar>& p, const SciuOptions& opt);

/// x1 = x + spatial_branch(LN1 x); x2 = AMCM on the image view of x1;
/// out = x2 + channel_branch(LN2 x2).
template <typename Scalar>
Var<Scalar> sciu_forward(const Var<Scalar>& x, const SciuParams<Scalar>& p, const SciuOptions& opt);

}  // namespace scrwkv

#pragma once

#include <array>

#include "scrwkv/params.hpp"

namespace scrwkv {

// Pointwise W_p1 -> depthwise D_k -> pointwise W_p2, all with biases.
template <typename Scalar>
struct PsiParams {
  Index kernel = 7;
  Var<Scalar> p1_weight, p1_bias;  // [c,c,1,1], [c]
  Var<Scalar> dw_weight, dw_bias;  // [c,1,k,k], [c]
  Var<Scalar> p2_weight, p2_bias;  // [c,c,1,1], [c]
};

inline constexpr Index kMultiScaleKernels[4] = {5, 7, 9, 11};

/// Adaptive multi-scale cascaded modulator on [B,C,H,W].
///
/// Channel bookkeeping for width C with t = floor(C/3):
///   q1 = C - 2t channels (bypass), q2 = t, q3 = t;
///   psi7 acts on t channels, w_proj maps t -> t, psi9 acts on 2t channels,
///   the dilated conv maps (C - 2t) + 2t = C -> C.
template <typename Scalar>
struct AmcmParams {
  Index channels = 0;
  Index grid = 8;
  Var<Scalar> gate_weight, gate_bias;  // depthwise 3x3 over the second half
  PsiParams<Scalar> psi7, psi9;
  Var<Scalar> proj_weight, proj_bias;          // [t,t,1,1]
  Var<Scalar> dilated_weight, dilated_bias;    // dense 3x3, dilation 2, [C,C,3,3]
  std::array<Var<Scalar>, 4> ms_weight, ms_bias;  // depthwise k in {5,7,9,11}
  Var<Scalar> topology;                        // S, [G*G, G*G]
  Var<Scalar> omega_weight, omega_bias;        // [4C,4C,1,1]
  Var<Scalar> beta_weight, beta_bias;          // [4C,4C,1,1]
  Var<Scalar> tau_raw;                         // [1], tau = softplus(tau_raw)
  Var<Scalar> out_weight, out_bias;            // [C,4C,1,1]

  Index third() const { return channels / 3; }
  Index bypass_width() const { return channels - 2 * third(); }
};

// Requires even C >= 6 so that every slice is non-empty.
template <typename Scalar>
AmcmParams<Scalar> make_amcm_params(ParamBuilder<Scalar> builder, Index channels, Index grid);

// x * concat(x_a, D3(x_b)) over the half/half channel split.
template <typename Scalar>
Var<Scalar> gate_split(const Var<Scalar>& x, const AmcmParams<Scalar>& p);

// W_p2((D_k o GELU o W_p1)(h) * W_p1(h)), one shared W_p1.
template <typename Scalar>
Var<Scalar> psi(const Var<Scalar>& h, const PsiParams<Scalar>& p);

// R_d(concat(q1, psi9(concat(W_proj(q2), psi7(q3))))).
template <typename Scalar>
Var<Scalar> cascade(const Var<Scalar>& q1, const Var<Scalar>& q2, const Var<Scalar>& q3,
                    const AmcmParams<Scalar>& p);

// Intermediates exposed for inspection.
template <typename Scalar>
struct AmcmTrace {
  Var<Scalar> multi_scale;  // Z_ms [B,4C,H,W]
  Var<Scalar> attention;    // row-stochastic [B,G*G,G*G]
  Var<Scalar> grid_out;     // [B,4C,G,G] before upsampling
};

/// x + W_out(Z_ms * sigmoid(upsample(A))) where A is grid attention over the
/// adaptively pooled multi-scale field. Rejects H or W smaller than G.
template <typename Scalar>
Var<Scalar> amcm_forward(const Var<Scalar>& x, const AmcmParams<Scalar>& p,
                         AmcmTrace<Scalar>* trace = nullptr);

}  // namespace scrwkv

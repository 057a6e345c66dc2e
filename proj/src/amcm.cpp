#include "scrwkv/amcm.hpp"

#include "scrwkv/functional.hpp"

namespace scrwkv {
namespace {

template <typename Scalar>
PsiParams<Scalar> make_psi(ParamBuilder<Scalar> b, Index width, Index kernel) {
  PsiParams<Scalar> p;
  p.kernel = kernel;
  p.p1_weight = b.projection("p1.weight", {width, width, 1, 1});
  p.p1_bias = b.zeros("p1.bias", {width});
  p.dw_weight = b.kernel("dw.weight", {width, 1, kernel, kernel});
  p.dw_bias = b.zeros("dw.bias", {width});
  p.p2_weight = b.projection("p2.weight", {width, width, 1, 1});
  p.p2_bias = b.zeros("p2.bias", {width});
  return p;
}

template <typename Scalar>
Var<Scalar> pointwise(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& b) {
  return conv2d(x, w, b, ConvSpec::pointwise());
}

}  // namespace

template <typename Scalar>
AmcmParams<Scalar> make_amcm_params(ParamBuilder<Scalar> b, Index channels, Index grid) {
  if (channels < 6 || channels % 2 != 0)
    throw ShapeError("amcm: channel count must be even and >= 6, got " + std::to_string(channels));
  if (grid < 1) throw ShapeError("amcm: grid must be >= 1");
  AmcmParams<Scalar> p;
  p.channels = channels;
  p.grid = grid;
  const Index half = channels / 2, t = p.third(), wide = 4 * channels;
  p.gate_weight = b.kernel("gate.weight", {half, 1, 3, 3});
  p.gate_bias = b.zeros("gate.bias", {half});
  p.psi7 = make_psi(b.scope("psi7"), t, 7);
  p.proj_weight = b.projection("proj.weight", {t, t, 1, 1});
  p.proj_bias = b.zeros("proj.bias", {t});
  p.psi9 = make_psi(b.scope("psi9"), 2 * t, 9);
  p.dilated_weight = b.kernel("dilated.weight", {channels, channels, 3, 3});
  p.dilated_bias = b.zeros("dilated.bias", {channels});
  for (std::size_t i = 0; i < 4; ++i) {
    const Index k = kMultiScaleKernels[i];
    const std::string name = "ms" + std::to_string(k);
    p.ms_weight[i] = b.kernel(name + ".weight", {channels, 1, k, k});
    p.ms_bias[i] = b.zeros(name + ".bias", {channels});
  }
  p.topology = b.projection("topology", {grid * grid, grid * grid});
  p.omega_weight = b.projection("omega.weight", {wide, wide, 1, 1});
  p.omega_bias = b.zeros("omega.bias", {wide});
  p.beta_weight = b.projection("beta.weight", {wide, wide, 1, 1});
  p.beta_bias = b.zeros("beta.bias", {wide});
  p.tau_raw = b.constant("tau_raw", {1}, static_cast<Scalar>(kSoftplusOneRaw));
  p.out_weight = b.projection("out.weight", {channels, wide, 1, 1});
  p.out_bias = b.zeros("out.bias", {channels});
  return p;
}

template <typename Scalar>
Var<Scalar> gate_split(const Var<Scalar>& x, const AmcmParams<Scalar>& p) {
  if (x.value().rank() != 4 || x.dim(1) != p.channels)
    throw ShapeError("gate_split: expected [B," + std::to_string(p.channels) + ",H,W], got " +
                     shape_str(x.shape()));
  const Index half = p.channels / 2;
  const Var<Scalar> a = slice_channels(x, 0, half);
  const Var<Scalar> b = slice_channels(x, half, half);
  const Var<Scalar> gated = conv2d(b, p.gate_weight, p.gate_bias, ConvSpec::depthwise(3));
  return mul(x, concat_channels<Scalar>({a, gated}));
}

template <typename Scalar>
Var<Scalar> psi(const Var<Scalar>& h, const PsiParams<Scalar>& p) {
  const Index width = p.p1_weight.dim(0);
  if (h.value().rank() != 4 || h.dim(1) != width)
    throw ShapeError("psi" + std::to_string(p.kernel) + ": expected " + std::to_string(width) +
                     " channels, got " + shape_str(h.shape()));
  const Var<Scalar> a = pointwise(h, p.p1_weight, p.p1_bias);
  const Var<Scalar> local =
      conv2d(gelu(a), p.dw_weight, p.dw_bias, ConvSpec::depthwise(p.kernel));
  return pointwise(mul(local, a), p.p2_weight, p.p2_bias);
}

template <typename Scalar>
Var<Scalar> cascade(const Var<Scalar>& q1, const Var<Scalar>& q2, const Var<Scalar>& q3,
                    const AmcmParams<Scalar>& p) {
  const Index t = p.third();
  if (q1.dim(1) != p.bypass_width() || q2.dim(1) != t || q3.dim(1) != t)
    throw ShapeError("cascade: slice widths (" + std::to_string(q1.dim(1)) + "," +
                     std::to_string(q2.dim(1)) + "," + std::to_string(q3.dim(1)) +
                     ") do not match (" + std::to_string(p.bypass_width()) + "," +
                     std::to_string(t) + "," + std::to_string(t) + ")");
  const Var<Scalar> h1 = psi(q3, p.psi7);
  const Var<Scalar> h2 =
      psi(concat_channels<Scalar>({pointwise(q2, p.proj_weight, p.proj_bias), h1}), p.psi9);
  return conv2d(concat_channels<Scalar>({q1, h2}), p.dilated_weight, p.dilated_bias,
                ConvSpec::dense(3, 2));
}

template <typename Scalar>
Var<Scalar> amcm_forward(const Var<Scalar>& x, const AmcmParams<Scalar>& p,
                         AmcmTrace<Scalar>* trace) {
  if (x.value().rank() != 4 || x.dim(1) != p.channels)
    throw ShapeError("amcm: expected [B," + std::to_string(p.channels) + ",H,W], got " +
                     shape_str(x.shape()));
  const Index h = x.dim(2), w = x.dim(3), g = p.grid;
  if (h < g || w < g)
    throw ShapeError("amcm: spatial size " + std::to_string(h) + "x" + std::to_string(w) +
                     " is smaller than grid " + std::to_string(g));

  const Var<Scalar> gated = gate_split(x, p);
  const Index t = p.third(), q1w = p.bypass_width();
  const Var<Scalar> xcas = cascade(slice_channels(gated, 0, q1w), slice_channels(gated, q1w, t),
                                   slice_channels(gated, q1w + t, t), p);

  std::vector<Var<Scalar>> scales;
  for (std::size_t i = 0; i < 4; ++i)
    scales.push_back(
        conv2d(xcas, p.ms_weight[i], p.ms_bias[i], ConvSpec::depthwise(kMultiScaleKernels[i])));
  const Var<Scalar> zms = concat_channels(scales);

  const Var<Scalar> pooled = adaptive_avg_pool(zms, g);
  const Var<Scalar> omega = image_to_tokens(pointwise(pooled, p.omega_weight, p.omega_bias));
  const Var<Scalar> beta = image_to_tokens(pointwise(pooled, p.beta_weight, p.beta_bias));
  const Var<Scalar> modulated = row_scale(p.topology, mean_axis(omega, 2));
  const Var<Scalar> attention = softmax(div_scalar(modulated, softplus(p.tau_raw)), 2);
  const Var<Scalar> grid_out = tokens_to_image(bmm(attention, add(omega, beta)), g, g);
  const Var<Scalar> upsampled = bilinear_resize(grid_out, h, w);
  const Var<Scalar> out = add(x, pointwise(mul(zms, sigmoid(upsampled)), p.out_weight, p.out_bias));
  if (trace) *trace = {zms, attention, grid_out};
  return out;
}

#define SCRWKV_INSTANTIATE_AMCM(S)                                                           \
  template AmcmParams<S> make_amcm_params(ParamBuilder<S>, Index, Index);                   \
  template Var<S> gate_split(const Var<S>&, const AmcmParams<S>&);                          \
  template Var<S> psi(const Var<S>&, const PsiParams<S>&);                                  \
  template Var<S> cascade(const Var<S>&, const Var<S>&, const Var<S>&, const AmcmParams<S>&); \
  template Var<S> amcm_forward(const Var<S>&, const AmcmParams<S>&, AmcmTrace<S>*);

SCRWKV_INSTANTIATE_AMCM(float)
SCRWKV_INSTANTIATE_AMCM(double)

}  // namespace scrwkv

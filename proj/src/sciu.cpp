#include "scrwkv/sciu.hpp"

#include "scrwkv/functional.hpp"

namespace scrwkv {
namespace {

void check_tokens(const Shape& shape, Index channels, const GbstSpec& spec, const char* op) {
  if (shape.size() != 3 || shape[2] != channels || shape[1] != spec.height * spec.width)
    throw ShapeError(std::string(op) + ": expected [B," + std::to_string(spec.height * spec.width) +
                     "," + std::to_string(channels) + "], got " + shape_str(shape));
}

template <typename Scalar>
Var<Scalar> gate(const Var<Scalar>& mu, const Shape& shape) {
  return broadcast_leading(sigmoid(mu), shape);
}

}  // namespace

template <typename Scalar>
SciuParams<Scalar> make_sciu_params(ParamBuilder<Scalar> b, Index channels, Index ratio,
                                    Index grid) {
  if (ratio < 1) throw ShapeError("sciu: channel-mix ratio must be >= 1");
  SciuParams<Scalar> p;
  p.channels = channels;
  p.hidden = ratio * channels;
  const Index c = channels, hdn = p.hidden;
  p.ln1_gain = b.constant("ln1.gain", {c}, Scalar(1));
  p.ln1_shift = b.zeros("ln1.shift", {c});

  p.mu_c = b.zeros("spatial.mu", {c});
  p.r_weight = b.projection("spatial.r.weight", {c, c});
  p.r_bias = b.zeros("spatial.r.bias", {c});
  p.k_weight = b.projection("spatial.k.weight", {c, c});
  p.k_bias = b.zeros("spatial.k.bias", {c});
  p.v_weight = b.projection("spatial.v.weight", {c, c});
  p.v_bias = b.zeros("spatial.v.bias", {c});
  p.decay.base_raw = b.constant("spatial.decay.base_raw", {c}, static_cast<Scalar>(kSoftplusOneRaw));
  p.decay.proj_weight = b.projection("spatial.decay.proj.weight", {c, c});
  p.decay.proj_bias = b.zeros("spatial.decay.proj.bias", {c});
  p.decay.bonus = b.zeros("spatial.decay.bonus", {c});

  p.amcm = make_amcm_params(b.scope("amcm"), c, grid);

  p.ln2_gain = b.constant("ln2.gain", {c}, Scalar(1));
  p.ln2_shift = b.zeros("ln2.shift", {c});
  p.ctx_weight = b.projection("channel.ctx.weight", {c, c});
  p.ctx_bias = b.zeros("channel.ctx.bias", {c});
  p.mu_k = b.zeros("channel.mu_k", {c});
  p.mu_r = b.zeros("channel.mu_r", {c});
  p.cm_r_weight = b.projection("channel.r.weight", {c, c});
  p.cm_r_bias = b.zeros("channel.r.bias", {c});
  p.cm_k_weight = b.projection("channel.k.weight", {hdn, c});
  p.cm_k_bias = b.zeros("channel.k.bias", {hdn});
  p.cm_v_weight = b.projection("channel.v.weight", {c, hdn});
  p.cm_v_bias = b.zeros("channel.v.bias", {c});
  return p;
}

template <typename Scalar>
Var<Scalar> spatial_branch(const Var<Scalar>& x, const SciuParams<Scalar>& p,
                           const SciuOptions& opt) {
  check_tokens(x.shape(), p.channels, opt.gbst, "spatial_mix");
  const Var<Scalar> mixed = lerp(x, gbst(x, opt.gbst), gate(p.mu_c, x.shape()));
  const Var<Scalar> r = linear(mixed, p.r_weight, p.r_bias);
  const Var<Scalar> k = linear(mixed, p.k_weight, p.k_bias);
  const Var<Scalar> v = linear(mixed, p.v_weight, p.v_bias);
  const Var<Scalar> decay = dscd(x, p.decay, opt.decay_mode);
  return mul(sigmoid(r), dywkv(k, v, decay, p.decay.bonus, opt.algorithm));
}

template <typename Scalar>
Var<Scalar> spatial_mix(const Var<Scalar>& x, const SciuParams<Scalar>& p, const SciuOptions& opt) {
  return add(x, spatial_branch(x, p, opt));
}

template <typename Scalar>
Var<Scalar> channel_branch(const Var<Scalar>& x, const SciuParams<Scalar>& p,
                           const SciuOptions& opt) {
  check_tokens(x.shape(), p.channels, opt.gbst, "channel_mix");
  const Var<Scalar> context = sigmoid(linear(x, p.ctx_weight, p.ctx_bias));
  const Var<Scalar> shifted = gbst(x, opt.gbst);
  const Var<Scalar> xk = lerp(x, shifted, mul(gate(p.mu_k, x.shape()), context));
  const Var<Scalar> xr = lerp(x, shifted, mul(gate(p.mu_r, x.shape()), context));
  const Var<Scalar> hidden = squared_relu(linear(xk, p.cm_k_weight, p.cm_k_bias));
  return mul(sigmoid(linear(xr, p.cm_r_weight, p.cm_r_bias)),
             linear(hidden, p.cm_v_weight, p.cm_v_bias));
}

template <typename Scalar>
Var<Scalar> channel_mix(const Var<Scalar>& x, const SciuParams<Scalar>& p, const SciuOptions& opt) {
  return add(x, channel_branch(x, p, opt));
}

template <typename Scalar>
Var<Scalar> sciu_forward(const Var<Scalar>& x, const SciuParams<Scalar>& p, const SciuOptions& opt) {
  const Var<Scalar> x1 = add(x, spatial_branch(layer_norm(x, p.ln1_gain, p.ln1_shift), p, opt));
  const Var<Scalar> image = tokens_to_image(x1, opt.gbst.height, opt.gbst.width);
  const Var<Scalar> x2 = image_to_tokens(amcm_forward(image, p.amcm));
  return add(x2, channel_branch(layer_norm(x2, p.ln2_gain, p.ln2_shift), p, opt));
}

#define SCRWKV_INSTANTIATE_SCIU(S)                                                        \
  template SciuParams<S> make_sciu_params(ParamBuilder<S>, Index, Index, Index);         \
  template Var<S> spatial_branch(const Var<S>&, const SciuParams<S>&, const SciuOptions&); \
  template Var<S> spatial_mix(const Var<S>&, const SciuParams<S>&, const SciuOptions&);    \
  template Var<S> channel_branch(const Var<S>&, const SciuParams<S>&, const SciuOptions&); \
  template Var<S> channel_mix(const Var<S>&, const SciuParams<S>&, const SciuOptions&);    \
  template Var<S> sciu_forward(const Var<S>&, const SciuParams<S>&, const SciuOptions&);

SCRWKV_INSTANTIATE_SCIU(float)
SCRWKV_INSTANTIATE_SCIU(double)

}  // namespace scrwkv

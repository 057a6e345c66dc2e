#include "scrwkv/cshf.hpp"

#include "scrwkv/functional.hpp"

namespace scrwkv {

template <typename Scalar>
CshfParams<Scalar> make_cshf_params(ParamBuilder<Scalar> b, Index in_channels, Index width,
                                    Index factor) {
  if (width < 1) throw ShapeError("cshf: decoder width must be >= 1");
  if (factor < 1) throw ShapeError("cshf: upsampling factor must be >= 1");
  CshfParams<Scalar> p;
  p.in_channels = in_channels;
  p.width = width;
  p.factor = factor;
  const Index d = width, offsets = 2 * factor * factor;
  for (std::size_t i = 0; i < 4; ++i) {
    ParamBuilder<Scalar> level = b.scope("level" + std::to_string(i + 1));
    p.proj_weight[i] = level.projection("proj.weight", {d, in_channels});
    p.proj_bias[i] = level.zeros("proj.bias", {d});
    p.offset_weight[i] = level.projection("offset.weight", {offsets, d, 1, 1});
    p.offset_bias[i] = level.zeros("offset.bias", {offsets});
    p.scale_embed[i] = level.projection("embed", {d});
  }
  p.attn_weight = b.projection("attn.weight", {4, 4 * d, 1, 1});
  p.attn_bias = b.zeros("attn.bias", {4});
  p.exp_weight = b.projection("expand.weight", {4 * d, d, 1, 1});
  p.exp_bias = b.zeros("expand.bias", {4 * d});
  p.norm_gain = b.constant("norm.gain", {4 * d}, Scalar(1));
  p.norm_shift = b.zeros("norm.shift", {4 * d});
  p.head_weight = b.kernel("head.weight", {1, 4 * d, 3, 3});
  p.head_bias = b.zeros("head.bias", {1});
  return p;
}

template <typename Scalar>
Var<Scalar> offset_sample(const Var<Scalar>& x, const Var<Scalar>& offsets, Index factor) {
  const Tensor<Scalar>& xv = x.value();
  if (xv.rank() != 4) throw ShapeError("offset_sample: x must be [B,D,h,w]");
  const Index batch = xv.dim(0), d = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const Index s = factor, oh = s * h, ow = s * w;
  if (offsets.shape() != Shape{batch, 2 * s * s, h, w})
    throw ShapeError("offset_sample: offsets must be " +
                     shape_str({batch, 2 * s * s, h, w}) + ", got " + shape_str(offsets.shape()));

  // One tap per (batch, output position), shared by all channels.
  auto make_taps = [=](const Tensor<Scalar>& off) {
    std::vector<BilinearTap<Scalar>> taps;
    taps.reserve(static_cast<std::size_t>(batch * oh * ow));
    for (Index b = 0; b < batch; ++b)
      for (Index oy = 0; oy < oh; ++oy)
        for (Index ox = 0; ox < ow; ++ox) {
          const Index j = (oy % s) * s + (ox % s);
          const Index base = ((b * 2 * s * s + 2 * j) * h + oy / s) * w + ox / s;
          const Scalar dy = off[base], dx = off[base + h * w];
          taps.emplace_back(resize_source_coord<Scalar>(oy, h, oh) + dy,
                            resize_source_coord<Scalar>(ox, w, ow) + dx, h, w);
        }
    return taps;
  };

  const auto taps = make_taps(offsets.value());
  Tensor<Scalar> y({batch, d, oh, ow});
  for (Index b = 0; b < batch; ++b)
    for (Index c = 0; c < d; ++c) {
      const Scalar* plane = xv.data() + (b * d + c) * h * w;
      Scalar* out = y.data() + (b * d + c) * oh * ow;
      const BilinearTap<Scalar>* tap = taps.data() + b * oh * ow;
      for (Index t = 0; t < oh * ow; ++t) out[t] = tap[t].sample(plane, w);
    }

  return record<Scalar>(
      std::move(y), {x, offsets},
      [=](const Node<Scalar>& self, const Tensor<Scalar>& g, auto grads) {
        const Tensor<Scalar>& xin = self.input(0);
        const auto taps = make_taps(self.input(1));
        for (Index b = 0; b < batch; ++b)
          for (Index c = 0; c < d; ++c) {
            const Scalar* plane = xin.data() + (b * d + c) * h * w;
            const Scalar* gp = g.data() + (b * d + c) * oh * ow;
            const BilinearTap<Scalar>* tap = taps.data() + b * oh * ow;
            if (grads[0]) {
              Scalar* gx = grads[0]->data() + (b * d + c) * h * w;
              for (Index t = 0; t < oh * ow; ++t) tap[t].scatter(gx, w, gp[t]);
            }
            if (grads[1]) {
              Scalar* go = grads[1]->data();
              for (Index oy = 0; oy < oh; ++oy)
                for (Index ox = 0; ox < ow; ++ox) {
                  const Index t = oy * ow + ox;
                  const Index j = (oy % s) * s + (ox % s);
                  const Index base = ((b * 2 * s * s + 2 * j) * h + oy / s) * w + ox / s;
                  go[base] += gp[t] * tap[t].d_dy(plane, w);
                  go[base + h * w] += gp[t] * tap[t].d_dx(plane, w);
                }
            }
          }
      });
}

template <typename Scalar>
Var<Scalar> dysample_up(const Var<Scalar>& x, Index factor, const Var<Scalar>& offset_weight,
                        const Var<Scalar>& offset_bias, Scalar bound) {
  const Var<Scalar> raw = conv2d(x, offset_weight, offset_bias, ConvSpec::pointwise());
  return offset_sample(x, scale(tanh(raw), bound), factor);
}

template <typename Scalar>
Var<Scalar> scale_fusion(const Var<Scalar>& attn, const Var<Scalar>& features) {
  const Tensor<Scalar>& a = attn.value();
  const Tensor<Scalar>& f = features.value();
  if (a.rank() != 4 || f.rank() != 4 || f.dim(0) != a.dim(0) || f.dim(2) != a.dim(2) ||
      f.dim(3) != a.dim(3) || f.dim(1) % a.dim(1) != 0)
    throw ShapeError("scale_fusion: attention " + shape_str(a.shape()) + " vs features " +
                     shape_str(f.shape()));
  const Index batch = a.dim(0), levels = a.dim(1), d = f.dim(1) / levels;
  const Index hw = a.dim(2) * a.dim(3);
  Tensor<Scalar> y({batch, d, a.dim(2), a.dim(3)});
  for (Index b = 0; b < batch; ++b)
    for (Index i = 0; i < levels; ++i) {
      const Scalar* ai = a.data() + (b * levels + i) * hw;
      for (Index c = 0; c < d; ++c) {
        const Scalar* fi = f.data() + ((b * levels + i) * d + c) * hw;
        Scalar* out = y.data() + (b * d + c) * hw;
        for (Index p = 0; p < hw; ++p) out[p] += ai[p] * fi[p];
      }
    }
  return record<Scalar>(
      std::move(y), {attn, features},
      [=](const Node<Scalar>& self, const Tensor<Scalar>& g, auto grads) {
        const Tensor<Scalar>& a = self.input(0);
        const Tensor<Scalar>& f = self.input(1);
        for (Index b = 0; b < batch; ++b)
          for (Index i = 0; i < levels; ++i) {
            const Index ao = (b * levels + i) * hw;
            for (Index c = 0; c < d; ++c) {
              const Index fo = ((b * levels + i) * d + c) * hw;
              const Scalar* gp = g.data() + (b * d + c) * hw;
              for (Index p = 0; p < hw; ++p) {
                if (grads[0]) (*grads[0])[ao + p] += gp[p] * f[fo + p];
                if (grads[1]) (*grads[1])[fo + p] += gp[p] * a[ao + p];
              }
            }
          }
      });
}

template <typename Scalar>
Var<Scalar> cshf_forward(const std::vector<Var<Scalar>>& features, Index h, Index w,
                         const CshfParams<Scalar>& p, CshfTrace<Scalar>* trace) {
  if (features.size() != 4)
    throw ShapeError("cshf: expected 4 feature levels, got " + std::to_string(features.size()));
  std::vector<Var<Scalar>> aligned, embedded;
  for (std::size_t i = 0; i < 4; ++i) {
    const Shape& s = features[i].shape();
    if (s.size() != 3 || s[1] != h * w || s[2] != p.in_channels)
      throw ShapeError("cshf: level " + std::to_string(i + 1) + " has shape " + shape_str(s) +
                       ", expected [B," + std::to_string(h * w) + "," +
                       std::to_string(p.in_channels) + "]");
    const Var<Scalar> projected =
        tokens_to_image(linear(features[i], p.proj_weight[i], p.proj_bias[i]), h, w);
    aligned.push_back(dysample_up(projected, p.factor, p.offset_weight[i], p.offset_bias[i]));
    embedded.push_back(add_channel(aligned.back(), p.scale_embed[i]));
  }
  const Var<Scalar> stacked = concat_channels(embedded);
  const Var<Scalar> attention =
      softmax(conv2d(stacked, p.attn_weight, p.attn_bias, ConvSpec::pointwise()), 1);
  const Var<Scalar> harmonic = scale_fusion(attention, stacked);
  const Var<Scalar> gated = mul(conv2d(harmonic, p.exp_weight, p.exp_bias, ConvSpec::pointwise()),
                                concat_channels(aligned));
  const Index oh = p.factor * h, ow = p.factor * w;
  const Var<Scalar> normed =
      tokens_to_image(layer_norm(image_to_tokens(gated), p.norm_gain, p.norm_shift), oh, ow);
  const Var<Scalar> logits = conv2d(normed, p.head_weight, p.head_bias, ConvSpec::dense(3));
  if (trace) {
    trace->scale_attention = attention;
    trace->harmonic = harmonic;
    for (std::size_t i = 0; i < 4; ++i) trace->embedded[i] = embedded[i];
  }
  return logits;
}

#define SCRWKV_INSTANTIATE_CSHF(S)                                                   \
  template CshfParams<S> make_cshf_params(ParamBuilder<S>, Index, Index, Index);    \
  template Var<S> offset_sample(const Var<S>&, const Var<S>&, Index);               \
  template Var<S> dysample_up(const Var<S>&, Index, const Var<S>&, const Var<S>&, S); \
  template Var<S> scale_fusion(const Var<S>&, const Var<S>&);                       \
  template Var<S> cshf_forward(const std::vector<Var<S>>&, Index, Index, const CshfParams<S>&, \
                               CshfTrace<S>*);

SCRWKV_INSTANTIATE_CSHF(float)
SCRWKV_INSTANTIATE_CSHF(double)

}  // namespace scrwkv

#pragma once

#include "scrwkv/tensor.hpp"

namespace scrwkv {

enum class ConvGroups { depthwise, pointwise, dense };

struct ConvSpec {
  Index kernel = 1;
  Index dilation = 1;
  Index padding = -1;  // -1: (kernel - 1) * dilation / 2, which preserves H and W
  ConvGroups groups = ConvGroups::dense;

  static ConvSpec depthwise(Index k, Index d = 1) { return {k, d, -1, ConvGroups::depthwise}; }
  static ConvSpec pointwise() { return {1, 1, 0, ConvGroups::pointwise}; }
  static ConvSpec dense(Index k, Index d = 1) { return {k, d, -1, ConvGroups::dense}; }

  Index effective_padding() const { return padding < 0 ? (kernel - 1) * dilation / 2 : padding; }
  void validate() const;
};

// Expected weight shape for a conv with the given channel counts.
Shape conv_weight_shape(const ConvSpec& spec, Index in_channels, Index out_channels);

template <typename Scalar>
struct ConvGrads {
  Tensor<Scalar> input, weight, bias;
};

/// 2-D convolution with stride 1 over [B,C,H,W]. Depthwise weights are
/// [C,1,k,k], pointwise [Cout,Cin,1,1], dense [Cout,Cin,k,k]. An empty bias
/// tensor means no bias.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, const ConvSpec& spec);

template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                                  const Tensor<Scalar>& grad_out, const ConvSpec& spec,
                                  bool has_bias);

/// y = x W^T + b over the last axis. weight is [Cout, Cin].
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias);

template <typename Scalar>
ConvGrads<Scalar> linear_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                                  const Tensor<Scalar>& grad_out, bool has_bias);

// Softmax along `axis`, max-subtracted.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x, Index axis);

template <typename Scalar>
Tensor<Scalar> softmax_backward(const Tensor<Scalar>& y, const Tensor<Scalar>& grad_y, Index axis);

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  // Split by sign so neither branch overflows.
  if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar softplus(Scalar x) {
  return x > Scalar(30) ? x : std::log1p(std::exp(x));
}

// GELU, tanh approximation.
template <typename Scalar>
Scalar gelu(Scalar x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  const Scalar inner = Scalar(k) * (x + Scalar(0.044715) * x * x * x);
  return Scalar(0.5) * x * (Scalar(1) + std::tanh(inner));
}

template <typename Scalar>
Scalar gelu_derivative(Scalar x) {
  constexpr double k = 0.7978845608028654;
  const Scalar x2 = x * x;
  const Scalar th = std::tanh(Scalar(k) * (x + Scalar(0.044715) * x2 * x));
  const Scalar dinner = Scalar(k) * (Scalar(1) + Scalar(3 * 0.044715) * x2);
  return Scalar(0.5) * (Scalar(1) + th) + Scalar(0.5) * x * (Scalar(1) - th * th) * dinner;
}

template <typename Scalar>
Scalar squared_relu(Scalar x) {
  return x > 0 ? x * x : Scalar(0);
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> squared_relu(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> softplus(const Tensor<Scalar>& x);

inline constexpr double kLayerNormEps = 1e-5;

/// Normalizes over the last axis: (x - mean) / sqrt(var + eps) * gain + shift.
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gain,
                          const Tensor<Scalar>& shift);

template <typename Scalar>
struct LayerNormGrads {
  Tensor<Scalar> input, gain, shift;
};

template <typename Scalar>
LayerNormGrads<Scalar> layer_norm_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& gain,
                                           const Tensor<Scalar>& grad_out);

// Half-pixel-centre source coordinate for output index `o` when mapping
// `in` samples onto `out` samples (align_corners = false convention).
template <typename Scalar>
Scalar resize_source_coord(Index o, Index in, Index out) {
  return (static_cast<Scalar>(o) + Scalar(0.5)) * (static_cast<Scalar>(in) / static_cast<Scalar>(out)) -
         Scalar(0.5);
}

/// Bilinear resize of [B,C,H,W] with half-pixel centres; source coordinates
/// are clamped to [0, size-1] (edge replication).
template <typename Scalar>
Tensor<Scalar> bilinear_resize(const Tensor<Scalar>& x, Index out_h, Index out_w);

template <typename Scalar>
Tensor<Scalar> bilinear_resize_backward(const Tensor<Scalar>& grad_out, Index in_h, Index in_w);

/// Adaptive average pooling to [B,C,G,G]; bin i spans
/// [floor(i*H/G), ceil((i+1)*H/G)).
template <typename Scalar>
Tensor<Scalar> adaptive_avg_pool(const Tensor<Scalar>& x, Index grid);

template <typename Scalar>
Tensor<Scalar> adaptive_avg_pool_backward(const Tensor<Scalar>& grad_out, Index in_h, Index in_w);

// One bilinear tap of a single plane at a (clamped) fractional coordinate,
// plus the partial derivatives of the sample with respect to y and x.
template <typename Scalar>
struct BilinearTap {
  Index y0, y1, x0, x1;
  Scalar ly, lx;        // fractional parts
  bool clamp_y, clamp_x;  // coordinate was clamped (zero coordinate derivative)

  static Index clamp_floor(Scalar c, Index n, Scalar& frac, bool& clamped) {
    const Scalar hi = static_cast<Scalar>(n - 1);
    clamped = false;
    if (c <= Scalar(0)) {
      clamped = c < Scalar(0);
      c = Scalar(0);
    } else if (c >= hi) {
      clamped = c > hi;
      c = hi;
    }
    const Index i0 = std::min<Index>(static_cast<Index>(std::floor(c)), n - 1);
    frac = c - static_cast<Scalar>(i0);
    return i0;
  }

  BilinearTap(Scalar y, Scalar x, Index h, Index w) {
    y0 = clamp_floor(y, h, ly, clamp_y);
    x0 = clamp_floor(x, w, lx, clamp_x);
    y1 = std::min(y0 + 1, h - 1);
    x1 = std::min(x0 + 1, w - 1);
  }

  Scalar sample(const Scalar* plane, Index w) const {
    const Scalar top = (Scalar(1) - lx) * plane[y0 * w + x0] + lx * plane[y0 * w + x1];
    const Scalar bot = (Scalar(1) - lx) * plane[y1 * w + x0] + lx * plane[y1 * w + x1];
    return (Scalar(1) - ly) * top + ly * bot;
  }

  void scatter(Scalar* plane_grad, Index w, Scalar g) const {
    plane_grad[y0 * w + x0] += g * (Scalar(1) - ly) * (Scalar(1) - lx);
    plane_grad[y0 * w + x1] += g * (Scalar(1) - ly) * lx;
    plane_grad[y1 * w + x0] += g * ly * (Scalar(1) - lx);
    plane_grad[y1 * w + x1] += g * ly * lx;
  }

  Scalar d_dy(const Scalar* plane, Index w) const {
    if (clamp_y || y1 == y0) return Scalar(0);
    const Scalar top = (Scalar(1) - lx) * plane[y0 * w + x0] + lx * plane[y0 * w + x1];
    const Scalar bot = (Scalar(1) - lx) * plane[y1 * w + x0] + lx * plane[y1 * w + x1];
    return bot - top;
  }

  Scalar d_dx(const Scalar* plane, Index w) const {
    if (clamp_x || x1 == x0) return Scalar(0);
    const Scalar left = (Scalar(1) - ly) * plane[y0 * w + x0] + ly * plane[y1 * w + x0];
    const Scalar right = (Scalar(1) - ly) * plane[y0 * w + x1] + ly * plane[y1 * w + x1];
    return right - left;
  }
};

// Token/image layout changes: [B,C,H,W] <-> [B,H*W,C].
template <typename Scalar>
Tensor<Scalar> image_to_tokens(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> tokens_to_image(const Tensor<Scalar>& x, Index h, Index w);

}  // namespace scrwkv

#pragma once

#include "scrwkv/autodiff.hpp"
#include "scrwkv/kernels.hpp"

// Differentiable counterparts of the tensor kernels. Every function records
// its backward closure when an input requires a gradient.
namespace scrwkv {

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar s);
// gate * a + (1 - gate) * b, all the same shape.
template <typename Scalar>
Var<Scalar> lerp(const Var<Scalar>& a, const Var<Scalar>& b, const Var<Scalar>& gate);
// x / s where s is a one-element tensor.
template <typename Scalar>
Var<Scalar> div_scalar(const Var<Scalar>& x, const Var<Scalar>& s);

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> squared_relu(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> softplus(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> neg(const Var<Scalar>& x);

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x);
// Mean over one axis; the axis is removed from the shape.
template <typename Scalar>
Var<Scalar> mean_axis(const Var<Scalar>& x, Index axis);

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, Shape shape);
template <typename Scalar>
Var<Scalar> image_to_tokens(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> tokens_to_image(const Var<Scalar>& x, Index h, Index w);

// Channel slicing / concatenation on [B,C,H,W].
template <typename Scalar>
Var<Scalar> slice_channels(const Var<Scalar>& x, Index start, Index count);
template <typename Scalar>
Var<Scalar> concat_channels(const std::vector<Var<Scalar>>& parts);

// Repeats v over the leading axes of `shape`; v.shape() must equal the
// trailing dims of `shape`.
template <typename Scalar>
Var<Scalar> broadcast_leading(const Var<Scalar>& v, const Shape& shape);
// x[b,c,h,w] + v[c]
template <typename Scalar>
Var<Scalar> add_channel(const Var<Scalar>& x, const Var<Scalar>& v);

// `bias` may be an undefined Var.
template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias);
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                   const ConvSpec& spec);
template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar>& x, const Var<Scalar>& gain, const Var<Scalar>& shift);
template <typename Scalar>
Var<Scalar> softmax(const Var<Scalar>& x, Index axis);

template <typename Scalar>
Var<Scalar> adaptive_avg_pool(const Var<Scalar>& x, Index grid);
template <typename Scalar>
Var<Scalar> bilinear_resize(const Var<Scalar>& x, Index out_h, Index out_w);

// out[b,m,n] = rows[b,m] * matrix[m,n]
template <typename Scalar>
Var<Scalar> row_scale(const Var<Scalar>& matrix, const Var<Scalar>& rows);
// Batched product [B,M,K] x [B,K,N].
template <typename Scalar>
Var<Scalar> bmm(const Var<Scalar>& a, const Var<Scalar>& b);

// [B,C,H,W] -> [B,(H/P)(W/P),C*P*P]; each row is one non-overlapping patch
// flattened in (c, py, px) order.
template <typename Scalar>
Var<Scalar> patchify(const Var<Scalar>& img, Index patch);
template <typename Scalar>
Tensor<Scalar> patchify(const Tensor<Scalar>& img, Index patch);

}  // namespace scrwkv

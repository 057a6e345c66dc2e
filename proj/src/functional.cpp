#include "scrwkv/functional.hpp"

namespace scrwkv {
namespace {

template <typename Scalar>
void require_same(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

template <typename Scalar, typename Forward, typename Derivative>
Var<Scalar> unary(const Var<Scalar>& x, Forward f, Derivative df) {
  Tensor<Scalar> y(x.shape());
  for (Index i = 0; i < y.size(); ++i) y[i] = f(x.value()[i]);
  return record<Scalar>(std::move(y), {x},
                        [df](const Node<Scalar>& self, const Tensor<Scalar>& g, auto grads) {
                          const Tensor<Scalar>& in = self.input(0);
                          for (Index i = 0; i < g.size(); ++i)
                            (*grads[0])[i] += g[i] * df(in[i], self.value[i]);
                        });
}

}  // namespace

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same(a, b, "add");
  return record<Scalar>(a.value() + b.value(), {a, b},
                        [](const Node<Scalar>&, const Tensor<Scalar>& g, auto grads) {
                          if (grads[0]) *grads[0] += g;
                          if (grads[1]) *grads[1] += g;
                        });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same(a, b, "sub");
  return record<Scalar>(a.value() - b.value(), {a, b},
                        [](const Node<Scalar>&, const Tensor<Scalar>& g, auto grads) {
                          if (grads[0]) *grads[0] += g;
                          if (grads[1]) *grads[1] -= g;
                        });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same(a, b, "mul");
  Tensor<Scalar> y(a.shape(), a.value().array() * b.value().array());
  return record<Scalar>(std::move(y), {a, b},
                        [](const Node<Scalar>& self, const Tensor<Scalar>& g, auto grads) {
                          if (grads[0]) grads[0]->array() += g.array() * self.input(1).array();
                          if (grads[1]) grads[1]->array() += g.array() * self.input(0).array();
                        });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar s) {
  Tensor<Scalar> y(a.shape(), a.value().array() * s);
  return record<Scalar>(std::move(y), {a},
                        [s](const Node<Scalar>&, const Tensor<Scalar>& g, auto grads) {
                          grads[0]->array() += g.array() * s;
                        });
}

template <typename Scalar>
Var<Scalar> lerp(const Var<Scalar>& a, const Var<Scalar>& b, const Var<Scalar>& gate) {
  require_same(a, b, "lerp");
  require_same(a, gate, "lerp gate");
  const auto& gv = gate.value().array();
  Tensor<Scalar> y(a.shape(), gv * a.value().array() + (Scalar(1) - gv) * b.value().array());
  return record<Scalar>(
      std::move(y), {a, b, gate}, [](const Node<Scalar>& self, const Tensor<Scalar>& g, auto grads) {
        const auto& gt = self.input(2).array();
        if (grads[0]) grads[0]->array() += g.array() * gt;
        if (grads[1]) grads[1]->array() += g.array() * (Scalar(1) - gt);
        if (grads[2])
          grads[2]->array() += g.array() * (self.input(0).array() - self.input(1).array());
      });
}

template <typename Scalar>
Var<Scalar> div_scalar(const Var<Scalar>& x, const Var<Scalar>& s) {
  const Scalar d = s.value().item();
  Tensor<Scalar> y(x.shape(), x.value().array() / d);
  return record<Scalar>(std::move(y), {x, s},
                        [](const Node<Scalar>& self, const Tensor<Scalar>& g, auto grads) {
                          const Scalar d = self.input(1).item();
                          if (grads[0]) grads[0]->array() += g.array() / d;
                          if (grads[1])
                            (*grads[1])[0] -= (g.array() * self.value.array()).sum() / d;
                        });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  return unary(
      x, [](Scalar v) { return sigmoid(v); }, [](Scalar, Scalar y) { return y * (Scalar(1) - y); });
}

template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& x) {
  return unary(
      x, [](Scalar v) { return gelu(v); }, [](Scalar v, Scalar) { return gelu_derivative(v); });
}

template <typename Scalar>
Var<Scalar> squared_relu(const Var<Scalar>& x) {
  return unary(
      x, [](Scalar v) { return squared_relu(v); },
      [](Scalar v, Scalar) { return v > 0 ? Scalar(2) * v : Scalar(0); });
}

template <typename Scalar>
Var<Scalar> softplus(const Var<Scalar>& x) {
  return unary(
      x, [](Scalar v) { return softplus(v); }, [](Scalar v, Scalar) { return sigmoid(v); });
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& x) {
  return unary(
      x, [](Scalar v) { return std::exp(v); }, [](Scalar, Scalar y) { return y; });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& x) {
  return unary(
      x, [](Scalar v) { return std::tanh(v); }, [](Scalar, Scalar y) { return Scalar(1) - y * y; });
}

template <typename Scalar>
Var<Scalar> neg(const Var<Scalar>& x) {
  return scale(x, Scalar(-1));
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  return record<Scalar>(Tensor<Scalar>::scalar(x.value().array().sum()), {x},
                        [](const Node<Scalar>&, const Tensor<Scalar>& g, auto grads) {
                          grads[0]->array() += g[0];
                        });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x) {
  const auto n = static_cast<Scalar>(x.value().size());
  return record<Scalar>(Tensor<Scalar>::scalar(x.value().array().sum() / n), {x},
                        [n](const Node<Scalar>&, const Tensor<Scalar>& g, auto grads) {
                          grads[0]->array() += g[0] / n;
                        });
}

template <typename Scalar>
Var<Scalar> mean_axis(const Var<Scalar>& x, Index axis) {
  const Tensor<Scalar>& xv = x.value();
  if (axis < 0) axis += xv.rank();
  if (axis < 0 || axis >= xv.rank() || xv.rank() < 2)
    throw ShapeError("mean_axis: bad axis for " + shape_str(xv.shape()));
  Index outer = 1, inner = 1;
  for (Index i = 0; i < axis; ++i) outer *= xv.dim(i);
  for (Index i = axis + 1; i < xv.rank(); ++i) inner *= xv.dim(i);
  const Index len = xv.dim(axis);
  Shape out_shape = xv.shape();
  out_shape.erase(out_shape.begin() + axis);
  Tensor<Scalar> y(out_shape);
  for (Index o = 0; o < outer; ++o)
    for (Index a = 0; a < len; ++a)
      for (Index i = 0; i < inner; ++i) y[o * inner + i] += xv[(o * len + a) * inner + i];
  y *= Scalar(1) / static_cast<Scalar>(len);
  return record<Scalar>(std::move(y), {x},
                        [outer, inner, len](const Node<Scalar>&, const Tensor<Scalar>& g,
                                            auto grads) {
                          const Scalar s = Scalar(1) / static_cast<Scalar>(len);
                          for (Index o = 0; o < outer; ++o)
                            for (Index a = 0; a < len; ++a)
                              for (Index i = 0; i < inner; ++i)
                                (*grads[0])[(o * len + a) * inner + i] += g[o * inner + i] * s;
                        });
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, Shape shape) {
  return record<Scalar>(x.value().reshaped(std::move(shape)), {x},
                        [](const Node<Scalar>&, const Tensor<Scalar>& g, auto grads) {
                          grads[0]->array() += g.array();
                        });
}

template <typename Scalar>
Var<Scalar> image_to_tokens(const Var<Scalar>& x) {
  const Index h = x.dim(2), w = x.dim(3);
  return record<Scalar>(image_to_tokens(x.value()), {x},
                        [h, w](const Node<Scalar>&, const Tensor<Scalar>& g, auto grads) {
                          *grads[0] += tokens_to_image(g, h, w);
                        });
}

template <typename Scalar>
Var<Scalar> tokens_to_image(const Var<Scalar>& x, Index h, Index w) {
  return record<Scalar>(tokens_to_image(x.value(), h, w), {x},
                        [](const Node<Scalar>&, const Tensor<Scalar>& g, auto grads) {
                          *grads[0] += image_to_tokens(g);
                        });
}

template <typename Scalar>
Var<Scalar> slice_channels(const Var<Scalar>& x, Index start, Index count) {
  const Tensor<Scalar>& xv = x.value();
  if (xv.rank() != 4 || start < 0 || count < 1 || start + count > xv.dim(1))
    throw ShapeError("slice_channels: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " + shape_str(xv.shape()));
  const Index b = xv.dim(0), c = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
  Tensor<Scalar> y({b, count, xv.dim(2), xv.dim(3)});
  for (Index i = 0; i < b; ++i)
    std::copy_n(xv.data() + (i * c + start) * plane, count * plane, y.data() + i * count * plane);
  return record<Scalar>(std::move(y), {x},
                        [=](const Node<Scalar>&, const Tensor<Scalar>& g, auto grads) {
                          for (Index i = 0; i < b; ++i) {
                            Scalar* dst = grads[0]->data() + (i * c + start) * plane;
                            const Scalar* src = g.data() + i * count * plane;
                            for (Index j = 0; j < count * plane; ++j) dst[j] += src[j];
                          }
                        });
}

template <typename Scalar>
Var<Scalar> concat_channels(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& s0 = parts.front().shape();
  if (s0.size() != 4) throw ShapeError("concat_channels: inputs must be [B,C,H,W]");
  Index total = 0;
  std::vector<Index> widths;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != 4 || s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3])
      throw ShapeError("concat_channels: " + shape_str(s) + " incompatible with " + shape_str(s0));
    widths.push_back(s[1]);
    total += s[1];
  }
  const Index b = s0[0], plane = s0[2] * s0[3];
  Tensor<Scalar> y({b, total, s0[2], s0[3]});
  for (Index i = 0; i < b; ++i) {
    Index offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const Index w = widths[p];
      std::copy_n(parts[p].value().data() + i * w * plane, w * plane,
                  y.data() + (i * total + offset) * plane);
      offset += w;
    }
  }
  return record<Scalar>(
      std::move(y), parts,
      [widths, b, total, plane](const Node<Scalar>&, const Tensor<Scalar>& g, auto grads) {
        for (Index i = 0; i < b; ++i) {
          Index offset = 0;
          for (std::size_t p = 0; p < widths.size(); ++p) {
            const Index w = widths[p];
            if (grads[p]) {
              Scalar* dst = grads[p]->data() + i * w * plane;
              const Scalar* src = g.data() + (i * total + offset) * plane;
              for (Index j = 0; j < w * plane; ++j) dst[j] += src[j];
            }
            offset += w;
          }
        }
      });
}

template <typename Scalar>
Var<Scalar> broadcast_leading(const Var<Scalar>& v, const Shape& shape) {
  const Shape& vs = v.shape();
  if (vs.size() > shape.size() || !std::equal(vs.rbegin(), vs.rend(), shape.rbegin()))
    throw ShapeError("broadcast_leading: " + shape_str(vs) + " is not a suffix of " +
                     shape_str(shape));
  const Index inner = v.value().size();
  const Index reps = shape_numel(shape) / inner;
  Tensor<Scalar> y(shape);
  for (Index r = 0; r < reps; ++r) std::copy_n(v.value().data(), inner, y.data() + r * inner);
  return record<Scalar>(std::move(y), {v},
                        [inner, reps](const Node<Scalar>&, const Tensor<Scalar>& g, auto grads) {
                          for (Index r = 0; r < reps; ++r)
                            for (Index i = 0; i < inner; ++i) (*grads[0])[i] += g[r * inner + i];
                        });
}

template <typename Scalar>
Var<Scalar> add_channel(const Var<Scalar>& x, const Var<Scalar>& v) {
  const Tensor<Scalar>& xv = x.value();
  if (xv.rank() != 4 || v.shape() != Shape{xv.dim(1)})
    throw ShapeError("add_channel: " + shape_str(v.shape()) + " vs " + shape_str(xv.shape()));
  const Index b = xv.dim(0), c = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
  Tensor<Scalar> y = xv;
  for (Index i = 0; i < b; ++i)
    for (Index j = 0; j < c; ++j) {
      Scalar* p = y.data() + (i * c + j) * plane;
      for (Index k = 0; k < plane; ++k) p[k] += v.value()[j];
    }
  return record<Scalar>(std::move(y), {x, v},
                        [b, c, plane](const Node<Scalar>&, const Tensor<Scalar>& g, auto grads) {
                          if (grads[0]) *grads[0] += g;
                          if (grads[1])
                            for (Index i = 0; i < b; ++i)
                              for (Index j = 0; j < c; ++j) {
                                const Scalar* p = g.data() + (i * c + j) * plane;
                                Scalar acc = 0;
                                for (Index k = 0; k < plane; ++k) acc += p[k];
                                (*grads[1])[j] += acc;
                              }
                        });
}

template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias) {
  const bool has_bias = bias.defined();
  const Tensor<Scalar> empty;
  Tensor<Scalar> y = linear(x.value(), weight.value(), has_bias ? bias.value() : empty);
  std::vector<Var<Scalar>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return record<Scalar>(std::move(y), inputs,
                        [has_bias](const Node<Scalar>& self, const Tensor<Scalar>& g, auto grads) {
                          auto d = linear_backward(self.input(0), self.input(1), g, has_bias);
                          if (grads[0]) *grads[0] += d.input;
                          if (grads[1]) *grads[1] += d.weight;
                          if (has_bias && grads[2]) *grads[2] += d.bias;
                        });
}

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                   const ConvSpec& spec) {
  const bool has_bias = bias.defined();
  const Tensor<Scalar> empty;
  Tensor<Scalar> y = conv2d(x.value(), weight.value(), has_bias ? bias.value() : empty, spec);
  std::vector<Var<Scalar>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return record<Scalar>(
      std::move(y), inputs,
      [spec, has_bias](const Node<Scalar>& self, const Tensor<Scalar>& g, auto grads) {
        auto d = conv2d_backward(self.input(0), self.input(1), g, spec, has_bias);
        if (grads[0]) *grads[0] += d.input;
        if (grads[1]) *grads[1] += d.weight;
        if (has_bias && grads[2]) *grads[2] += d.bias;
      });
}

template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar>& x, const Var<Scalar>& gain, const Var<Scalar>& shift) {
  return record<Scalar>(layer_norm(x.value(), gain.value(), shift.value()), {x, gain, shift},
                        [](const Node<Scalar>& self, const Tensor<Scalar>& g, auto grads) {
                          auto d = layer_norm_backward(self.input(0), self.input(1), g);
                          if (grads[0]) *grads[0] += d.input;
                          if (grads[1]) *grads[1] += d.gain;
                          if (grads[2]) *grads[2] += d.shift;
                        });
}

template <typename Scalar>
Var<Scalar> softmax(const Var<Scalar>& x, Index axis) {
  return record<Scalar>(softmax(x.value(), axis), {x},
                        [axis](const Node<Scalar>& self, const Tensor<Scalar>& g, auto grads) {
                          *grads[0] += softmax_backward(self.value, g, axis);
                        });
}

template <typename Scalar>
Var<Scalar> adaptive_avg_pool(const Var<Scalar>& x, Index grid) {
  const Index h = x.dim(2), w = x.dim(3);
  return record<Scalar>(adaptive_avg_pool(x.value(), grid), {x},
                        [h, w](const Node<Scalar>&, const Tensor<Scalar>& g, auto grads) {
                          *grads[0] += adaptive_avg_pool_backward(g, h, w);
                        });
}

template <typename Scalar>
Var<Scalar> bilinear_resize(const Var<Scalar>& x, Index out_h, Index out_w) {
  const Index h = x.dim(2), w = x.dim(3);
  return record<Scalar>(bilinear_resize(x.value(), out_h, out_w), {x},
                        [h, w](const Node<Scalar>&, const Tensor<Scalar>& g, auto grads) {
                          *grads[0] += bilinear_resize_backward(g, h, w);
                        });
}

template <typename Scalar>
Var<Scalar> row_scale(const Var<Scalar>& matrix, const Var<Scalar>& rows) {
  const Tensor<Scalar>& mv = matrix.value();
  const Tensor<Scalar>& rv = rows.value();
  if (mv.rank() != 2 || rv.rank() != 2 || rv.dim(1) != mv.dim(0))
    throw ShapeError("row_scale: matrix " + shape_str(mv.shape()) + ", rows " +
                     shape_str(rv.shape()));
  const Index b = rv.dim(0), m = mv.dim(0), n = mv.dim(1);
  Tensor<Scalar> y({b, m, n});
  for (Index i = 0; i < b; ++i)
    for (Index r = 0; r < m; ++r)
      for (Index c = 0; c < n; ++c) y[(i * m + r) * n + c] = rv[i * m + r] * mv[r * n + c];
  return record<Scalar>(std::move(y), {matrix, rows},
                        [b, m, n](const Node<Scalar>& self, const Tensor<Scalar>& g, auto grads) {
                          const Tensor<Scalar>& mv = self.input(0);
                          const Tensor<Scalar>& rv = self.input(1);
                          for (Index i = 0; i < b; ++i)
                            for (Index r = 0; r < m; ++r) {
                              Scalar acc = 0;
                              for (Index c = 0; c < n; ++c) {
                                const Scalar gv = g[(i * m + r) * n + c];
                                if (grads[0]) (*grads[0])[r * n + c] += gv * rv[i * m + r];
                                acc += gv * mv[r * n + c];
                              }
                              if (grads[1]) (*grads[1])[i * m + r] += acc;
                            }
                        });
}

template <typename Scalar>
Var<Scalar> bmm(const Var<Scalar>& a, const Var<Scalar>& b) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Map = Eigen::Map<Mat>;
  using CMap = Eigen::Map<const Mat>;
  const Tensor<Scalar>& av = a.value();
  const Tensor<Scalar>& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(1))
    throw ShapeError("bmm: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  const Index batch = av.dim(0), m = av.dim(1), k = av.dim(2), n = bv.dim(2);
  Tensor<Scalar> y({batch, m, n});
  for (Index i = 0; i < batch; ++i)
    Map(y.data() + i * m * n, m, n).noalias() =
        CMap(av.data() + i * m * k, m, k) * CMap(bv.data() + i * k * n, k, n);
  return record<Scalar>(
      std::move(y), {a, b},
      [batch, m, k, n](const Node<Scalar>& self, const Tensor<Scalar>& g, auto grads) {
        for (Index i = 0; i < batch; ++i) {
          CMap gm(g.data() + i * m * n, m, n);
          if (grads[0])
            Map(grads[0]->data() + i * m * k, m, k).noalias() +=
                gm * CMap(self.input(1).data() + i * k * n, k, n).transpose();
          if (grads[1])
            Map(grads[1]->data() + i * k * n, k, n).noalias() +=
                CMap(self.input(0).data() + i * m * k, m, k).transpose() * gm;
        }
      });
}

template <typename Scalar>
Tensor<Scalar> patchify(const Tensor<Scalar>& img, Index patch) {
  if (img.rank() != 4) throw ShapeError("patchify: expected [B,C,H,W]");
  const Index b = img.dim(0), c = img.dim(1), h = img.dim(2), w = img.dim(3);
  if (patch < 1 || h % patch || w % patch)
    throw ShapeError("patchify: " + std::to_string(h) + "x" + std::to_string(w) +
                     " is not divisible by patch size " + std::to_string(patch));
  const Index gh = h / patch, gw = w / patch, row = c * patch * patch;
  Tensor<Scalar> y({b, gh * gw, row});
  for (Index i = 0; i < b; ++i)
    for (Index ty = 0; ty < gh; ++ty)
      for (Index tx = 0; tx < gw; ++tx) {
        Scalar* dst = y.data() + (i * gh * gw + ty * gw + tx) * row;
        for (Index ch = 0; ch < c; ++ch)
          for (Index py = 0; py < patch; ++py)
            for (Index px = 0; px < patch; ++px)
              *dst++ = img[((i * c + ch) * h + ty * patch + py) * w + tx * patch + px];
      }
  return y;
}

template <typename Scalar>
Var<Scalar> patchify(const Var<Scalar>& img, Index patch) {
  const Shape in_shape = img.shape();
  return record<Scalar>(
      patchify(img.value(), patch), {img},
      [in_shape, patch](const Node<Scalar>&, const Tensor<Scalar>& g, auto grads) {
        const Index b = in_shape[0], c = in_shape[1], h = in_shape[2], w = in_shape[3];
        const Index gh = h / patch, gw = w / patch;
        const Scalar* src = g.data();
        for (Index i = 0; i < b; ++i)
          for (Index ty = 0; ty < gh; ++ty)
            for (Index tx = 0; tx < gw; ++tx)
              for (Index ch = 0; ch < c; ++ch)
                for (Index py = 0; py < patch; ++py)
                  for (Index px = 0; px < patch; ++px)
                    (*grads[0])[((i * c + ch) * h + ty * patch + py) * w + tx * patch + px] +=
                        *src++;
      });
}

#define SCRWKV_INSTANTIATE_FUNCTIONAL(S)                                                     \
  template Var<S> add(const Var<S>&, const Var<S>&);                                       \
  template Var<S> sub(const Var<S>&, const Var<S>&);                                       \
  template Var<S> mul(const Var<S>&, const Var<S>&);                                       \
  template Var<S> scale(const Var<S>&, S);                                                 \
  template Var<S> lerp(const Var<S>&, const Var<S>&, const Var<S>&);                       \
  template Var<S> div_scalar(const Var<S>&, const Var<S>&);                                \
  template Var<S> sigmoid(const Var<S>&);                                                  \
  template Var<S> gelu(const Var<S>&);                                                     \
  template Var<S> squared_relu(const Var<S>&);                                             \
  template Var<S> softplus(const Var<S>&);                                                 \
  template Var<S> exp(const Var<S>&);                                                      \
  template Var<S> tanh(const Var<S>&);                                                     \
  template Var<S> neg(const Var<S>&);                                                      \
  template Var<S> sum(const Var<S>&);                                                      \
  template Var<S> mean(const Var<S>&);                                                     \
  template Var<S> mean_axis(const Var<S>&, Index);                                         \
  template Var<S> reshape(const Var<S>&, Shape);                                           \
  template Var<S> image_to_tokens(const Var<S>&);                                          \
  template Var<S> tokens_to_image(const Var<S>&, Index, Index);                            \
  template Var<S> slice_channels(const Var<S>&, Index, Index);                             \
  template Var<S> concat_channels(const std::vector<Var<S>>&);                             \
  template Var<S> broadcast_leading(const Var<S>&, const Shape&);                          \
  template Var<S> add_channel(const Var<S>&, const Var<S>&);                               \
  template Var<S> linear(const Var<S>&, const Var<S>&, const Var<S>&);                     \
  template Var<S> conv2d(const Var<S>&, const Var<S>&, const Var<S>&, const ConvSpec&);    \
  template Var<S> layer_norm(const Var<S>&, const Var<S>&, const Var<S>&);                 \
  template Var<S> softmax(const Var<S>&, Index);                                           \
  template Var<S> adaptive_avg_pool(const Var<S>&, Index);                                 \
  template Var<S> bilinear_resize(const Var<S>&, Index, Index);                            \
  template Var<S> row_scale(const Var<S>&, const Var<S>&);                                 \
  template Var<S> bmm(const Var<S>&, const Var<S>&);                                       \
  template Var<S> patchify(const Var<S>&, Index);                                          \
  template Tensor<S> patchify(const Tensor<S>&, Index);

SCRWKV_INSTANTIATE_FUNCTIONAL(float)
SCRWKV_INSTANTIATE_FUNCTIONAL(double)

}  // namespace scrwkv

#include "scrwkv/kernels.hpp"

namespace scrwkv {
namespace {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using MatMap = Eigen::Map<RowMatrix<Scalar>>;
template <typename Scalar>
using ConstMatMap = Eigen::Map<const RowMatrix<Scalar>>;

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank)
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(s));
}

struct ConvGeometry {
  Index batch, in_c, h, w, out_c, out_h, out_w, k, d, pad;
};

template <typename Scalar>
ConvGeometry conv_geometry(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                           const ConvSpec& spec) {
  spec.validate();
  require_rank(x.shape(), 4, "conv2d input");
  require_rank(weight.shape(), 4, "conv2d weight");
  ConvGeometry g{};
  g.batch = x.dim(0);
  g.in_c = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.k = spec.kernel;
  g.d = spec.dilation;
  g.pad = spec.effective_padding();
  g.out_c = spec.groups == ConvGroups::depthwise ? g.in_c : weight.dim(0);
  const Shape expect = conv_weight_shape(spec, g.in_c, g.out_c);
  if (weight.shape() != expect)
    throw ShapeError("conv2d: weight shape " + shape_str(weight.shape()) + " but input channels " +
                     std::to_string(g.in_c) + " require " + shape_str(expect));
  g.out_h = g.h + 2 * g.pad - g.d * (g.k - 1);
  g.out_w = g.w + 2 * g.pad - g.d * (g.k - 1);
  if (g.out_h < 1 || g.out_w < 1)
    throw ShapeError("conv2d: kernel larger than padded input " + shape_str(x.shape()));
  return g;
}

// Valid output range [lo, hi) for a kernel tap so that the input index
// o - pad + tap stays inside [0, n).
inline void tap_range(Index tap, Index pad, Index n, Index out_n, Index& lo, Index& hi) {
  const Index off = tap - pad;
  lo = std::max<Index>(0, -off);
  hi = std::min<Index>(out_n, n - off);
  if (hi < lo) hi = lo;
}

template <typename Scalar>
RowMatrix<Scalar> im2col(const Scalar* img, const ConvGeometry& g) {
  RowMatrix<Scalar> col = RowMatrix<Scalar>::Zero(g.in_c * g.k * g.k, g.out_h * g.out_w);
  for (Index c = 0; c < g.in_c; ++c) {
    const Scalar* plane = img + c * g.h * g.w;
    for (Index ky = 0; ky < g.k; ++ky) {
      for (Index kx = 0; kx < g.k; ++kx) {
        Scalar* row = col.data() + ((c * g.k + ky) * g.k + kx) * g.out_h * g.out_w;
        Index ylo, yhi, xlo, xhi;
        tap_range(ky * g.d, g.pad, g.h, g.out_h, ylo, yhi);
        tap_range(kx * g.d, g.pad, g.w, g.out_w, xlo, xhi);
        for (Index oy = ylo; oy < yhi; ++oy) {
          const Scalar* src = plane + (oy - g.pad + ky * g.d) * g.w - g.pad + kx * g.d;
          Scalar* dst = row + oy * g.out_w;
          for (Index ox = xlo; ox < xhi; ++ox) dst[ox] = src[ox];
        }
      }
    }
  }
  return col;
}

template <typename Scalar>
void col2im(const RowMatrix<Scalar>& col, Scalar* img, const ConvGeometry& g) {
  for (Index c = 0; c < g.in_c; ++c) {
    Scalar* plane = img + c * g.h * g.w;
    for (Index ky = 0; ky < g.k; ++ky) {
      for (Index kx = 0; kx < g.k; ++kx) {
        const Scalar* row = col.data() + ((c * g.k + ky) * g.k + kx) * g.out_h * g.out_w;
        Index ylo, yhi, xlo, xhi;
        tap_range(ky * g.d, g.pad, g.h, g.out_h, ylo, yhi);
        tap_range(kx * g.d, g.pad, g.w, g.out_w, xlo, xhi);
        for (Index oy = ylo; oy < yhi; ++oy) {
          Scalar* dst = plane + (oy - g.pad + ky * g.d) * g.w - g.pad + kx * g.d;
          const Scalar* src = row + oy * g.out_w;
          for (Index ox = xlo; ox < xhi; ++ox) dst[ox] += src[ox];
        }
      }
    }
  }
}

struct AxisSplit {
  Index outer, axis, inner;
};

template <typename Scalar>
AxisSplit split_axis(const Tensor<Scalar>& x, Index axis) {
  if (axis < 0) axis += x.rank();
  if (axis < 0 || axis >= x.rank())
    throw ShapeError("softmax: axis out of range for " + shape_str(x.shape()));
  AxisSplit s{1, x.dim(axis), 1};
  for (Index i = 0; i < axis; ++i) s.outer *= x.dim(i);
  for (Index i = axis + 1; i < x.rank(); ++i) s.inner *= x.dim(i);
  return s;
}

template <typename Scalar, typename F>
Tensor<Scalar> map_elementwise(const Tensor<Scalar>& x, F f) {
  Tensor<Scalar> y(x.shape());
  for (Index i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return y;
}

inline Index bin_start(Index i, Index n, Index g) { return (i * n) / g; }
inline Index bin_end(Index i, Index n, Index g) { return ((i + 1) * n + g - 1) / g; }

}  // namespace

void ConvSpec::validate() const {
  if (kernel < 1 || kernel % 2 == 0)
    throw ShapeError("ConvSpec: kernel size must be odd, got " + std::to_string(kernel));
  if (dilation < 1) throw ShapeError("ConvSpec: dilation must be >= 1");
  if (groups == ConvGroups::pointwise && kernel != 1)
    throw ShapeError("ConvSpec: pointwise convolution requires kernel 1");
}

Shape conv_weight_shape(const ConvSpec& spec, Index in_channels, Index out_channels) {
  switch (spec.groups) {
    case ConvGroups::depthwise:
      return {in_channels, 1, spec.kernel, spec.kernel};
    case ConvGroups::pointwise:
      return {out_channels, in_channels, 1, 1};
    case ConvGroups::dense:
      return {out_channels, in_channels, spec.kernel, spec.kernel};
  }
  return {};
}

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, const ConvSpec& spec) {
  const ConvGeometry g = conv_geometry(x, weight, spec);
  if (!bias.empty() && bias.shape() != Shape{g.out_c})
    throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()) + ", expected [" +
                     std::to_string(g.out_c) + "]");
  Tensor<Scalar> y({g.batch, g.out_c, g.out_h, g.out_w});
  const Index in_plane = g.h * g.w;
  const Index out_plane = g.out_h * g.out_w;

  for (Index b = 0; b < g.batch; ++b) {
    const Scalar* xb = x.data() + b * g.in_c * in_plane;
    Scalar* yb = y.data() + b * g.out_c * out_plane;
    switch (spec.groups) {
      case ConvGroups::depthwise: {
        for (Index c = 0; c < g.in_c; ++c) {
          const Scalar* plane = xb + c * in_plane;
          const Scalar* ker = weight.data() + c * g.k * g.k;
          Scalar* out = yb + c * out_plane;
          for (Index ky = 0; ky < g.k; ++ky) {
            Index ylo, yhi;
            tap_range(ky * g.d, g.pad, g.h, g.out_h, ylo, yhi);
            for (Index kx = 0; kx < g.k; ++kx) {
              Index xlo, xhi;
              tap_range(kx * g.d, g.pad, g.w, g.out_w, xlo, xhi);
              const Scalar wv = ker[ky * g.k + kx];
              for (Index oy = ylo; oy < yhi; ++oy) {
                const Scalar* src = plane + (oy - g.pad + ky * g.d) * g.w - g.pad + kx * g.d;
                Scalar* dst = out + oy * g.out_w;
                for (Index ox = xlo; ox < xhi; ++ox) dst[ox] += wv * src[ox];
              }
            }
          }
        }
        break;
      }
      case ConvGroups::pointwise: {
        ConstMatMap<Scalar> xm(xb, g.in_c, in_plane);
        ConstMatMap<Scalar> wm(weight.data(), g.out_c, g.in_c);
        MatMap<Scalar> ym(yb, g.out_c, out_plane);
        ym.noalias() = wm * xm;
        break;
      }
      case ConvGroups::dense: {
        const RowMatrix<Scalar> col = im2col(xb, g);
        ConstMatMap<Scalar> wm(weight.data(), g.out_c, g.in_c * g.k * g.k);
        MatMap<Scalar> ym(yb, g.out_c, out_plane);
        ym.noalias() = wm * col;
        break;
      }
    }
    if (!bias.empty())
      for (Index c = 0; c < g.out_c; ++c)
        Eigen::Map<typename Tensor<Scalar>::Array>(yb + c * out_plane, out_plane) += bias[c];
  }
  return y;
}

template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                                  const Tensor<Scalar>& grad_out, const ConvSpec& spec,
                                  bool has_bias) {
  const ConvGeometry g = conv_geometry(x, weight, spec);
  if (grad_out.shape() != Shape{g.batch, g.out_c, g.out_h, g.out_w})
    throw ShapeError("conv2d_backward: grad shape " + shape_str(grad_out.shape()));
  ConvGrads<Scalar> out{Tensor<Scalar>(x.shape()), Tensor<Scalar>(weight.shape()),
                        has_bias ? Tensor<Scalar>({g.out_c}) : Tensor<Scalar>()};
  const Index in_plane = g.h * g.w;
  const Index out_plane = g.out_h * g.out_w;

  for (Index b = 0; b < g.batch; ++b) {
    const Scalar* xb = x.data() + b * g.in_c * in_plane;
    Scalar* dxb = out.input.data() + b * g.in_c * in_plane;
    const Scalar* gb = grad_out.data() + b * g.out_c * out_plane;
    switch (spec.groups) {
      case ConvGroups::depthwise: {
        for (Index c = 0; c < g.in_c; ++c) {
          const Scalar* plane = xb + c * in_plane;
          Scalar* dplane = dxb + c * in_plane;
          const Scalar* ker = weight.data() + c * g.k * g.k;
          Scalar* dker = out.weight.data() + c * g.k * g.k;
          const Scalar* gp = gb + c * out_plane;
          for (Index ky = 0; ky < g.k; ++ky) {
            Index ylo, yhi;
            tap_range(ky * g.d, g.pad, g.h, g.out_h, ylo, yhi);
            for (Index kx = 0; kx < g.k; ++kx) {
              Index xlo, xhi;
              tap_range(kx * g.d, g.pad, g.w, g.out_w, xlo, xhi);
              const Scalar wv = ker[ky * g.k + kx];
              Scalar acc = 0;
              for (Index oy = ylo; oy < yhi; ++oy) {
                const Index row = (oy - g.pad + ky * g.d) * g.w - g.pad + kx * g.d;
                const Scalar* src = plane + row;
                Scalar* dsrc = dplane + row;
                const Scalar* gr = gp + oy * g.out_w;
                for (Index ox = xlo; ox < xhi; ++ox) {
                  acc += gr[ox] * src[ox];
                  dsrc[ox] += wv * gr[ox];
                }
              }
              dker[ky * g.k + kx] += acc;
            }
          }
        }
        break;
      }
      case ConvGroups::pointwise: {
        ConstMatMap<Scalar> xm(xb, g.in_c, in_plane);
        ConstMatMap<Scalar> wm(weight.data(), g.out_c, g.in_c);
        ConstMatMap<Scalar> gm(gb, g.out_c, out_plane);
        MatMap<Scalar>(dxb, g.in_c, in_plane).noalias() = wm.transpose() * gm;
        MatMap<Scalar>(out.weight.data(), g.out_c, g.in_c).noalias() += gm * xm.transpose();
        break;
      }
      case ConvGroups::dense: {
        const RowMatrix<Scalar> col = im2col(xb, g);
        ConstMatMap<Scalar> wm(weight.data(), g.out_c, g.in_c * g.k * g.k);
        ConstMatMap<Scalar> gm(gb, g.out_c, out_plane);
        MatMap<Scalar>(out.weight.data(), g.out_c, g.in_c * g.k * g.k).noalias() +=
            gm * col.transpose();
        const RowMatrix<Scalar> dcol = wm.transpose() * gm;
        col2im(dcol, dxb, g);
        break;
      }
    }
    if (has_bias)
      for (Index c = 0; c < g.out_c; ++c)
        out.bias[c] += Eigen::Map<const typename Tensor<Scalar>::Array>(gb + c * out_plane,
                                                                        out_plane)
                           .sum();
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias) {
  require_rank(weight.shape(), 2, "linear weight");
  const Index in_c = weight.dim(1), out_c = weight.dim(0);
  if (x.dim(-1) != in_c)
    throw ShapeError("linear: input last dim " + std::to_string(x.dim(-1)) + " != weight in " +
                     std::to_string(in_c));
  if (!bias.empty() && bias.shape() != Shape{out_c})
    throw ShapeError("linear: bias shape " + shape_str(bias.shape()));
  const Index rows = x.size() / in_c;
  Shape out_shape = x.shape();
  out_shape.back() = out_c;
  Tensor<Scalar> y(out_shape);
  ConstMatMap<Scalar> xm(x.data(), rows, in_c);
  ConstMatMap<Scalar> wm(weight.data(), out_c, in_c);
  MatMap<Scalar> ym(y.data(), rows, out_c);
  ym.noalias() = xm * wm.transpose();
  if (!bias.empty())
    ym.rowwise() += Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(bias.data(), out_c);
  return y;
}

template <typename Scalar>
ConvGrads<Scalar> linear_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                                  const Tensor<Scalar>& grad_out, bool has_bias) {
  const Index in_c = weight.dim(1), out_c = weight.dim(0);
  const Index rows = x.size() / in_c;
  ConvGrads<Scalar> out{Tensor<Scalar>(x.shape()), Tensor<Scalar>(weight.shape()),
                        has_bias ? Tensor<Scalar>({out_c}) : Tensor<Scalar>()};
  ConstMatMap<Scalar> xm(x.data(), rows, in_c);
  ConstMatMap<Scalar> wm(weight.data(), out_c, in_c);
  ConstMatMap<Scalar> gm(grad_out.data(), rows, out_c);
  MatMap<Scalar>(out.input.data(), rows, in_c).noalias() = gm * wm;
  MatMap<Scalar>(out.weight.data(), out_c, in_c).noalias() = gm.transpose() * xm;
  if (has_bias)
    Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(out.bias.data(), out_c) =
        gm.colwise().sum();
  return out;
}

template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x, Index axis) {
  const AxisSplit s = split_axis(x, axis);
  Tensor<Scalar> y(x.shape());
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      const Index base = o * s.axis * s.inner + i;
      Scalar mx = x[base];
      for (Index a = 1; a < s.axis; ++a) mx = std::max(mx, x[base + a * s.inner]);
      Scalar sum = 0;
      for (Index a = 0; a < s.axis; ++a) {
        const Scalar e = std::exp(x[base + a * s.inner] - mx);
        y[base + a * s.inner] = e;
        sum += e;
      }
      for (Index a = 0; a < s.axis; ++a) y[base + a * s.inner] /= sum;
    }
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> softmax_backward(const Tensor<Scalar>& y, const Tensor<Scalar>& grad_y,
                                Index axis) {
  const AxisSplit s = split_axis(y, axis);
  Tensor<Scalar> gx(y.shape());
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      const Index base = o * s.axis * s.inner + i;
      Scalar dot = 0;
      for (Index a = 0; a < s.axis; ++a) dot += y[base + a * s.inner] * grad_y[base + a * s.inner];
      for (Index a = 0; a < s.axis; ++a) {
        const Index j = base + a * s.inner;
        gx[j] = y[j] * (grad_y[j] - dot);
      }
    }
  }
  return gx;
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
  return map_elementwise(x, [](Scalar v) { return sigmoid(v); });
}
template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& x) {
  return map_elementwise(x, [](Scalar v) { return gelu(v); });
}
template <typename Scalar>
Tensor<Scalar> squared_relu(const Tensor<Scalar>& x) {
  return map_elementwise(x, [](Scalar v) { return squared_relu(v); });
}
template <typename Scalar>
Tensor<Scalar> softplus(const Tensor<Scalar>& x) {
  return map_elementwise(x, [](Scalar v) { return softplus(v); });
}

template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gain,
                          const Tensor<Scalar>& shift) {
  const Index c = x.dim(-1);
  if (gain.shape() != Shape{c} || shift.shape() != Shape{c})
    throw ShapeError("layer_norm: gain/shift must be [" + std::to_string(c) + "]");
  const Index rows = x.size() / c;
  Tensor<Scalar> y(x.shape());
  for (Index r = 0; r < rows; ++r) {
    const Scalar* xr = x.data() + r * c;
    Scalar* yr = y.data() + r * c;
    Scalar mean = 0;
    for (Index j = 0; j < c; ++j) mean += xr[j];
    mean /= static_cast<Scalar>(c);
    Scalar var = 0;
    for (Index j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<Scalar>(c);
    const Scalar rstd = Scalar(1) / std::sqrt(var + Scalar(kLayerNormEps));
    for (Index j = 0; j < c; ++j) yr[j] = (xr[j] - mean) * rstd * gain[j] + shift[j];
  }
  return y;
}

template <typename Scalar>
LayerNormGrads<Scalar> layer_norm_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& gain,
                                           const Tensor<Scalar>& grad_out) {
  const Index c = x.dim(-1);
  const Index rows = x.size() / c;
  LayerNormGrads<Scalar> g{Tensor<Scalar>(x.shape()), Tensor<Scalar>({c}), Tensor<Scalar>({c})};
  std::vector<Scalar> xhat(static_cast<std::size_t>(c)), gh(static_cast<std::size_t>(c));
  for (Index r = 0; r < rows; ++r) {
    const Scalar* xr = x.data() + r * c;
    const Scalar* gr = grad_out.data() + r * c;
    Scalar* dxr = g.input.data() + r * c;
    Scalar mean = 0;
    for (Index j = 0; j < c; ++j) mean += xr[j];
    mean /= static_cast<Scalar>(c);
    Scalar var = 0;
    for (Index j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<Scalar>(c);
    const Scalar rstd = Scalar(1) / std::sqrt(var + Scalar(kLayerNormEps));
    Scalar mean_gh = 0, mean_gh_xhat = 0;
    for (Index j = 0; j < c; ++j) {
      const auto u = static_cast<std::size_t>(j);
      xhat[u] = (xr[j] - mean) * rstd;
      gh[u] = gr[j] * gain[j];
      g.gain[j] += gr[j] * xhat[u];
      g.shift[j] += gr[j];
      mean_gh += gh[u];
      mean_gh_xhat += gh[u] * xhat[u];
    }
    mean_gh /= static_cast<Scalar>(c);
    mean_gh_xhat /= static_cast<Scalar>(c);
    for (Index j = 0; j < c; ++j) {
      const auto u = static_cast<std::size_t>(j);
      dxr[j] = rstd * (gh[u] - mean_gh - xhat[u] * mean_gh_xhat);
    }
  }
  return g;
}

template <typename Scalar>
Tensor<Scalar> bilinear_resize(const Tensor<Scalar>& x, Index out_h, Index out_w) {
  require_rank(x.shape(), 4, "bilinear_resize");
  if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize: target dims must be >= 1");
  const Index planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<Scalar> y({x.dim(0), x.dim(1), out_h, out_w});
  std::vector<BilinearTap<Scalar>> taps;
  taps.reserve(static_cast<std::size_t>(out_h * out_w));
  for (Index oy = 0; oy < out_h; ++oy)
    for (Index ox = 0; ox < out_w; ++ox)
      taps.emplace_back(resize_source_coord<Scalar>(oy, h, out_h),
                        resize_source_coord<Scalar>(ox, w, out_w), h, w);
  for (Index p = 0; p < planes; ++p) {
    const Scalar* plane = x.data() + p * h * w;
    Scalar* out = y.data() + p * out_h * out_w;
    for (std::size_t t = 0; t < taps.size(); ++t) out[t] = taps[t].sample(plane, w);
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> bilinear_resize_backward(const Tensor<Scalar>& grad_out, Index in_h, Index in_w) {
  require_rank(grad_out.shape(), 4, "bilinear_resize_backward");
  const Index planes = grad_out.dim(0) * grad_out.dim(1);
  const Index out_h = grad_out.dim(2), out_w = grad_out.dim(3);
  Tensor<Scalar> gx({grad_out.dim(0), grad_out.dim(1), in_h, in_w});
  for (Index oy = 0; oy < out_h; ++oy) {
    for (Index ox = 0; ox < out_w; ++ox) {
      const BilinearTap<Scalar> tap(resize_source_coord<Scalar>(oy, in_h, out_h),
                                    resize_source_coord<Scalar>(ox, in_w, out_w), in_h, in_w);
      for (Index p = 0; p < planes; ++p)
        tap.scatter(gx.data() + p * in_h * in_w, in_w,
                    grad_out[(p * out_h + oy) * out_w + ox]);
    }
  }
  return gx;
}

template <typename Scalar>
Tensor<Scalar> adaptive_avg_pool(const Tensor<Scalar>& x, Index grid) {
  require_rank(x.shape(), 4, "adaptive_avg_pool");
  if (grid < 1) throw ShapeError("adaptive_avg_pool: grid must be >= 1");
  const Index planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<Scalar> y({x.dim(0), x.dim(1), grid, grid});
  for (Index p = 0; p < planes; ++p) {
    const Scalar* plane = x.data() + p * h * w;
    for (Index gy = 0; gy < grid; ++gy) {
      const Index y0 = bin_start(gy, h, grid), y1 = bin_end(gy, h, grid);
      for (Index gx = 0; gx < grid; ++gx) {
        const Index x0 = bin_start(gx, w, grid), x1 = bin_end(gx, w, grid);
        Scalar sum = 0;
        for (Index yy = y0; yy < y1; ++yy)
          for (Index xx = x0; xx < x1; ++xx) sum += plane[yy * w + xx];
        y[(p * grid + gy) * grid + gx] = sum / static_cast<Scalar>((y1 - y0) * (x1 - x0));
      }
    }
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> adaptive_avg_pool_backward(const Tensor<Scalar>& grad_out, Index in_h,
                                          Index in_w) {
  const Index planes = grad_out.dim(0) * grad_out.dim(1), grid = grad_out.dim(2);
  Tensor<Scalar> gx({grad_out.dim(0), grad_out.dim(1), in_h, in_w});
  for (Index p = 0; p < planes; ++p) {
    Scalar* plane = gx.data() + p * in_h * in_w;
    for (Index gy = 0; gy < grid; ++gy) {
      const Index y0 = bin_start(gy, in_h, grid), y1 = bin_end(gy, in_h, grid);
      for (Index gxi = 0; gxi < grid; ++gxi) {
        const Index x0 = bin_start(gxi, in_w, grid), x1 = bin_end(gxi, in_w, grid);
        const Scalar g = grad_out[(p * grid + gy) * grid + gxi] /
                         static_cast<Scalar>((y1 - y0) * (x1 - x0));
        for (Index yy = y0; yy < y1; ++yy)
          for (Index xx = x0; xx < x1; ++xx) plane[yy * in_w + xx] += g;
      }
    }
  }
  return gx;
}

template <typename Scalar>
Tensor<Scalar> image_to_tokens(const Tensor<Scalar>& x) {
  require_rank(x.shape(), 4, "image_to_tokens");
  const Index b = x.dim(0), c = x.dim(1), n = x.dim(2) * x.dim(3);
  Tensor<Scalar> y({b, n, c});
  for (Index i = 0; i < b; ++i)
    MatMap<Scalar>(y.data() + i * n * c, n, c) =
        ConstMatMap<Scalar>(x.data() + i * c * n, c, n).transpose();
  return y;
}

template <typename Scalar>
Tensor<Scalar> tokens_to_image(const Tensor<Scalar>& x, Index h, Index w) {
  require_rank(x.shape(), 3, "tokens_to_image");
  const Index b = x.dim(0), n = x.dim(1), c = x.dim(2);
  if (n != h * w)
    throw ShapeError("tokens_to_image: " + std::to_string(n) + " tokens cannot form " +
                     std::to_string(h) + "x" + std::to_string(w));
  Tensor<Scalar> y({b, c, h, w});
  for (Index i = 0; i < b; ++i)
    MatMap<Scalar>(y.data() + i * c * n, c, n) =
        ConstMatMap<Scalar>(x.data() + i * n * c, n, c).transpose();
  return y;
}

#define SCRWKV_INSTANTIATE_KERNELS(S)                                                            \
  template Tensor<S> conv2d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,              \
                            const ConvSpec&);                                                  \
  template ConvGrads<S> conv2d_backward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,  \
                                        const ConvSpec&, bool);                                \
  template Tensor<S> linear(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);             \
  template ConvGrads<S> linear_backward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,  \
                                        bool);                                                 \
  template Tensor<S> softmax(const Tensor<S>&, Index);                                         \
  template Tensor<S> softmax_backward(const Tensor<S>&, const Tensor<S>&, Index);              \
  template Tensor<S> sigmoid(const Tensor<S>&);                                                \
  template Tensor<S> gelu(const Tensor<S>&);                                                   \
  template Tensor<S> squared_relu(const Tensor<S>&);                                           \
  template Tensor<S> softplus(const Tensor<S>&);                                               \
  template Tensor<S> layer_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);         \
  template LayerNormGrads<S> layer_norm_backward(const Tensor<S>&, const Tensor<S>&,           \
                                                 const Tensor<S>&);                            \
  template Tensor<S> bilinear_resize(const Tensor<S>&, Index, Index);                          \
  template Tensor<S> bilinear_resize_backward(const Tensor<S>&, Index, Index);                 \
  template Tensor<S> adaptive_avg_pool(const Tensor<S>&, Index);                               \
  template Tensor<S> adaptive_avg_pool_backward(const Tensor<S>&, Index, Index);               \
  template Tensor<S> image_to_tokens(const Tensor<S>&);                                        \
  template Tensor<S> tokens_to_image(const Tensor<S>&, Index, Index);

SCRWKV_INSTANTIATE_KERNELS(float)
SCRWKV_INSTANTIATE_KERNELS(double)

}  // namespace scrwkv

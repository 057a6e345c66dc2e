#include "scrwkv/gbst.hpp"

namespace scrwkv {
namespace {

void check_input(const Shape& shape, const GbstSpec& spec) {
  spec.validate();
  if (shape.size() != 3)
    throw ShapeError("gbst: expected [B,N,C] tokens, got " + shape_str(shape));
  if (shape[1] != spec.height * spec.width)
    throw ShapeError("gbst: " + std::to_string(shape[1]) + " tokens but grid is " +
                     std::to_string(spec.height) + "x" + std::to_string(spec.width));
  if (shape[2] != spec.channels)
    throw ShapeError("gbst: " + std::to_string(shape[2]) + " channels but spec has " +
                     std::to_string(spec.channels));
}

// out(h, w) = in(h - sign*dy, w - sign*dx) per group; sign = -1 gives the adjoint.
template <typename Scalar>
Tensor<Scalar> shift_groups(const Tensor<Scalar>& x, const GbstSpec& spec, Index sign) {
  check_input(x.shape(), spec);
  Tensor<Scalar> y(x.shape());
  const Index batch = x.dim(0), h = spec.height, w = spec.width, c = spec.channels;
  const Index s = spec.shift;
  for (const ShiftGroup& g : gbst_groups(c)) {
    const Index dy = sign * g.dy(s), dx = sign * g.dx(s);
    const Index len = g.end - g.begin;
    for (Index b = 0; b < batch; ++b)
      for (Index oy = 0; oy < h; ++oy) {
        const Index iy = oy - dy;
        if (iy < 0 || iy >= h) continue;
        for (Index ox = 0; ox < w; ++ox) {
          const Index ix = ox - dx;
          if (ix < 0 || ix >= w) continue;
          std::copy_n(x.data() + ((b * h + iy) * w + ix) * c + g.begin, len,
                      y.data() + ((b * h + oy) * w + ox) * c + g.begin);
        }
      }
  }
  return y;
}

}  // namespace

void GbstSpec::validate() const {
  if (channels < 8)
    throw ShapeError("GbstSpec: need at least 8 channels so every quarter group is non-empty, got " +
                     std::to_string(channels));
  if (height < 1 || width < 1) throw ShapeError("GbstSpec: grid dims must be >= 1");
  if (shift < 0 || shift >= std::min(height, width))
    throw ShapeError("GbstSpec: shift " + std::to_string(shift) + " must lie in [0, " +
                     std::to_string(std::min(height, width)) + ")");
}

Index ShiftGroup::dy(Index s) const {
  switch (direction) {
    case ShiftDirection::down: return s;
    case ShiftDirection::up: return -s;
    default: return 0;
  }
}

Index ShiftGroup::dx(Index s) const {
  switch (direction) {
    case ShiftDirection::right: return s;
    case ShiftDirection::left: return -s;
    default: return 0;
  }
}

std::vector<ShiftGroup> gbst_groups(Index channels) {
  using D = ShiftDirection;
  const Index half = channels / 2;
  const Index quarter = half / 4;
  const Index inner_quarter = (channels - half) / 4;
  std::vector<ShiftGroup> groups;
  const D outward[4] = {D::right, D::left, D::down, D::up};
  const D inward[4] = {D::left, D::right, D::up, D::down};
  for (Index k = 0; k < 4; ++k)
    groups.push_back({k * quarter, k == 3 ? half : (k + 1) * quarter, outward[k], true});
  for (Index k = 0; k < 4; ++k)
    groups.push_back({half + k * inner_quarter, k == 3 ? channels : half + (k + 1) * inner_quarter,
                      inward[k], false});
  return groups;
}

template <typename Scalar>
Tensor<Scalar> gbst(const Tensor<Scalar>& x, const GbstSpec& spec) {
  return shift_groups(x, spec, 1);
}

template <typename Scalar>
Tensor<Scalar> gbst_adjoint(const Tensor<Scalar>& g, const GbstSpec& spec) {
  return shift_groups(g, spec, -1);
}

template <typename Scalar>
Var<Scalar> gbst(const Var<Scalar>& x, const GbstSpec& spec) {
  return record<Scalar>(gbst(x.value(), spec), {x},
                        [spec](const Node<Scalar>&, const Tensor<Scalar>& g, auto grads) {
                          *grads[0] += gbst_adjoint(g, spec);
                        });
}

template Tensor<float> gbst(const Tensor<float>&, const GbstSpec&);
template Tensor<double> gbst(const Tensor<double>&, const GbstSpec&);
template Tensor<float> gbst_adjoint(const Tensor<float>&, const GbstSpec&);
template Tensor<double> gbst_adjoint(const Tensor<double>&, const GbstSpec&);
template Var<float> gbst(const Var<float>&, const GbstSpec&);
template Var<double> gbst(const Var<double>&, const GbstSpec&);

}  // namespace scrwkv

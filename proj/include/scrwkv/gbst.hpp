#pragma once

#include "scrwkv/autodiff.hpp"

namespace scrwkv {

/// Four-direction channel-group shift on a token grid. The first half of the
/// channels (outward stream) moves right, left, down, up by quarter; the
/// second half (inward stream) moves left, right, up, down. The last quarter
/// of each half absorbs the remainder channels. Vacated positions are zero.
struct GbstSpec {
  Index shift = 1;
  Index height = 0;
  Index width = 0;
  Index channels = 0;

  void validate() const;
};

enum class ShiftDirection { right, left, down, up };

struct ShiftGroup {
  Index begin = 0, end = 0;  // channel range [begin, end)
  ShiftDirection direction = ShiftDirection::right;
  bool outward = true;

  // Displacement applied to content: output(h, w) = input(h - dy, w - dx).
  Index dy(Index s) const;
  Index dx(Index s) const;
};

// The eight channel groups in order (four outward, four inward).
std::vector<ShiftGroup> gbst_groups(Index channels);

template <typename Scalar>
Tensor<Scalar> gbst(const Tensor<Scalar>& x, const GbstSpec& spec);

// Adjoint of gbst: each group shifted back by the opposite displacement.
template <typename Scalar>
Tensor<Scalar> gbst_adjoint(const Tensor<Scalar>& g, const GbstSpec& spec);

template <typename Scalar>
Var<Scalar> gbst(const Var<Scalar>& x, const GbstSpec& spec);

}  // namespace scrwkv

#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "scrwkv/autodiff.hpp"

namespace scrwkv {

struct GradCheckReport {
  std::string op;
  double max_rel_error = 0;
  double tolerance = 0;
  bool pass = false;
  Index coords_checked = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  Index min_coords = 64;  // checks all coordinates when there are fewer
  std::uint64_t seed = 0x5eed;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences (f(x+h e) - f(x-h e)) / 2h on a random coordinate subsample
/// drawn across all `leaves`. Relative error uses the denominator
/// max(|analytic|, |numeric|, 1e-8). Throws std::runtime_error if two
/// evaluations of `loss` disagree.
GradCheckReport finite_diff_check(const std::string& op, const std::function<Var<double>()>& loss,
                                  std::vector<Var<double>> leaves,
                                  const GradCheckOptions& options = {});

// Single-input convenience form.
GradCheckReport finite_diff_check(const std::string& op,
                                  const std::function<Var<double>(const Var<double>&)>& f,
                                  const Tensor<double>& x, const GradCheckOptions& options = {});

}  // namespace scrwkv

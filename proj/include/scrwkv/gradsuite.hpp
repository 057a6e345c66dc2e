#pragma once

#include "scrwkv/gradcheck.hpp"

namespace scrwkv {

// Names accepted by run_gradient_suite, in execution order.
const std::vector<std::string>& gradient_suite_modules();

/// Finite-difference checks at 64-bit on tiny shapes for the differentiable
/// operators and the toy network. `module` is one name from
/// gradient_suite_modules() or "all". Unknown names throw ShapeError.
std::vector<GradCheckReport> run_gradient_suite(const std::string& module = "all",
                                                const GradCheckOptions& options = {});

}  // namespace scrwkv

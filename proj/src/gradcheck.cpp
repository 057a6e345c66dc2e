#include "scrwkv/gradcheck.hpp"

#include <numeric>

namespace scrwkv {

GradCheckReport finite_diff_check(const std::string& op, const std::function<Var<double>()>& loss,
                                  std::vector<Var<double>> leaves,
                                  const GradCheckOptions& options) {
  GradCheckReport report{op, 0.0, options.tolerance, false, 0};
  for (const auto& leaf : leaves)
    if (!leaf.requires_grad() || !leaf.node()->is_leaf())
      throw std::invalid_argument("finite_diff_check: '" + op +
                                  "' got a leaf that does not require gradients");

  const Var<double> out = loss();
  const Gradients<double> grads = backward(out);

  auto evaluate = [&] {
    NoGradGuard guard;
    return loss().value().item();
  };
  const double f0 = evaluate();
  if (f0 != evaluate() || f0 != out.value().item())
    throw std::runtime_error("finite_diff_check: '" + op + "' is not deterministic");

  std::vector<std::pair<std::size_t, Index>> coords;
  for (std::size_t l = 0; l < leaves.size(); ++l)
    for (Index i = 0; i < leaves[l].value().size(); ++i) coords.emplace_back(l, i);
  if (static_cast<Index>(coords.size()) > options.min_coords) {
    Rng rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(static_cast<std::size_t>(options.min_coords));
  }

  std::vector<Tensor<double>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& leaf : leaves) analytic.push_back(grads[leaf]);

  for (const auto& [l, i] : coords) {
    double& slot = leaves[l].mutable_value()[i];
    const double saved = slot;
    slot = saved + options.step;
    const double plus = evaluate();
    slot = saved - options.step;
    const double minus = evaluate();
    slot = saved;
    const double numeric = (plus - minus) / (2.0 * options.step);
    const double a = analytic[l][i];
    const double den = std::max({std::abs(a), std::abs(numeric), 1e-8});
    report.max_rel_error = std::max(report.max_rel_error, std::abs(a - numeric) / den);
  }
  report.coords_checked = static_cast<Index>(coords.size());
  report.pass = report.max_rel_error < report.tolerance;
  return report;
}

GradCheckReport finite_diff_check(const std::string& op,
                                  const std::function<Var<double>(const Var<double>&)>& f,
                                  const Tensor<double>& x, const GradCheckOptions& options) {
  Var<double> leaf = Var<double>::parameter(x, "x");
  return finite_diff_check(
      op, [&] { return f(leaf); }, {leaf}, options);
}

}  // namespace scrwkv

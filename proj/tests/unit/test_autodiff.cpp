#include <doctest.h>

#include "scrwkv/functional.hpp"
#include "scrwkv/gradcheck.hpp"

using namespace scrwkv;
using T = Tensor<double>;
using V = Var<double>;

TEST_CASE("gradient of sum is all ones") {
  Rng rng(1);
  V x = V::parameter(uniform<double>({2, 3, 4}, rng), "x");
  const auto g = backward(sum(x));
  CHECK(g[x] == T::constant({2, 3, 4}, 1.0));
}

TEST_CASE("gradient of sum(x*x) is 2x") {
  Rng rng(2);
  V x = V::parameter(uniform<double>({5}, rng), "x");
  const auto g = backward(sum(mul(x, x)));
  T two_x = x.value();
  two_x *= 2.0;
  CHECK(max_abs_diff(g[x], two_x) < 1e-15);
}

TEST_CASE("unreached parameters get zero gradients") {
  V a = V::parameter(T::constant({3}, 1.0), "a");
  V b = V::parameter(T::constant({2, 2}, 1.0), "b");
  const auto g = backward(sum(a));
  CHECK_FALSE(g.contains(b));
  CHECK(g[b] == T({2, 2}));
}

TEST_CASE("backward rejects a non-scalar loss") {
  V x = V::parameter(T({3}), "x");
  CHECK_THROWS_AS(backward(sigmoid(x)), ShapeError);
}

TEST_CASE("no-grad mode records nothing") {
  V x = V::parameter(T::constant({2}, 1.0), "x");
  NoGradGuard guard;
  const V y = sigmoid(x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("shared subexpressions accumulate") {
  V x = V::parameter(T({1}, {3.0}), "x");
  const V y = mul(x, x);
  const V z = add(y, mul(y, x));  // x^2 + x^3
  const auto g = backward(sum(z));
  CHECK(g[x][0] == doctest::Approx(2 * 3.0 + 3 * 9.0));
}

TEST_CASE("two-layer composition matches central differences") {
  Rng rng(3);
  V x = V::parameter(uniform<double>({1, 4, 4, 4}, rng), "x");
  V w1 = V::parameter(uniform<double>({4, 1, 3, 3}, rng), "w1");
  V w2 = V::parameter(uniform<double>({3, 4, 1, 1}, rng), "w2");
  V b2 = V::parameter(uniform<double>({3}, rng), "b2");
  auto f = [&] {
    return mean(conv2d(gelu(conv2d(x, w1, V(), ConvSpec::depthwise(3))), w2, b2,
                       ConvSpec::pointwise()));
  };
  GradCheckOptions opt;
  opt.min_coords = 1000;
  const auto r = finite_diff_check("two-layer", f, {x, w1, w2, b2}, opt);
  CHECK(r.pass);
  CHECK(r.max_rel_error < 1e-4);
  CHECK(r.coords_checked == 64 + 36 + 12 + 3);
}

TEST_CASE("finite_diff_check on simple functions") {
  Rng rng(4);
  const T x = uniform<double>({7}, rng);
  const auto plain = finite_diff_check("sum", [](const V& v) { return sum(v); }, x);
  CHECK(plain.max_rel_error < 1e-9);
  CHECK(plain.pass);
  const auto sig = finite_diff_check("sigmoid(sum)", [](const V& v) { return sigmoid(sum(v)); }, x);
  CHECK(sig.max_rel_error < 1e-6);
  CHECK(sig.pass == (sig.max_rel_error < sig.tolerance));
}

TEST_CASE("finite_diff_check rejects a nondeterministic function") {
  int calls = 0;
  V x = V::parameter(T::constant({3}, 0.5), "x");
  auto f = [&] {
    ++calls;
    return scale(sum(x), 1.0 + 1e-3 * calls);
  };
  CHECK_THROWS_AS(finite_diff_check("noisy", f, {x}), std::runtime_error);
}

TEST_CASE("gradients are linear in the loss") {
  Rng rng(5);
  V p = V::parameter(uniform<double>({3, 4}, rng), "p");
  const V x(uniform<double>({2, 4}, rng));
  const double a = 0.7, b = -1.9;
  auto f = [&] { return sum(gelu(linear(x, p, V()))); };
  auto g = [&] { return mean(softmax(linear(x, p, V()), 1)); };
  const T gf = backward(f())[p], gg = backward(g())[p];
  const T both = backward(add(scale(f(), a), scale(g(), b)))[p];
  T expect = gf;
  expect *= a;
  T tmp = gg;
  tmp *= b;
  expect += tmp;
  CHECK(max_abs_diff(both, expect) < 1e-12);
}

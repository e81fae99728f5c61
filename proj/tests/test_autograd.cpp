#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ivgan/autograd.hpp"
#include "testutil.hpp"

using namespace ivgan;
using Td = Tensor<double>;
using Vd = Var<double>;

TEST_CASE("grad of x^2 at 3 is 6") {
  Vd x = Vd::leaf(Td::scalar(3));
  Vd y = square(x);
  auto g = grad(y, {x});
  CHECK(g.grads[0].item() == doctest::Approx(6));
  CHECK_FALSE(g.unreachable[0]);
}

TEST_CASE("constant output has zero grad with warning flag") {
  Vd x = Vd::leaf(Td::scalar(3));
  Vd c = Vd::constant(Td::scalar(7));
  Vd y = square(c);
  auto g = grad(y, {x});
  CHECK(g.unreachable[0]);
  CHECK(g.grads[0].item() == 0);
}

TEST_CASE("non-scalar output is an error") {
  Vd x = Vd::leaf(Td({2}, {1, 2}));
  CHECK_THROWS_AS(grad(square(x), {x}), std::invalid_argument);
}

TEST_CASE("analytic double backward through a norm penalty") {
  // f(x) = 0.5 ||x||^2, x = [3,4] -> grad f = x = [3,4]
  // p = (||grad f|| - 1)^2 = (5-1)^2 = 16
  // dp/dx = 2 (||x|| - 1) x / ||x|| = [4.8, 6.4]
  Vd x = Vd::leaf(Td({2}, {3, 4}));
  Vd f = scale(sum_all(square(x)), 0.5);
  auto gf = grad(f, {x}, /*create_graph=*/true);
  Vd n = sqrt(sum_all(square(gf.grads[0])));
  Vd p = square(add_scalar(n, -1.0));
  CHECK(p.item() == doctest::Approx(16));

  auto gp = grad(p, {x});
  CHECK(gp.grads[0].value()[0] == doctest::Approx(4.8));
  CHECK(gp.grads[0].value()[1] == doctest::Approx(6.4));

  // cross-check against central finite differences of p(x)
  auto pf = [](const Td& xv) {
    double n2 = 0;
    for (int64_t i = 0; i < xv.numel(); ++i) n2 += xv[i] * xv[i];
    double nn = std::sqrt(n2);  // grad of 0.5||x||^2 is x itself
    return (nn - 1) * (nn - 1);
  };
  Td fd = testutil::finite_diff(pf, x.value());
  CHECK(testutil::max_rel_err(gp.grads[0].value(), fd) < 1e-6);
}

TEST_CASE("matmul backward matches finite differences") {
  Td av = rng_fill<double>(Dist::Normal01, {3, 3}, 5);
  Td bv = rng_fill<double>(Dist::Normal01, {3, 3}, 6);
  Td wv = rng_fill<double>(Dist::Normal01, {3, 3}, 7);
  Vd a = Vd::leaf(av), b = Vd::leaf(bv);
  Vd w = Vd::constant(wv);
  Vd loss = sum_all(mul(matmul(a, b), w));
  auto g = grad(loss, {a, b});

  auto fa = [&](const Td& x) {
    return sum_all(mul(matmul(x, bv), wv));
  };
  auto fb = [&](const Td& x) {
    return sum_all(mul(matmul(av, x), wv));
  };
  CHECK(testutil::max_rel_err(g.grads[0].value(),
                              testutil::finite_diff(fa, av)) < 1e-4);
  CHECK(testutil::max_rel_err(g.grads[1].value(),
                              testutil::finite_diff(fb, bv)) < 1e-4);
}

TEST_CASE("relu subgradient at 0 is 0, tanh derivative at 0 is 1") {
  Vd x = Vd::leaf(Td({3}, {-1, 0, 2}));
  auto g = grad(sum_all(relu(x)), {x});
  CHECK(g.grads[0].value()[0] == 0);
  CHECK(g.grads[0].value()[1] == 0);
  CHECK(g.grads[0].value()[2] == 1);

  Vd z = Vd::leaf(Td::scalar(0));
  auto gt = grad(tanh(z), {z});
  CHECK(gt.grads[0].item() == doctest::Approx(1));

  Vd l = Vd::leaf(Td({2}, {0, -3}));
  auto gl = grad(sum_all(leaky_relu(l, 0.2)), {l});
  CHECK(gl.grads[0].value()[0] == doctest::Approx(0.2));  // negative-side slope
  CHECK(gl.grads[0].value()[1] == doctest::Approx(0.2));
}

TEST_CASE("grad is linear over sums") {
  Td xv = rng_fill<double>(Dist::Normal01, {4}, 9);
  Vd x = Vd::leaf(xv);
  Vd f1 = sum_all(square(x));
  Vd f2 = sum_all(tanh(x));
  auto gsum = grad(add(f1, f2), {x});
  auto g1 = grad(f1, {x});
  auto g2 = grad(f2, {x});
  for (int64_t i = 0; i < 4; ++i)
    CHECK(gsum.grads[0].value()[i] ==
          doctest::Approx(g1.grads[0].value()[i] + g2.grads[0].value()[i]));
}

TEST_CASE("grad twice on the same graph is stable") {
  Vd x = Vd::leaf(Td({3}, {1, 2, 3}));
  Vd y = sum_all(mul(square(x), tanh(x)));
  auto g1 = grad(y, {x});
  auto g2 = grad(y, {x});
  for (int64_t i = 0; i < 3; ++i)
    CHECK(g1.grads[0].value()[i] == g2.grads[0].value()[i]);
}

TEST_CASE("mixing tapes is an error") {
  Tape<double> t1, t2;
  Vd a = t1.leaf(Td::scalar(1));
  Vd b = t2.leaf(Td::scalar(2));
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
  // constants are compatible with any tape
  CHECK_NOTHROW(add(a, Vd::constant(Td::scalar(3))));
}

TEST_CASE("norm backward at zero norm is zero") {
  Vd x = Vd::leaf(Td({2}, {0, 0}));
  Vd n = sqrt(sum_all(square(x)));
  auto g = grad(n, {x});
  CHECK(g.grads[0].value()[0] == 0);
  CHECK(g.grads[0].value()[1] == 0);
}

TEST_CASE("shape op backward rules match finite differences") {
  Td xv = rng_fill<double>(Dist::Normal01, {2, 3, 4}, 21);
  Td wv = rng_fill<double>(Dist::Normal01, {3, 2, 2}, 22);
  Vd x = Vd::leaf(xv);
  // slice + transpose + reshape chain
  Vd y = reshape(transpose(slice(x, {0, 0, 1}, {2, 3, 2}), {1, 0, 2}),
                 Shape{3, 4});
  Vd loss = sum_all(mul(y, Vd::constant(reshape(wv, {3, 4}))));
  auto g = grad(loss, {x});
  auto f = [&](const Td& t) {
    Td s = reshape(transpose(slice(t, {0, 0, 1}, {2, 3, 2}), {1, 0, 2}),
                   Shape{3, 4});
    return sum_all(mul(s, reshape(wv, {3, 4})));
  };
  CHECK(testutil::max_rel_err(g.grads[0].value(),
                              testutil::finite_diff(f, xv)) < 1e-4);
}

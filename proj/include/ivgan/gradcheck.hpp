#pragma once

#include "ivgan/autograd.hpp"
#include "ivgan/conv.hpp"

namespace ivgan {

// f64 central finite-difference check of every differentiable op, shared by
// the `gradcheck` CLI command and the acceptance suite.

struct GradCheckResult {
  std::string op;
  double max_rel_err = 0;
  bool pass = false;
};

namespace gradcheck_detail {

using V = Var<double>;
using Tn = Tensor<double>;

// Scalar functional: random-weighted sum of the op output, so every output
// element contributes to the gradient.
struct Case {
  std::string name;
  std::vector<Tn> inputs;
  std::function<V(const std::vector<V>&)> build;
};

inline double eval(const Case& c, const std::vector<Tn>& xs) {
  std::vector<V> vars;
  vars.reserve(xs.size());
  for (const auto& x : xs) vars.push_back(V::constant(x));
  return c.build(vars).item();
}

inline GradCheckResult run_case(const Case& c, double tol) {
  std::vector<V> vars;
  for (const auto& x : c.inputs) vars.push_back(V::leaf(x));
  V out = c.build(vars);
  auto g = grad(out, vars);

  const double h = 1e-5;
  double worst = 0;
  std::vector<Tn> xs = c.inputs;
  for (size_t vi = 0; vi < xs.size(); ++vi) {
    for (int64_t i = 0; i < xs[vi].numel(); ++i) {
      double orig = xs[vi][i];
      xs[vi][i] = orig + h;
      double fp = eval(c, xs);
      xs[vi][i] = orig - h;
      double fm = eval(c, xs);
      xs[vi][i] = orig;
      double fd = (fp - fm) / (2 * h);
      double got = g.grads[vi].value()[i];
      double denom = std::max(std::abs(fd), 1e-6);
      worst = std::max(worst, std::abs(got - fd) / denom);
    }
  }
  return {c.name, worst, worst <= tol};
}

inline Tn weights(const Shape& s, uint64_t seed) {
  return rng_fill<double>(Dist::Uniform, s, seed, 0.25, 1.75);
}

// away_from_zero shifts values out of (-margin, margin) so kinked or
// singular ops (relu, sqrt, div) are probed at smooth points only
inline Tn smooth_input(const Shape& s, uint64_t seed, double margin = 0.2) {
  Tn t = rng_fill<double>(Dist::Normal01, s, seed);
  for (int64_t i = 0; i < t.numel(); ++i) {
    if (t[i] >= 0 && t[i] < margin) t[i] += margin;
    if (t[i] < 0 && t[i] > -margin) t[i] -= margin;
  }
  return t;
}

inline Tn positive_input(const Shape& s, uint64_t seed) {
  return rng_fill<double>(Dist::Uniform, s, seed, 0.3, 2.0);
}

inline std::vector<Case> all_cases() {
  std::vector<Case> cases;
  uint64_t seed = 1000;
  auto next = [&]() { return seed++; };

  const Shape s{2, 3, 4};
  Tn w_out = weights(s, next());
  auto weighted = [](const Tn& w) {
    return [w](const V& y) { return sum_all(mul(y, V::constant(w))); };
  };
  auto fin = weighted(w_out);

  auto unary = [&](const std::string& name, const Tn& x, auto&& op) {
    cases.push_back({name, {x}, [op, fin](const std::vector<V>& v) {
                       return fin(op(v[0]));
                     }});
  };
  auto binary = [&](const std::string& name, const Tn& a, const Tn& b,
                    auto&& op) {
    cases.push_back({name, {a, b}, [op, fin](const std::vector<V>& v) {
                       return fin(op(v[0], v[1]));
                     }});
  };

  Tn a = rng_fill<double>(Dist::Normal01, s, next());
  Tn b = rng_fill<double>(Dist::Normal01, s, next());
  Tn bnz = smooth_input(s, next(), 0.3);

  binary("add", a, b, [](const V& x, const V& y) { return add(x, y); });
  binary("sub", a, b, [](const V& x, const V& y) { return sub(x, y); });
  binary("mul", a, b, [](const V& x, const V& y) { return mul(x, y); });
  binary("div", a, bnz, [](const V& x, const V& y) { return div(x, y); });
  binary("zero_guarded_div", a, bnz,
         [](const V& x, const V& y) { return zero_guarded_div(x, y); });
  unary("neg", a, [](const V& x) { return neg(x); });
  unary("add_scalar", a, [](const V& x) { return add_scalar(x, 1.5); });
  unary("scale", a, [](const V& x) { return scale(x, -0.75); });
  unary("tanh", a, [](const V& x) { return tanh(x); });
  unary("relu", smooth_input(s, next()), [](const V& x) { return relu(x); });
  unary("leaky_relu", smooth_input(s, next()),
        [](const V& x) { return leaky_relu(x, 0.2); });
  unary("sqrt", positive_input(s, next()), [](const V& x) { return sqrt(x); });
  unary("square", a, [](const V& x) { return square(x); });

  // shape ops: their own output weighting since the shape changes
  {
    Tn x = rng_fill<double>(Dist::Normal01, s, next());
    Tn w = weights({4, 2, 3}, next());
    cases.push_back({"transpose", {x}, [w](const std::vector<V>& v) {
                       return sum_all(mul(transpose(v[0], {2, 0, 1}),
                                          V::constant(w)));
                     }});
  }
  {
    Tn x = rng_fill<double>(Dist::Normal01, {3, 4}, next());
    Tn y = rng_fill<double>(Dist::Normal01, {4, 5}, next());
    Tn w = weights({3, 5}, next());
    cases.push_back({"matmul", {x, y}, [w](const std::vector<V>& v) {
                       return sum_all(mul(matmul(v[0], v[1]), V::constant(w)));
                     }});
  }
  {
    Tn x = rng_fill<double>(Dist::Normal01, s, next());
    Tn w = weights({6, 4}, next());
    cases.push_back({"reshape", {x}, [w](const std::vector<V>& v) {
                       return sum_all(mul(reshape(v[0], {6, 4}), V::constant(w)));
                     }});
  }
  {
    Tn x = rng_fill<double>(Dist::Normal01, {3, 5, 4}, next());
    Tn w = weights({2, 3, 2}, next());
    cases.push_back({"slice", {x}, [w](const std::vector<V>& v) {
                       return sum_all(mul(slice(v[0], {1, 0, 2}, {2, 3, 2}),
                                          V::constant(w)));
                     }});
  }
  {
    Tn x = rng_fill<double>(Dist::Normal01, s, next());
    Tn w = weights({3, 4, 7}, next());
    cases.push_back({"pad", {x}, [w](const std::vector<V>& v) {
                       return sum_all(mul(pad(v[0], {1, 0, 2}, {0, 1, 1}, 0.5),
                                          V::constant(w)));
                     }});
  }
  {
    Tn x = rng_fill<double>(Dist::Normal01, {2, 1, 4}, next());
    Tn w = weights({2, 3, 4}, next());
    cases.push_back({"broadcast_to", {x}, [w](const std::vector<V>& v) {
                       return sum_all(mul(broadcast_to(v[0], {2, 3, 4}),
                                          V::constant(w)));
                     }});
  }
  {
    Tn x = rng_fill<double>(Dist::Normal01, s, next());
    Tn w = weights({2, 4}, next());
    cases.push_back({"reduce_sum", {x}, [w](const std::vector<V>& v) {
                       return sum_all(mul(reduce_sum(v[0], {1}, false),
                                          V::constant(w)));
                     }});
  }
  {
    Tn x = rng_fill<double>(Dist::Normal01, s, next());
    Tn w = weights({3}, next());
    cases.push_back({"reduce_mean", {x}, [w](const std::vector<V>& v) {
                       return sum_all(mul(reduce_mean(v[0], {0, 2}, false),
                                          V::constant(w)));
                     }});
  }
  {
    Tn x = rng_fill<double>(Dist::Normal01, s, next());
    cases.push_back({"sum_all", {x}, [](const std::vector<V>& v) {
                       return sum_all(v[0]);
                     }});
    cases.push_back({"mean_all", {x}, [](const std::vector<V>& v) {
                       return mean_all(v[0]);
                     }});
  }

  // conv op triple, both stride-2 4^3 kernels (tiny extents) and stride 1
  auto conv_cases = [&](const std::string& tag, const ConvSpec& spec,
                        const Shape& xs) {
    Shape ws{spec.kernel[0], spec.kernel[1], spec.kernel[2], spec.in_channels,
             spec.out_channels};
    Shape ys{xs[0], spec.out_extent(0, xs[1]), spec.out_extent(1, xs[2]),
             spec.out_extent(2, xs[3]), spec.out_channels};
    {
      Tn x = rng_fill<double>(Dist::Normal01, xs, next());
      Tn w = rng_fill<double>(Dist::Normal01, ws, next());
      Tn wy = weights(ys, next());
      cases.push_back({"conv3d[" + tag + "]",
                       {x, w},
                       [wy, spec](const std::vector<V>& v) {
                         return sum_all(mul(conv3d(v[0], v[1], spec),
                                            V::constant(wy)));
                       }});
    }
    {
      Tn g = rng_fill<double>(Dist::Normal01, ys, next());
      Tn w = rng_fill<double>(Dist::Normal01, ws, next());
      Tn wx = weights(xs, next());
      cases.push_back({"conv3d_transposed[" + tag + "]",
                       {g, w},
                       [wx, spec](const std::vector<V>& v) {
                         return sum_all(mul(conv3d_transposed(v[0], v[1], spec),
                                            V::constant(wx)));
                       }});
    }
    {
      Tn x = rng_fill<double>(Dist::Normal01, xs, next());
      Tn gy = rng_fill<double>(Dist::Normal01, ys, next());
      Tn ww = weights(ws, next());
      cases.push_back({"conv3d_wgrad[" + tag + "]",
                       {x, gy},
                       [ww, spec](const std::vector<V>& v) {
                         return sum_all(mul(conv3d_wgrad(v[0], v[1], spec),
                                            V::constant(ww)));
                       }});
    }
  };
  {
    ConvSpec spec;
    spec.in_channels = 2;
    spec.out_channels = 3;
    conv_cases("k4s2p1", spec, {2, 4, 4, 4, 2});
  }
  {
    ConvSpec spec;
    spec.kernel = {2, 3, 3};
    spec.stride = {1, 1, 1};
    spec.padding = {0, 1, 1};
    spec.in_channels = 1;
    spec.out_channels = 2;
    conv_cases("k233s1", spec, {1, 3, 4, 4, 1});
  }

  return cases;
}

}  // namespace gradcheck_detail

inline std::vector<GradCheckResult> run_gradcheck(double tol = 1e-4) {
  std::vector<GradCheckResult> results;
  for (const auto& c : gradcheck_detail::all_cases())
    results.push_back(gradcheck_detail::run_case(c, tol));
  return results;
}

}  // namespace ivgan

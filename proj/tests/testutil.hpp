#pragma once

#include <cmath>
#include <functional>

#include "ivgan/autograd.hpp"
#include "ivgan/tensor.hpp"

namespace testutil {

// Central finite differences of a scalar functional, step 1e-5. The oracle
// only ever calls the forward path.
inline ivgan::Tensor<double> finite_diff(
    const std::function<double(const ivgan::Tensor<double>&)>& f,
    const ivgan::Tensor<double>& x, double h = 1e-5) {
  ivgan::Tensor<double> g(x.shape());
  ivgan::Tensor<double> xp = x;
  for (int64_t i = 0; i < x.numel(); ++i) {
    double orig = xp[i];
    xp[i] = orig + h;
    double fp = f(xp);
    xp[i] = orig - h;
    double fm = f(xp);
    xp[i] = orig;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

// max over entries of |a-b| / max(|b|, floor); floor guards near-zero entries
inline double max_rel_err(const ivgan::Tensor<double>& a,
                          const ivgan::Tensor<double>& b,
                          double abs_floor = 1e-6) {
  double worst = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double denom = std::max(std::abs(b[i]), abs_floor);
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace testutil

#pragma once

#include <cmath>
#include <functional>

#include "agpis/core/tensor.hpp"

namespace agpis {

// Max over coordinates of |analytic - central difference| / max(1, |analytic|),
// differentiating the scalar f(x) with respect to x. f must be pure.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor& x,
                         double h = 1e-5) {
  x.zero_grad();
  Tensor y = f(x);
  backward(y);
  std::vector<double> analytic = x.grad();

  double max_err = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + h;
    const double fp = f(x).item();
    x.data()[i] = saved - h;
    const double fm = f(x).item();
    x.data()[i] = saved;
    const double numeric = (fp - fm) / (2.0 * h);
    const double err = std::fabs(analytic[i] - numeric) / std::max(1.0, std::fabs(analytic[i]));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace agpis

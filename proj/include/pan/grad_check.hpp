#pragma once

#include <functional>

#include "pan/tensor.hpp"

namespace pan {

// A scalar function of a tensor together with its analytic gradient.
struct Differentiable {
  std::function<double(const Tensor&)> value;
  std::function<Tensor(const Tensor&)> gradient;
};

// Largest |analytic - central difference| / max(1, |central difference|)
// over all coordinates of x. Throws NumericError on any non-finite value.
double grad_check(const Differentiable& f, const Tensor& x, double h = 1e-5);

}  // namespace pan

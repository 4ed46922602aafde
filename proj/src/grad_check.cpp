#include "pan/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "pan/errors.hpp"

namespace pan {

double grad_check(const Differentiable& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ParameterError("grad_check: step must be positive");
  const Tensor analytic = f.gradient(x);
  require_shape(analytic, x.shape(), "grad_check gradient");
  require_finite(analytic, "grad_check gradient");

  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double up = f.value(probe);
    probe[i] = saved - h;
    const double down = f.value(probe);
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("grad_check: non-finite function value");
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

}  // namespace pan

#include "rulforge/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rulforge/error.hpp"

namespace rulforge {

double gradient_relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

std::vector<double> numeric_gradient(const ScalarFn& f, std::span<const double> x,
                                     double eps) {
  if (!(eps > 0.0)) throw ValidationError("grad_check: eps must be positive");
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = f(probe);
    probe[i] = orig - eps;
    const double down = f(probe);
    probe[i] = orig;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

GradCheckResult grad_check(const ScalarFn& f, std::span<const double> x,
                           std::span<const double> analytic, double eps) {
  if (analytic.size() != x.size()) {
    throw ShapeError("grad_check: gradient has " + std::to_string(analytic.size()) +
                     " entries for " + std::to_string(x.size()) + " inputs");
  }
  const auto numeric = numeric_gradient(f, x, eps);
  GradCheckResult r;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = gradient_relative_error(analytic[i], numeric[i]);
    if (e > r.max_relative_error || i == 0) {
      r.max_relative_error = std::max(r.max_relative_error, e);
      r.worst_index = i;
      r.analytic_at_worst = analytic[i];
      r.numeric_at_worst = numeric[i];
    }
  }
  return r;
}

}  // namespace rulforge

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace rulforge {

/// Scalar objective over a flat parameter vector.
using ScalarFn = std::function<double(std::span<const double>)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

/// |a - n| / max(1e-8, |a| + |n|)
double gradient_relative_error(double analytic, double numeric);

/// Central finite differences of `f` around `x`, one coordinate at a time.
std::vector<double> numeric_gradient(const ScalarFn& f, std::span<const double> x,
                                     double eps);

/// Compares `analytic` against central differences of `f` at `x` and reports
/// the worst coordinate.
GradCheckResult grad_check(const ScalarFn& f, std::span<const double> x,
                           std::span<const double> analytic, double eps = 1e-5);

}  // namespace rulforge

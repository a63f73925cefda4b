#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "whmc/errors.hpp"

namespace whmc {

struct QuadResult {
  double value = 0.0;
  double error = 0.0;
  double l1 = 0.0;
};

// Adaptive 61-point Gauss-Kronrod on [a, b] (b may be +inf). Throws
// NumericalError when the estimated error misses both the relative and the
// absolute tolerance.
template <class F>
QuadResult integrate(F&& f, double a, double b, double rel_tol = 1e-10, double abs_tol = 1e-14,
                     const char* label = "integral") {
  QuadResult r;
  if (a == b) return r;
  r.value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 20, rel_tol * 1e-2,
                                                                          &r.error, &r.l1);
  if (!std::isfinite(r.value)) {
    std::ostringstream os;
    os << label << ": non-finite result on [" << a << ", " << b << "]";
    throw NumericalError(os.str());
  }
  if (r.error > std::max(rel_tol * std::abs(r.value), abs_tol)) {
    std::ostringstream os;
    os << label << ": quadrature did not converge on [" << a << ", " << b << "], value " << r.value
       << ", error estimate " << r.error;
    throw NumericalError(os.str());
  }
  return r;
}

}  // namespace whmc

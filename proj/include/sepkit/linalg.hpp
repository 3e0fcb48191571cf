#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "sepkit/errors.hpp"
#include "sepkit/matrix.hpp"

namespace sepkit {

// Cholesky solve for symmetric positive-definite systems. The factor
// overwrites a local copy; callers keep their matrix.
inline std::vector<double> cholesky_solve_spd(const Matrix& a, const std::vector<double>& b) {
  const std::size_t n = a.rows;
  if (a.cols != n || b.size() != n)
    throw ShapeError("cholesky_solve_spd: square matrix and matching vector required");

  Matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = a(i, j);
      for (std::size_t p = 0; p < j; ++p) sum -= l(i, p) * l(j, p);
      if (i == j) {
        if (!(sum > 0.0) || !std::isfinite(sum))
          throw NumericalFailure("cholesky_solve_spd: matrix is not positive definite at pivot " +
                                 std::to_string(i));
        l(i, i) = std::sqrt(sum);
      } else {
        l(i, j) = sum / l(j, j);
      }
    }
  }

  // Forward substitution L y = b, then back substitution L^T x = y.
  std::vector<double> x(b);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = x[i];
    for (std::size_t p = 0; p < i; ++p) sum -= l(i, p) * x[p];
    x[i] = sum / l(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double sum = x[ii];
    for (std::size_t p = ii + 1; p < n; ++p) sum -= l(p, ii) * x[p];
    x[ii] = sum / l(ii, ii);
  }
  return x;
}

}  // namespace sepkit

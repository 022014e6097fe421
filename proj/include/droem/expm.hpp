#pragma once

#include <cmath>

#include "droem/matrix.hpp"

namespace droem {

/// Largest absolute column sum.
inline double norm1(const Matrix<Complex>& a) {
  double best = 0.0;
  for (std::size_t j = 0; j < a.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) s += std::abs(a(i, j));
    best = std::max(best, s);
  }
  return best;
}

/// exp(a) by scaling and squaring with a Taylor core: a is scaled so its
/// 1-norm is at most 1/2, where 18 terms are below double rounding.
inline Matrix<Complex> expm(const Matrix<Complex>& a) {
  if (a.rows() != a.cols()) throw ShapeError("expm needs a square matrix");
  const double norm = norm1(a);
  if (!std::isfinite(norm)) throw OverflowError("expm input is not finite");
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  Matrix<Complex> scaled = a * Complex(std::ldexp(1.0, -squarings), 0.0);

  const std::size_t n = a.rows();
  Matrix<Complex> sum = Matrix<Complex>::identity(n);
  Matrix<Complex> term = Matrix<Complex>::identity(n);
  for (int k = 1; k <= 18; ++k) {
    term = term * scaled;
    term *= Complex(1.0 / k, 0.0);
    sum += term;
  }
  for (int s = 0; s < squarings; ++s) sum = sum * sum;
  for (const auto& x : sum.data())
    if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) throw OverflowError("matrix exponential overflowed");
  return sum;
}

}  // namespace droem

#pragma once

#include <optional>
#include <vector>

#include "droem/matrix.hpp"

// Gauss-Jordan elimination over exact fields (rationals, Gaussian rationals).

namespace droem::linalg {

/// Reduces m in place to reduced row echelon form; returns pivot columns.
template <ExactScalar S>
std::vector<std::size_t> rref(Matrix<S>& m) {
  using T = ScalarTraits<S>;
  std::vector<std::size_t> pivots;
  std::size_t row = 0;
  for (std::size_t col = 0; col < m.cols() && row < m.rows(); ++col) {
    std::size_t p = row;
    while (p < m.rows() && T::is_zero(m(p, col))) ++p;
    if (p == m.rows()) continue;
    if (p != row)
      for (std::size_t c = 0; c < m.cols(); ++c) std::swap(m(p, c), m(row, c));
    S inv = T::from_int(1) / m(row, col);
    for (std::size_t c = col; c < m.cols(); ++c)
      if (!T::is_zero(m(row, c))) m(row, c) *= inv;
    for (std::size_t r = 0; r < m.rows(); ++r) {
      if (r == row || T::is_zero(m(r, col))) continue;
      S factor = m(r, col);
      for (std::size_t c = col; c < m.cols(); ++c) {
        if (T::is_zero(m(row, c))) continue;
        S t = factor * m(row, c);
        m(r, c) -= t;
      }
    }
    pivots.push_back(col);
    ++row;
  }
  return pivots;
}

template <ExactScalar S>
std::size_t rank(Matrix<S> m) {
  return rref(m).size();
}

/// Basis of {x : m x = 0}, one vector per free column, with that free
/// variable set to 1 and the other free variables 0.
template <ExactScalar S>
std::vector<std::vector<S>> nullspace(Matrix<S> m) {
  using T = ScalarTraits<S>;
  auto pivots = rref(m);
  std::vector<bool> is_pivot(m.cols(), false);
  for (auto p : pivots) is_pivot[p] = true;
  std::vector<std::vector<S>> basis;
  for (std::size_t f = 0; f < m.cols(); ++f) {
    if (is_pivot[f]) continue;
    std::vector<S> v(m.cols(), T::from_int(0));
    v[f] = T::from_int(1);
    for (std::size_t r = 0; r < pivots.size(); ++r) v[pivots[r]] = -m(r, f);
    basis.push_back(std::move(v));
  }
  return basis;
}

/// A particular solution of a x = b with free variables set to zero, or
/// nullopt when the system is inconsistent.
template <ExactScalar S>
std::optional<std::vector<S>> solve(const Matrix<S>& a, const std::vector<S>& b) {
  using T = ScalarTraits<S>;
  if (b.size() != a.rows()) throw ShapeError("right-hand side length does not match system");
  Matrix<S> aug(a.rows(), a.cols() + 1);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) aug(r, c) = a(r, c);
    aug(r, a.cols()) = b[r];
  }
  auto pivots = rref(aug);
  if (!pivots.empty() && pivots.back() == a.cols()) return std::nullopt;
  std::vector<S> x(a.cols(), T::from_int(0));
  for (std::size_t r = 0; r < pivots.size(); ++r) x[pivots[r]] = aug(r, a.cols());
  return x;
}

}  // namespace droem::linalg

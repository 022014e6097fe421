#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "droem/errors.hpp"
#include "droem/scalar.hpp"

namespace droem {

/// Dense row-major matrix over an exact or floating scalar. Truncated-module
/// operators are banded, so the product skips zero entries on both sides.
template <class S>
class Matrix {
 public:
  using Traits = ScalarTraits<S>;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, Traits::from_int(0)) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = Traits::from_int(1);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  S& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const S& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  const std::vector<S>& data() const { return data_; }

  bool is_zero() const {
    for (const auto& x : data_)
      if (!Traits::is_zero(x)) return false;
    return true;
  }

  Matrix& operator+=(const Matrix& o) {
    check_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    check_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Matrix& operator*=(const S& s) {
    if (Traits::is_zero(s)) {
      for (auto& x : data_) x = Traits::from_int(0);
      return *this;
    }
    for (auto& x : data_)
      if (!Traits::is_zero(x)) x *= s;
    return *this;
  }

  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(Matrix a, const S& s) { return a *= s; }
  friend Matrix operator*(const S& s, Matrix a) { return a *= s; }
  friend Matrix operator-(Matrix a) {
    for (auto& x : a.data_) x = -x;
    return a;
  }

  friend Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols_ != b.rows_) throw ShapeError("matrix product: inner dimensions differ");
    Matrix c(a.rows_, b.cols_);
    std::vector<std::vector<std::pair<std::size_t, const S*>>> nz(b.rows_);
    for (std::size_t k = 0; k < b.rows_; ++k)
      for (std::size_t j = 0; j < b.cols_; ++j)
        if (!Traits::is_zero(b(k, j))) nz[k].emplace_back(j, &b(k, j));
    S tmp;
    for (std::size_t i = 0; i < a.rows_; ++i)
      for (std::size_t k = 0; k < a.cols_; ++k) {
        const S& aik = a(i, k);
        if (Traits::is_zero(aik)) continue;
        for (const auto& [j, bkj] : nz[k]) {
          tmp = aik * *bkj;
          c(i, j) += tmp;
        }
      }
    return c;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

  Matrix conj_transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = Traits::conj((*this)(i, j));
    return t;
  }

  /// Sum of |entry|^2, evaluated in double.
  double frobenius_sq() const {
    double s = 0.0;
    for (const auto& x : data_) s += Traits::abs2(x);
    return s;
  }

 private:
  void check_same_shape(const Matrix& o) const {
    if (rows_ != o.rows_ || cols_ != o.cols_) throw ShapeError("matrix shapes differ");
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<S> data_;
};

template <class To, class From>
Matrix<To> convert(const Matrix<From>& m) {
  Matrix<To> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if constexpr (std::is_same_v<To, From>)
        out(i, j) = m(i, j);
      else if constexpr (std::is_same_v<To, Complex>)
        out(i, j) = ScalarTraits<From>::to_complex(m(i, j));
      else
        out(i, j) = To(m(i, j));
    }
  return out;
}

}  // namespace droem

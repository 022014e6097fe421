#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "droem/errors.hpp"
#include "droem/matrix.hpp"
#include "droem/scalar.hpp"

// Truncated Verma modules over sl(2) realized on polynomials in z, and the
// graded operator calculus on them.
//
// A module of weight h cut at degree D has basis z^0..z^D. Operators are
// stored as full (D+1)x(D+1) matrices, column j holding the image of z^j.
// Each operator carries its maximal upward and downward degree shift and
// the largest input degree on which truncation has not lost anything.

namespace droem::verma {

template <class S>
class VermaModule {
 public:
  using Scalar = S;
  using Traits = ScalarTraits<S>;

  const Rational& h() const { return h_; }
  int degree() const { return degree_; }
  int dim() const { return degree_ + 1; }
  S weight() const { return Traits::from_rational(h_); }
  static constexpr ScalarMode mode() { return Traits::mode; }

  friend bool operator==(const VermaModule& a, const VermaModule& b) {
    return a.h_ == b.h_ && a.degree_ == b.degree_;
  }

  template <class T>
  friend VermaModule<T> make_module(const Rational& h, int degree);

 private:
  VermaModule(Rational h, int degree) : h_(std::move(h)), degree_(degree) {}
  Rational h_;
  int degree_ = 0;
};

using ExactModule = VermaModule<Rational>;
using FastModule = VermaModule<Complex>;

/// Builds the module with basis z^0..z^degree. The weight must keep 2h+i away
/// from zero for i in [0, degree+2] so that shifted symbols 1/(2h+i) exist.
template <class S>
VermaModule<S> make_module(const Rational& h, int degree) {
  if (degree < 2) throw DomainError("truncation degree must be at least 2, got " + std::to_string(degree));
  for (int i = 0; i <= degree + 2; ++i) {
    if (sgn(Rational(2 * h + i)) == 0)
      throw PoleError("2h+" + std::to_string(i) + " vanishes for h=" + to_string(h));
  }
  return VermaModule<S>(h, degree);
}

template <class S>
struct PolyState {
  std::vector<S> coeffs;
};

template <class S>
struct DiagSymbol {
  std::vector<S> values;
};

template <class S>
struct LinOp {
  Matrix<S> matrix;
  int raise = 0;
  int lower = 0;
  int exact_below = 0;

  int degree() const { return static_cast<int>(matrix.rows()) - 1; }
  const S& operator()(int row, int col) const { return matrix(row, col); }
};

template <class S>
LinOp<S> zero_op(int degree) {
  return {Matrix<S>(degree + 1, degree + 1), 0, 0, degree};
}

template <class S>
LinOp<S> identity_op(int degree) {
  return {Matrix<S>::identity(degree + 1), 0, 0, degree};
}

template <class S>
void check_same_degree(const LinOp<S>& a, const LinOp<S>& b) {
  if (a.degree() != b.degree())
    throw ShapeError("operators act on different truncations (" + std::to_string(a.degree()) + " vs " +
                     std::to_string(b.degree()) + ")");
}

/// a∘b. An input of degree i is exact if b keeps it exact and b's output,
/// at most raise(b) higher, is still inside a's exact range.
template <class S>
LinOp<S> compose(const LinOp<S>& a, const LinOp<S>& b) {
  check_same_degree(a, b);
  LinOp<S> out;
  out.matrix = a.matrix * b.matrix;
  out.raise = a.raise + b.raise;
  out.lower = a.lower + b.lower;
  out.exact_below = std::min(b.exact_below, a.exact_below - b.raise);
  return out;
}

template <class S>
LinOp<S> operator*(const LinOp<S>& a, const LinOp<S>& b) {
  return compose(a, b);
}

template <class S>
LinOp<S> operator+(const LinOp<S>& a, const LinOp<S>& b) {
  check_same_degree(a, b);
  return {a.matrix + b.matrix, std::max(a.raise, b.raise), std::max(a.lower, b.lower),
          std::min(a.exact_below, b.exact_below)};
}

template <class S>
LinOp<S> operator-(const LinOp<S>& a, const LinOp<S>& b) {
  check_same_degree(a, b);
  return {a.matrix - b.matrix, std::max(a.raise, b.raise), std::max(a.lower, b.lower),
          std::min(a.exact_below, b.exact_below)};
}

template <class S>
LinOp<S> operator*(const S& s, LinOp<S> a) {
  a.matrix *= s;
  return a;
}

/// AB - BA, trustworthy on input degrees up to the smaller of the two
/// composition bounds.
template <class S>
LinOp<S> commutator(const LinOp<S>& a, const LinOp<S>& b) {
  return compose(a, b) - compose(b, a);
}

template <class S>
PolyState<S> apply(const LinOp<S>& a, const PolyState<S>& v) {
  const int n = a.degree() + 1;
  if (static_cast<int>(v.coeffs.size()) != n) throw ShapeError("state length does not match operator");
  PolyState<S> out{std::vector<S>(n, ScalarTraits<S>::from_int(0))};
  S tmp;
  for (int j = 0; j < n; ++j) {
    if (ScalarTraits<S>::is_zero(v.coeffs[j])) continue;
    for (int i = 0; i < n; ++i) {
      if (ScalarTraits<S>::is_zero(a(i, j))) continue;
      tmp = a(i, j) * v.coeffs[j];
      out.coeffs[i] += tmp;
    }
  }
  return out;
}

/// Largest d such that columns 0..d of the operator vanish; -1 when column 0
/// is already nonzero.
template <class S>
int zero_prefix(const LinOp<S>& a) {
  const int n = a.degree() + 1;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      if (!ScalarTraits<S>::is_zero(a(i, j))) return j - 1;
  return n - 1;
}

/// True when a and b send every z^j, j <= upto, to the same polynomial.
template <class S>
bool agree_on(const LinOp<S>& a, const LinOp<S>& b, int upto) {
  check_same_degree(a, b);
  const int n = a.degree() + 1;
  for (int j = 0; j <= std::min(upto, n - 1); ++j)
    for (int i = 0; i < n; ++i)
      if (!(a(i, j) == b(i, j))) return false;
  return true;
}

/// Sum of |entry|^2 over columns 0..upto, in double.
template <class S>
double column_frobenius_sq(const LinOp<S>& a, int upto) {
  const int n = a.degree() + 1;
  double s = 0.0;
  for (int j = 0; j <= std::min(upto, n - 1); ++j)
    for (int i = 0; i < n; ++i) s += ScalarTraits<S>::abs2(a(i, j));
  return s;
}

// Coefficient of z^{i-k} in L_k z^i for k >= 0:
//   L_k = z d^{k+1} + (k+1) h d^k  gives  i!/(i-k)! * (i - k + (k+1) h).
// k = 0 reproduces i + h and k = 1 gives i (i - 1 + 2h).
template <class S>
S lowering_coefficient(const Rational& h, int k, int i) {
  if (i < k) return ScalarTraits<S>::from_int(0);
  Rational falling = 1;
  for (int t = 0; t < k; ++t) falling *= (i - t);
  Rational c = falling * (Rational(i - k) + Rational(k + 1) * h);
  return ScalarTraits<S>::from_rational(c);
}

template <class S>
LinOp<S> lowering_generator(const VermaModule<S>& mod, int k) {
  const int d = mod.degree();
  LinOp<S> op{Matrix<S>(d + 1, d + 1), 0, k, d};
  for (int i = k; i <= d; ++i) op.matrix(i - k, i) = lowering_coefficient<S>(mod.h(), k, i);
  return op;
}

/// sl(2) generators: L_{-1} = z, L_0 = z d + h, L_1 = z d^2 + 2h d.
template <class S>
LinOp<S> sl2_generator(const VermaModule<S>& mod, int k) {
  const int d = mod.degree();
  switch (k) {
    case -1: {
      LinOp<S> op{Matrix<S>(d + 1, d + 1), 1, 0, d - 1};
      for (int i = 0; i < d; ++i) op.matrix(i + 1, i) = ScalarTraits<S>::from_int(1);
      return op;
    }
    case 0:
    case 1:
      return lowering_generator(mod, k);
    default:
      throw DomainError("sl2 generator index must be -1, 0 or 1, got " + std::to_string(k));
  }
}

/// W_1 extension L_k = z d^{k+1} + (k+1) h d^k for k >= 2.
template <class S>
LinOp<S> w1_generator(const VermaModule<S>& mod, int k) {
  if (k < 2) throw DomainError("W1 generator index must be >= 2, got " + std::to_string(k));
  return lowering_generator(mod, k);
}

/// Any generator L_k with k >= -1.
template <class S>
LinOp<S> vector_field_generator(const VermaModule<S>& mod, int k) {
  return k <= 1 ? sl2_generator(mod, k) : w1_generator(mod, k);
}

template <class S>
LinOp<S> diag_operator(const VermaModule<S>& mod, const DiagSymbol<S>& symbol) {
  const int d = mod.degree();
  if (static_cast<int>(symbol.values.size()) < d + 1)
    throw ShapeError("diagonal symbol needs values for degrees 0.." + std::to_string(d));
  LinOp<S> op{Matrix<S>(d + 1, d + 1), 0, 0, d};
  for (int i = 0; i <= d; ++i) op.matrix(i, i) = symbol.values[i];
  return op;
}

/// Diagonal Gram matrix of the contravariant form, G_0 = 1.
template <class S>
struct Gram {
  std::vector<S> values;

  /// G_j / G_i.
  S ratio(int j, int i) const { return values[j] / values[i]; }
};

/// G_n = n (n - 1 + 2h) G_{n-1}: the form under which L_1 is adjoint to L_{-1}.
template <class S>
Gram<S> shapovalov_form(const VermaModule<S>& mod) {
  if (sgn(mod.h()) <= 0)
    throw DomainError("positive-definite contravariant form needs h > 0, got h=" + to_string(mod.h()));
  Gram<S> g;
  g.values.reserve(mod.dim());
  Rational acc = 1;
  g.values.push_back(ScalarTraits<S>::from_rational(acc));
  S prev = g.values.back();
  for (int n = 1; n <= mod.degree(); ++n) {
    Rational factor = Rational(n) * (Rational(n - 1) + 2 * mod.h());
    S next = prev * ScalarTraits<S>::from_rational(factor);
    g.values.push_back(next);
    prev = next;
  }
  return g;
}

template <class S>
bool is_positive(const S& x) {
  if constexpr (std::is_same_v<S, Rational>)
    return sgn(x) > 0;
  else if constexpr (std::is_same_v<S, GaussianRational>)
    return sgn(x.re) > 0 && sgn(x.im) == 0;
  else
    return x.real() > 0.0 && x.imag() == 0.0;
}

/// Adjoint under a diagonal Gram form: A*_{ij} = (G_j / G_i) conj(A_{ji}).
/// Degree shifts swap; an input of A* is exact only if every output it
/// reaches indexes a column of A that was exact.
template <class S>
LinOp<S> adjoint(const LinOp<S>& a, const Gram<S>& gram) {
  const int n = a.degree() + 1;
  if (static_cast<int>(gram.values.size()) != n) throw ShapeError("Gram form size does not match operator");
  for (const auto& g : gram.values)
    if (!is_positive(g)) throw DomainError("adjoint needs a positive diagonal Gram form");
  LinOp<S> out{Matrix<S>(n, n), a.lower, a.raise, a.exact_below - a.lower};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (ScalarTraits<S>::is_zero(a(j, i))) continue;
      out.matrix(i, j) = gram.ratio(j, i) * ScalarTraits<S>::conj(a(j, i));
    }
  return out;
}

template <class To, class From>
LinOp<To> convert(const LinOp<From>& a) {
  return {droem::convert<To>(a.matrix), a.raise, a.lower, a.exact_below};
}

}  // namespace droem::verma

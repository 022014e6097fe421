#pragma once

#include <gmpxx.h>

#include <cmath>
#include <complex>
#include <string>
#include <string_view>

namespace droem {

using Rational = mpq_class;
using Complex = std::complex<double>;

enum class ScalarMode { ExactRational, ComplexDouble };

/// Parses "p/q", "p" or a finite decimal such as "0.75" into an exact rational.
Rational parse_rational(std::string_view text);

/// Canonical "num/den" form (denominator always printed, "0/1" for zero).
std::string to_string(const Rational& q);

/// Exact complex number with rational parts.
struct GaussianRational {
  Rational re;
  Rational im;

  GaussianRational() = default;
  GaussianRational(Rational r) : re(std::move(r)) {}  // NOLINT: implicit on purpose
  GaussianRational(long r) : re(r) {}                  // NOLINT
  GaussianRational(Rational r, Rational i) : re(std::move(r)), im(std::move(i)) {}

  GaussianRational& operator+=(const GaussianRational& o) {
    re += o.re;
    im += o.im;
    return *this;
  }
  GaussianRational& operator-=(const GaussianRational& o) {
    re -= o.re;
    im -= o.im;
    return *this;
  }
  GaussianRational& operator*=(const GaussianRational& o) {
    Rational r = re * o.re - im * o.im;
    Rational i = re * o.im + im * o.re;
    re = std::move(r);
    im = std::move(i);
    return *this;
  }
  GaussianRational& operator/=(const GaussianRational& o) {
    Rational n = o.re * o.re + o.im * o.im;
    Rational r = (re * o.re + im * o.im) / n;
    Rational i = (im * o.re - re * o.im) / n;
    re = std::move(r);
    im = std::move(i);
    return *this;
  }
  friend GaussianRational operator+(GaussianRational a, const GaussianRational& b) { return a += b; }
  friend GaussianRational operator-(GaussianRational a, const GaussianRational& b) { return a -= b; }
  friend GaussianRational operator*(GaussianRational a, const GaussianRational& b) { return a *= b; }
  friend GaussianRational operator/(GaussianRational a, const GaussianRational& b) { return a /= b; }
  friend GaussianRational operator-(const GaussianRational& a) { return {-a.re, -a.im}; }
  friend bool operator==(const GaussianRational& a, const GaussianRational& b) {
    return a.re == b.re && a.im == b.im;
  }
};

/// Uniform access to the handful of scalar operations generic code needs.
template <class S>
struct ScalarTraits;

template <>
struct ScalarTraits<Rational> {
  static constexpr bool exact = true;
  static constexpr ScalarMode mode = ScalarMode::ExactRational;
  static Rational from_rational(const Rational& q) { return q; }
  static Rational from_int(long n) { return Rational(n); }
  static bool is_zero(const Rational& q) { return sgn(q) == 0; }
  static Rational conj(const Rational& q) { return q; }
  static double abs2(const Rational& q) { return Rational(q * q).get_d(); }
  static Complex to_complex(const Rational& q) { return {q.get_d(), 0.0}; }
  static const char* name() { return "exact-rational"; }
};

template <>
struct ScalarTraits<GaussianRational> {
  static constexpr bool exact = true;
  static constexpr ScalarMode mode = ScalarMode::ExactRational;
  static GaussianRational from_rational(const Rational& q) { return {q}; }
  static GaussianRational from_int(long n) { return {Rational(n)}; }
  static bool is_zero(const GaussianRational& q) { return sgn(q.re) == 0 && sgn(q.im) == 0; }
  static GaussianRational conj(const GaussianRational& q) { return {q.re, -q.im}; }
  static double abs2(const GaussianRational& q) { return Rational(q.re * q.re + q.im * q.im).get_d(); }
  static Complex to_complex(const GaussianRational& q) { return {q.re.get_d(), q.im.get_d()}; }
  static const char* name() { return "exact-gaussian-rational"; }
};

template <>
struct ScalarTraits<Complex> {
  static constexpr bool exact = false;
  static constexpr ScalarMode mode = ScalarMode::ComplexDouble;
  static Complex from_rational(const Rational& q) { return {q.get_d(), 0.0}; }
  static Complex from_int(long n) { return {static_cast<double>(n), 0.0}; }
  static bool is_zero(const Complex& q) { return q.real() == 0.0 && q.imag() == 0.0; }
  static Complex conj(const Complex& q) { return std::conj(q); }
  static double abs2(const Complex& q) { return std::norm(q); }
  static Complex to_complex(const Complex& q) { return q; }
  static const char* name() { return "complex-double"; }
};

template <class S>
concept ExactScalar = ScalarTraits<S>::exact;

}  // namespace droem

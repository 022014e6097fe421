#pragma once

#include <map>
#include <utility>

#include "droem/errors.hpp"
#include "droem/scalar.hpp"

namespace droem {

/// Finite scalar Laurent polynomial sum_n c_n u^n. Only nonzero terms are stored.
template <class S>
class Laurent {
 public:
  using Traits = ScalarTraits<S>;

  Laurent() = default;

  static Laurent monomial(int power, const S& coeff) {
    Laurent p;
    p.set(power, coeff);
    return p;
  }
  static Laurent constant(const S& c) { return monomial(0, c); }

  const std::map<int, S>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  int min_power() const { return terms_.empty() ? 0 : terms_.begin()->first; }
  int max_power() const { return terms_.empty() ? 0 : terms_.rbegin()->first; }

  S coeff(int n) const {
    auto it = terms_.find(n);
    return it == terms_.end() ? Traits::from_int(0) : it->second;
  }

  void set(int n, const S& c) {
    if (Traits::is_zero(c))
      terms_.erase(n);
    else
      terms_[n] = c;
  }

  void add(int n, const S& c) {
    if (Traits::is_zero(c)) return;
    S v = coeff(n) + c;
    set(n, v);
  }

  Laurent& operator+=(const Laurent& o) {
    for (const auto& [n, c] : o.terms_) add(n, c);
    return *this;
  }
  Laurent& operator-=(const Laurent& o) {
    for (const auto& [n, c] : o.terms_) add(n, S(-c));
    return *this;
  }
  friend Laurent operator+(Laurent a, const Laurent& b) { return a += b; }
  friend Laurent operator-(Laurent a, const Laurent& b) { return a -= b; }
  friend Laurent operator*(const Laurent& a, const Laurent& b) {
    Laurent out;
    for (const auto& [n, c] : a.terms_)
      for (const auto& [m, d] : b.terms_) out.add(n + m, S(c * d));
    return out;
  }
  friend Laurent operator*(const S& s, const Laurent& a) {
    Laurent out;
    for (const auto& [n, c] : a.terms_) out.set(n, S(s * c));
    return out;
  }
  friend bool operator==(const Laurent& a, const Laurent& b) { return a.terms_ == b.terms_; }

  /// Value at x; negative powers require x != 0.
  template <class T>
  T evaluate(const T& x) const {
    T sum = ScalarTraits<T>::from_int(0);
    for (const auto& [n, c] : terms_) sum += to<T>(c) * power(x, n);
    return sum;
  }

 private:
  template <class T>
  static T to(const S& c) {
    if constexpr (std::is_same_v<T, S>)
      return c;
    else if constexpr (std::is_same_v<T, Complex>)
      return Traits::to_complex(c);
    else
      return T(c);
  }

  template <class T>
  static T power(const T& x, int n) {
    if (n < 0) {
      if (ScalarTraits<T>::is_zero(x)) throw EvalDomainError("negative power evaluated at zero");
      return ScalarTraits<T>::from_int(1) / power(x, -n);
    }
    T r = ScalarTraits<T>::from_int(1);
    for (int i = 0; i < n; ++i) r *= x;
    return r;
  }

  std::map<int, S> terms_;
};

}  // namespace droem

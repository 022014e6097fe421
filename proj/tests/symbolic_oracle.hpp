#pragma once

// Test-only symbolic evaluator: differential operators sum c_{a,b} z^a d^b
// acting on untruncated polynomials. Shares nothing with the matrix code.

#include <map>
#include <utility>

#include "droem/scalar.hpp"

namespace oracle {

using droem::Rational;
using Poly = std::map<int, Rational>;
using DiffOp = std::map<std::pair<int, int>, Rational>;

inline Poly monomial(int i) { return Poly{{i, Rational(1)}}; }

inline Poly apply(const DiffOp& op, const Poly& p) {
  Poly out;
  for (const auto& [ab, c] : op) {
    const auto [a, b] = ab;
    for (const auto& [i, x] : p) {
      if (i < b) continue;
      Rational falling = 1;
      for (int t = 0; t < b; ++t) falling *= (i - t);
      out[i - b + a] += c * falling * x;
    }
  }
  for (auto it = out.begin(); it != out.end();) it = sgn(it->second) == 0 ? out.erase(it) : std::next(it);
  return out;
}

/// L_{-1} = z; L_k = z d^{k+1} + (k+1) h d^k for k >= 0.
inline DiffOp generator(const Rational& h, int k) {
  if (k == -1) return DiffOp{{{1, 0}, Rational(1)}};
  DiffOp op{{{1, k + 1}, Rational(1)}};
  op[{0, k}] += Rational(k + 1) * h;
  return op;
}

/// d^k.
inline DiffOp derivative(int k) { return DiffOp{{{0, k}, Rational(1)}}; }

}  // namespace oracle

#include "droem/cutoff.hpp"

#include <cmath>
#include <limits>

#include "droem/json_io.hpp"
#include "droem/linalg.hpp"

namespace droem::cutoff {

namespace {

Polynomial trim(Polynomial p) {
  while (!p.coeffs.empty() && sgn(p.coeffs.back()) == 0) p.coeffs.pop_back();
  return p;
}

// Exact residual of lhs - rhs over input degrees 0..valid.
RelationCheck compare(std::string op, std::string relation, std::string convention, const LinOp<Rational>& lhs,
                      const LinOp<Rational>& rhs, int cap = std::numeric_limits<int>::max()) {
  RelationCheck c{std::move(op), std::move(relation), std::move(convention), Rational(0), 0, -1, true};
  const int d = lhs.degree();
  c.valid_degrees = std::min({lhs.exact_below, rhs.exact_below, d, cap});
  c.holds_through = c.valid_degrees;
  Rational tmp;
  for (int col = 0; col <= c.valid_degrees; ++col) {
    bool clean = true;
    for (int row = 0; row <= d; ++row) {
      Rational diff = lhs(row, col) - rhs(row, col);
      if (sgn(diff) == 0) continue;
      clean = false;
      tmp = diff * diff;
      c.residual_sq += tmp;
    }
    if (!clean && c.holds_through == c.valid_degrees) c.holds_through = col - 1;
  }
  return c;
}

RelationCheck undefined(std::string op, std::string relation, std::string convention) {
  return {std::move(op), std::move(relation), std::move(convention), Rational(0), 0, -1, false};
}

LinOp<Rational> diagonal(const ExactModule& mod, const std::vector<Rational>& values) {
  return verma::diag_operator(mod, verma::DiagSymbol<Rational>{values});
}

}  // namespace

Rational Polynomial::operator()(const Rational& x) const {
  Rational acc = 0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) {
    acc *= x;
    acc += *it;
  }
  return acc;
}

int Polynomial::degree() const {
  for (int k = static_cast<int>(coeffs.size()) - 1; k >= 0; --k)
    if (sgn(coeffs[k]) != 0) return k;
  return -1;
}

std::string Polynomial::to_string() const {
  std::string out;
  for (std::size_t k = 0; k < coeffs.size(); ++k) {
    if (sgn(coeffs[k]) == 0) continue;
    if (!out.empty()) out += " + ";
    out += "(" + droem::to_string(coeffs[k]) + ")";
    if (k > 0) out += "x^" + std::to_string(k);
  }
  return out.empty() ? "0" : out;
}

Polynomial forward_difference(const Polynomial& p, int k) {
  Polynomial cur = p;
  for (int step = 0; step < k; ++step) {
    // p(x+1) by binomial expansion of each power.
    Polynomial shifted{std::vector<Rational>(cur.coeffs.size(), Rational(0))};
    for (std::size_t n = 0; n < cur.coeffs.size(); ++n) {
      mpz_class b = 1;
      for (std::size_t j = 0; j <= n; ++j) {
        Rational t = cur.coeffs[n] * Rational(b);
        shifted.coeffs[j] += t;
        b = b * static_cast<unsigned long>(n - j) / static_cast<unsigned long>(j + 1);
      }
    }
    for (std::size_t n = 0; n < cur.coeffs.size(); ++n) shifted.coeffs[n] -= cur.coeffs[n];
    cur = trim(shifted);
  }
  return cur;
}

Polynomial interp_poly(const Rational& h, int N) {
  if (N < 0) throw DomainError("cutoff degree must be >= 0");
  std::vector<Rational> values;
  for (int i = 0; i <= N; ++i) {
    Rational d = 2 * h + i;
    if (sgn(d) == 0) throw PoleError("2h + i vanishes at i = " + std::to_string(i));
    values.push_back(1 / d);
  }
  Polynomial p{std::vector<Rational>(N + 1, Rational(0))};
  for (int i = 0; i <= N; ++i) {
    // values[i] * prod_{j != i} (x - j) / (i - j)
    std::vector<Rational> basis{Rational(1)};
    Rational scale = values[i];
    for (int j = 0; j <= N; ++j) {
      if (j == i) continue;
      std::vector<Rational> next(basis.size() + 1, Rational(0));
      for (std::size_t k = 0; k < basis.size(); ++k) {
        next[k + 1] += basis[k];
        Rational t = basis[k] * j;
        next[k] -= t;
      }
      basis = std::move(next);
      scale /= Rational(i - j);
    }
    for (std::size_t k = 0; k < basis.size(); ++k) {
      Rational t = basis[k] * scale;
      p.coeffs[k] += t;
    }
  }
  return trim(p);
}

CutoffSpec make_cutoff(const ExactModule& mod, int N) { return {N, interp_poly(mod.h(), N)}; }

bool inverse_defined(const ExactModule& mod, const CutoffSpec& spec) {
  for (int i = 0; i <= mod.degree(); ++i)
    if (sgn(spec.P(Rational(i))) == 0) return false;
  return true;
}

LinOp<Rational> cutoff_current(const ExactModule& mod, const CutoffSpec& spec, int k) {
  const int d = mod.degree();
  if (k == 0 || std::abs(k) > d) throw DomainError("current index must be nonzero with |k| <= D");
  LinOp<Rational> op{Matrix<Rational>(d + 1, d + 1), 0, 0, d};
  if (k > 0) {
    op.lower = k;
    for (int i = k; i <= d; ++i) {
      Rational falling = 1;
      for (int t = 0; t < k; ++t) falling *= (i - t);
      op.matrix(i - k, i) = falling;
    }
    return op;
  }
  const int m = -k;
  const Polynomial diff = forward_difference(spec.P, m);
  op.raise = m;
  op.exact_below = d - m;
  for (int i = 0; i + m <= d; ++i) op.matrix(i + m, i) = diff(Rational(i));
  return op;
}

LinOp<Rational> literal_dilatation(const ExactModule& mod, const CutoffSpec& spec) {
  const int d = mod.degree();
  LinOp<Rational> op{Matrix<Rational>(d + 1, d + 1), 1, 0, d - 1};
  for (int i = 0; i < d; ++i) {
    Rational p = spec.P(Rational(i));
    if (sgn(p) == 0) throw PoleError("P vanishes at degree " + std::to_string(i));
    op.matrix(i + 1, i) = 1 / p;
  }
  return op;
}

double RelationCheck::residual_frobenius() const { return std::sqrt(residual_sq.get_d()); }

std::string RelationCheck::verdict() const {
  if (!defined) return "undefined";
  if (holds_through >= valid_degrees) return "holds";
  if (holds_through >= 0) return "holds-on-prefix";
  return "fails";
}

DilatationResult solve_cutoff_dilatation(const ExactModule& mod, const CutoffSpec& spec) {
  const int d = mod.degree();
  const Polynomial diff = forward_difference(spec.P);
  // [L, J_{-1}] z^i = (q_{i+1} dP(i) - q_i dP(i-1)) z^i with L z^i = q_i z^{i-1}.
  std::vector<Rational> q(d + 1, Rational(0));
  for (int i = 0; i < d; ++i) {
    Rational di = diff(Rational(i));
    if (sgn(di) == 0)
      throw DegenerateDifferenceError("forward difference of P vanishes at " + std::to_string(i));
    Rational prev = i == 0 ? Rational(0) : Rational(q[i] * diff(Rational(i - 1)));
    q[i + 1] = (1 + prev) / di;
  }
  DilatationResult out;
  out.solved = LinOp<Rational>{Matrix<Rational>(d + 1, d + 1), 0, 1, d};
  for (int i = 1; i <= d; ++i) out.solved.matrix(i - 1, i) = q[i];
  if (inverse_defined(mod, spec)) out.literal = literal_dilatation(mod, spec);

  const auto jm1 = cutoff_current(mod, spec, -1);
  const auto l0 = verma::sl2_generator(mod, 0);
  const auto id = verma::identity_op<Rational>(d);
  for (const char* name : {"solved", "literal"}) {
    const bool solved = std::string(name) == "solved";
    if (!solved && !out.literal) {
      out.checks.push_back(undefined(name, "[L1cut, J-1cut] = Id", "stated order"));
      out.checks.push_back(undefined(name, "[L1cut, L0] = L1cut", "stated order"));
      continue;
    }
    const auto& op = solved ? out.solved : *out.literal;
    out.checks.push_back(compare(name, "[L1cut, J-1cut] = Id", "stated order", verma::commutator(op, jm1), id));
    out.checks.push_back(compare(name, "[L1cut, L0] = L1cut", "stated order", verma::commutator(op, l0), op));
  }
  return out;
}

std::vector<RelationCheck> nonlinear_sl2_probe(const ExactModule& mod, const CutoffSpec& spec) {
  const int d = mod.degree();
  const Rational& h = mod.h();
  std::optional<LinOp<Rational>> solved_op;
  try {
    solved_op = solve_cutoff_dilatation(mod, spec).solved;
  } catch (const DegenerateDifferenceError&) {
  }
  std::optional<LinOp<Rational>> literal_op;
  if (inverse_defined(mod, spec)) literal_op = literal_dilatation(mod, spec);
  const auto lm1 = verma::sl2_generator(mod, -1);
  const auto l0 = verma::sl2_generator(mod, 0);

  std::vector<RelationCheck> out;
  out.push_back(compare("L0", "[L0, L-1] = L-1", "stated order", verma::commutator(l0, lm1), lm1));

  // h(x) = 1/P(x+1) - 1/P(x) at x = i (argument z d/dz) and x = i + h (argument L0).
  // first_pole is the first degree where a zero of P makes h undefined.
  auto h_symbol = [&](const Rational& offset, int& first_pole) {
    std::vector<Rational> values;
    first_pole = d + 1;
    for (int i = 0; i <= d; ++i) {
      Rational x = offset + i;
      Rational p0 = spec.P(x);
      Rational p1 = spec.P(Rational(x + 1));
      if (sgn(p0) == 0 || sgn(p1) == 0) {
        first_pole = std::min(first_pole, i);
        values.push_back(0);
        continue;
      }
      values.push_back(1 / p1 - 1 / p0);
    }
    return values;
  };

  for (const char* name : {"solved", "literal"}) {
    const auto& candidate = std::string(name) == "solved" ? solved_op : literal_op;
    if (!candidate) {
      out.push_back(undefined(name, "[L1cut, J-1cut] = Id", "stated order"));
      out.push_back(undefined(name, "[L1cut, L0] = L1cut", "stated order"));
      out.push_back(undefined(name, "[L0, L1cut] = L1cut", "reversed order"));
      out.push_back(undefined(name, "[L1cut, L-1] = h(L0)", "h(z d/dz)"));
      out.push_back(undefined(name, "[L1cut, L-1] = h(L0)", "h(z d/dz + h)"));
      continue;
    }
    const auto& op = *candidate;
    out.push_back(compare(name, "[L1cut, J-1cut] = Id", "stated order",
                          verma::commutator(op, cutoff_current(mod, spec, -1)), verma::identity_op<Rational>(d)));
    out.push_back(compare(name, "[L1cut, L0] = L1cut", "stated order", verma::commutator(op, l0), op));
    out.push_back(compare(name, "[L0, L1cut] = L1cut", "reversed order", verma::commutator(l0, op), op));
    const auto bracket = verma::commutator(op, lm1);
    for (const auto& [convention, offset] :
         {std::pair{"h(z d/dz)", Rational(0)}, std::pair{"h(z d/dz + h)", Rational(h)}}) {
      int first_pole = 0;
      auto values = h_symbol(offset, first_pole);
      if (first_pole == 0) {
        out.push_back(undefined(name, "[L1cut, L-1] = h(L0)", convention));
        continue;
      }
      out.push_back(
          compare(name, "[L1cut, L-1] = h(L0)", convention, bracket, diagonal(mod, values), first_pole - 1));
    }
  }
  return out;
}

std::optional<LinOp<Rational>> unrestricted_dilatation(const ExactModule& mod, const CutoffSpec& spec) {
  const int d = mod.degree();
  const int n = d + 1;
  const auto j = cutoff_current(mod, spec, -1);
  // Unknown X(r, c) at index r * n + c; equations (XJ - JX)(r, col) = delta for col < D.
  Matrix<Rational> a(static_cast<std::size_t>(n * d), static_cast<std::size_t>(n * n));
  std::vector<Rational> b(static_cast<std::size_t>(n * d), Rational(0));
  for (int col = 0; col < d; ++col)
    for (int r = 0; r < n; ++r) {
      const std::size_t eq = static_cast<std::size_t>(col * n + r);
      for (int k = 0; k < n; ++k) {
        if (sgn(j(k, col)) != 0) a(eq, static_cast<std::size_t>(r * n + k)) += j(k, col);
        if (sgn(j(r, k)) != 0) a(eq, static_cast<std::size_t>(k * n + col)) -= j(r, k);
      }
      if (r == col) b[eq] = 1;
    }
  auto x = linalg::solve(a, b);
  if (!x) return std::nullopt;
  LinOp<Rational> op{Matrix<Rational>(n, n), d, d, d};
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) op.matrix(r, c) = (*x)[static_cast<std::size_t>(r * n + c)];
  return op;
}

nlohmann::json probe_report(const ExactModule& mod, const CutoffSpec& spec, const std::vector<RelationCheck>& checks) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : checks) {
    out.push_back({{"h", to_string(mod.h())},
                   {"N", spec.N},
                   {"D", mod.degree()},
                   {"operator", c.op},
                   {"relation", c.relation},
                   {"convention", c.convention},
                   {"residual_frobenius", c.defined ? nlohmann::json(c.residual_frobenius()) : nlohmann::json()},
                   {"residual_sq", c.defined ? nlohmann::json(to_string(c.residual_sq)) : nlohmann::json()},
                   {"valid_degrees", c.valid_degrees},
                   {"holds_through", c.holds_through},
                   {"verdict", c.verdict()}});
  }
  return out;
}

}  // namespace droem::cutoff

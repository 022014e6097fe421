#include "droem/qpft.hpp"

#include <cmath>

#include "droem/expm.hpp"
#include "droem/linalg.hpp"

namespace droem::qpft {

using verma::ExactModule;

namespace {

Rational binom(long n, long k) {
  if (k < 0 || n < 0 || k > n) return 0;
  mpz_class r;
  mpz_bin_uiui(r.get_mpz_t(), static_cast<unsigned long>(n), static_cast<unsigned long>(k));
  return Rational(r);
}

Rational sign_power(long e) { return (e % 2 == 0) ? Rational(1) : Rational(-1); }

using Row = std::map<std::size_t, Rational>;

void add_term(Row& row, std::optional<std::size_t> var, const Rational& c) {
  if (!var || sgn(c) == 0) return;
  Rational v = row[*var] + c;
  if (sgn(v) == 0)
    row.erase(*var);
  else
    row[*var] = v;
}

Matrix<Rational> rows_to_matrix(const std::vector<Row>& rows, std::size_t cols) {
  Matrix<Rational> m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (const auto& [c, v] : rows[r]) m(r, c) = v;
  return m;
}

// Unknowns c_{n,i}: the coefficient of z^{i+s} in l_n z^i, s = n + spin.
struct Band {
  int degree;
  int n_min;
  int n_max;
  Rational spin;
  std::vector<std::size_t> offset;
  std::size_t count = 0;

  Band(int d, int lo_n, int hi_n, Rational m) : degree(d), n_min(lo_n), n_max(hi_n), spin(std::move(m)) {
    for (int n = n_min; n <= n_max; ++n) {
      offset.push_back(count);
      if (lo(n) <= hi(n)) count += static_cast<std::size_t>(hi(n) - lo(n) + 1);
    }
  }
  int shift(int n) const { return mode_shift(spin, n); }
  int lo(int n) const { return std::max(0, -shift(n)); }
  int hi(int n) const { return std::min(degree, degree - shift(n)); }
  std::optional<std::size_t> var(int n, int i) const {
    if (n < n_min || n > n_max || i < lo(n) || i > hi(n)) return std::nullopt;
    return offset[n - n_min] + static_cast<std::size_t>(i - lo(n));
  }
};

std::vector<Row> primary_equations(const ExactModule& mod, const Band& band) {
  const int d = mod.degree();
  const Rational& h = mod.h();
  const Rational& m = band.spin;
  const bool single = band.n_min == band.n_max;
  auto b = [&](int j) { return Rational(Rational(j) * (Rational(j - 1) + 2 * h)); };
  std::vector<Row> rows;

  // [L_{-1}, l_n] = -(n+1) l_{n+1}
  for (int n = band.n_min; n <= (single ? band.n_min : band.n_max - 1); ++n) {
    const int s = band.shift(n);
    for (int i = 0; i <= d - 1 - std::max(s, 0); ++i) {
      Row row;
      add_term(row, band.var(n, i), Rational(1));
      add_term(row, band.var(n, i + 1), Rational(-1));
      add_term(row, band.var(n + 1, i), Rational(n + 1));
      if (!row.empty()) rows.push_back(std::move(row));
    }
  }
  // [L_1, l_n] = -(n - 1 + 2m) l_{n-1}
  for (int n = single ? band.n_min : band.n_min + 1; n <= band.n_max; ++n) {
    const int s = band.shift(n);
    for (int i = 0; i <= d && i + s <= d; ++i) {
      Row row;
      if (i + s >= 0) add_term(row, band.var(n, i), b(i + s));
      add_term(row, band.var(n, i - 1), Rational(-b(i)));
      add_term(row, band.var(n - 1, i), Rational(Rational(n - 1) + 2 * m));
      if (!row.empty()) rows.push_back(std::move(row));
    }
  }
  return rows;
}

LaurentOpField<Rational> field_from_vector(const Band& band, const std::vector<Rational>& x) {
  std::vector<LinOp<Rational>> modes;
  for (int n = band.n_min; n <= band.n_max; ++n) {
    const int s = band.shift(n);
    LinOp<Rational> op{Matrix<Rational>(band.degree + 1, band.degree + 1), std::max(s, 0), std::max(-s, 0),
                       band.degree - std::max(s, 0)};
    for (int i = band.lo(n); i <= band.hi(n); ++i) op.matrix(i + s, i) = x[*band.var(n, i)];
    modes.push_back(std::move(op));
  }
  return make_field<Rational>(band.n_min, std::move(modes));
}

Band make_band(const ExactModule& mod, const PrimarySpec& spec) {
  if (spec.n_max < spec.n_min) throw DomainError("empty mode range");
  return Band(mod.degree(), spec.n_min, spec.n_max, spec.spin);
}

// Modes n whose relation with partner n - k was imposed by the solver.
std::vector<int> constrained_modes(const LaurentOpField<Rational>& field, int k) {
  std::vector<int> out;
  if (field.n_min == field.n_max()) return {field.n_min};
  for (int n = field.n_min; n <= field.n_max(); ++n)
    if (field.has_mode(n - k)) out.push_back(n);
  return out;
}

Rational relation_coefficient(const Rational& spin, int k, int n) {
  return sign_power(k < 0 ? -k : k) * (Rational(n - k) + Rational(k + 1) * spin);
}

const char* relation_name(int k) {
  switch (k) {
    case -1:
      return "[L_-1, l_n] = -(n+1) l_{n+1}";
    case 0:
      return "[L_0, l_n] = (n+m) l_n";
    default:
      return "[L_1, l_n] = -(n-1+2m) l_{n-1}";
  }
}

}  // namespace

int mode_shift(const Rational& spin, int n) {
  if (spin.get_den() != 1) throw DomainError("spin must be an integer so that modes shift degree by integers");
  return n + static_cast<int>(spin.get_num().get_si());
}

std::vector<LaurentOpField<Rational>> primary_field_space(const ExactModule& mod, const PrimarySpec& spec) {
  Band band = make_band(mod, spec);
  auto rows = primary_equations(mod, band);
  std::vector<LaurentOpField<Rational>> out;
  for (const auto& v : linalg::nullspace(rows_to_matrix(rows, band.count))) out.push_back(field_from_vector(band, v));
  return out;
}

LaurentOpField<Rational> solve_primary_field(const ExactModule& mod, const PrimarySpec& spec) {
  Band band = make_band(mod, spec);
  auto rows = primary_equations(mod, band);

  if (!spec.seed) {
    auto space = linalg::nullspace(rows_to_matrix(rows, band.count));
    if (space.empty())
      throw NoSolutionError("only the zero field satisfies the relations for spin " + to_string(spec.spin) +
                            " on modes [" + std::to_string(spec.n_min) + ", " + std::to_string(spec.n_max) + "]");
    auto v = space.front();
    for (const auto& c : v)
      if (sgn(c) != 0) {
        Rational inv = 1 / c;
        for (auto& x : v) x *= inv;
        break;
      }
    return field_from_vector(band, v);
  }

  const auto& seed = *spec.seed;
  if (seed.degree() != mod.degree()) throw ShapeError("seed mode acts on a different truncation");
  const int n = spec.n_min;
  const int s = band.shift(n);
  std::vector<Rational> rhs(rows.size(), Rational(0));
  for (int col = 0; col <= mod.degree(); ++col)
    for (int row = 0; row <= mod.degree(); ++row) {
      if (sgn(seed(row, col)) == 0) continue;
      if (row - col != s || !band.var(n, col))
        throw NoSolutionError("seed has entries outside the degree shift " + std::to_string(s) + " of mode " +
                              std::to_string(n));
    }
  for (int i = band.lo(n); i <= band.hi(n); ++i) {
    Row row;
    add_term(row, band.var(n, i), Rational(1));
    rows.push_back(std::move(row));
    rhs.push_back(seed(i + s, i));
  }
  auto x = linalg::solve(rows_to_matrix(rows, band.count), rhs);
  if (!x) throw NoSolutionError("seed is inconsistent with the primary-field relations");
  bool nonzero = false;
  for (const auto& c : *x) nonzero = nonzero || sgn(c) != 0;
  if (!nonzero) throw NoSolutionError("seed generates only the zero field");
  return field_from_vector(band, *x);
}

std::vector<RelationResidual> primary_residuals(const ExactModule& mod, const LaurentOpField<Rational>& field,
                                                const Rational& spin) {
  std::vector<RelationResidual> out;
  for (int k = -1; k <= 1; ++k) {
    RelationResidual r{k, relation_name(k), 0.0, true, mod.degree()};
    const auto gen = verma::sl2_generator(mod, k);
    for (int n : constrained_modes(field, k)) {
      auto lhs = verma::commutator(gen, field.mode(n));
      auto rhs = relation_coefficient(spin, k, n) * field.mode(n - k);
      const int valid = std::min(lhs.exact_below, rhs.exact_below);
      r.valid_degrees = std::min(r.valid_degrees, valid);
      for (int col = 0; col <= valid; ++col)
        for (int row = 0; row <= mod.degree(); ++row) {
          Rational diff = lhs(row, col) - rhs(row, col);
          if (sgn(diff) == 0) continue;
          r.exact_zero = false;
          r.max_residual = std::max(r.max_residual, std::abs(diff.get_d()));
        }
    }
    out.push_back(std::move(r));
  }
  return out;
}

bool primary_relation_holds_at(const ExactModule& mod, const LaurentOpField<Rational>& field, const Rational& spin,
                               int k, const GaussianRational& u) {
  using G = GaussianRational;
  if (k < -1 || k > 1) throw DomainError("relation index must be -1, 0 or 1");
  const auto gen = verma::sl2_generator(mod, k);
  LinOp<G> lhs = verma::zero_op<G>(mod.degree());
  LinOp<G> rhs = verma::zero_op<G>(mod.degree());
  for (int n : constrained_modes(field, k)) {
    G un = Laurent<G>::monomial(n, G(1)).evaluate(u);
    lhs = lhs + un * verma::convert<G>(verma::commutator(gen, field.mode(n)));
    rhs = rhs + G(un * G(relation_coefficient(spin, k, n))) * verma::convert<G>(field.mode(n - k));
  }
  return verma::agree_on(lhs, rhs, std::min(lhs.exact_below, rhs.exact_below));
}

// ---------------------------------------------------------------------------

OpeFit ope_structure(const LaurentOpField<Rational>& a, const LaurentOpField<Rational>& b,
                     const std::vector<LaurentOpField<Rational>>& candidates, const OpeOptions& options) {
  if (a.degree != b.degree) throw ShapeError("fields act on different truncations");
  for (const auto& c : candidates)
    if (c.degree != a.degree) throw ShapeError("candidate field acts on a different truncation");
  if (options.p_max < options.p_min) throw DomainError("empty power range for structure coefficients");
  if (options.p_min + options.r0 < 0) throw DomainError("pole order r0 too small for the requested powers");

  using Key = std::pair<int, int>;  // (power of v, power of u)
  const int dim = a.degree + 1;
  int valid = a.degree;

  std::map<Key, Matrix<Rational>> lhs;
  auto accumulate = [&](std::map<Key, Matrix<Rational>>& target, Key key, const Rational& c,
                        const Matrix<Rational>& m) {
    auto it = target.try_emplace(key, dim, dim).first;
    it->second += c * m;
  };

  for (int n = a.n_min; n <= a.n_max(); ++n) {
    const auto& an = a.modes[n - a.n_min];
    if (an.matrix.is_zero()) continue;
    for (int m = b.n_min; m <= b.n_max(); ++m) {
      const auto& bm = b.modes[m - b.n_min];
      if (bm.matrix.is_zero()) continue;
      auto p = verma::compose(an, bm);
      valid = std::min(valid, p.exact_below);
      for (int j = 0; j <= options.r0; ++j)
        accumulate(lhs, {n + j, m + options.r0 - j}, Rational(binom(options.r0, j) * sign_power(options.r0 - j)),
                   p.matrix);
    }
  }

  const int powers = options.p_max - options.p_min + 1;
  const std::size_t unknowns = candidates.size() * static_cast<std::size_t>(powers);
  std::vector<std::map<Key, Matrix<Rational>>> rhs(unknowns);
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const auto& c = candidates[k];
    for (const auto& mode : c.modes)
      if (!mode.matrix.is_zero()) valid = std::min(valid, mode.exact_below);
    for (int p = options.p_min; p <= options.p_max; ++p) {
      auto& target = rhs[k * powers + (p - options.p_min)];
      const int e = p + options.r0;
      for (int j = 0; j <= e; ++j)
        for (int cm = c.n_min; cm <= c.n_max(); ++cm) {
          const auto& mode = c.modes[cm - c.n_min];
          if (mode.matrix.is_zero()) continue;
          accumulate(target, {j, e - j + cm}, Rational(binom(e, j) * sign_power(e - j)), mode.matrix);
        }
    }
  }

  std::map<Key, bool> keys;
  for (const auto& [key, m] : lhs) keys[key] = true;
  for (const auto& r : rhs)
    for (const auto& [key, m] : r) keys[key] = true;

  // Normal equations over all matched entries.
  Matrix<Rational> normal(unknowns, unknowns);
  std::vector<Rational> moment(unknowns, Rational(0));
  std::vector<const Matrix<Rational>*> column(unknowns);
  std::vector<Rational> x(unknowns);
  std::vector<std::size_t> active;
  Rational tmp;
  auto for_each_entry = [&](auto&& visit) {
    for (const auto& [key, present] : keys) {
      auto lit = lhs.find(key);
      const Matrix<Rational>* y = lit == lhs.end() ? nullptr : &lit->second;
      for (std::size_t u = 0; u < unknowns; ++u) {
        auto it = rhs[u].find(key);
        column[u] = it == rhs[u].end() ? nullptr : &it->second;
      }
      for (int col = 0; col <= valid; ++col)
        for (int row = 0; row < dim; ++row) {
          active.clear();
          for (std::size_t u = 0; u < unknowns; ++u)
            if (column[u] && sgn((*column[u])(row, col)) != 0) active.push_back(u);
          Rational yv = y ? (*y)(row, col) : Rational(0);
          if (active.empty() && sgn(yv) == 0) continue;
          visit(row, col, yv);
        }
    }
  };

  for_each_entry([&](int row, int col, const Rational& yv) {
    for (std::size_t u : active) {
      const Rational& xu = (*column[u])(row, col);
      for (std::size_t w : active) {
        tmp = xu * (*column[w])(row, col);
        normal(u, w) += tmp;
      }
      tmp = xu * yv;
      moment[u] += tmp;
    }
  });

  auto tau = unknowns == 0 ? std::optional<std::vector<Rational>>(std::vector<Rational>{})
                           : linalg::solve(normal, moment);
  if (!tau) throw Error("normal equations unexpectedly inconsistent");

  OpeFit fit;
  fit.valid_degrees = valid;
  fit.residual_sq = 0;
  for_each_entry([&](int row, int col, const Rational& yv) {
    Rational r = -yv;
    for (std::size_t u : active) {
      tmp = (*tau)[u] * (*column[u])(row, col);
      r += tmp;
    }
    tmp = r * r;
    fit.residual_sq += tmp;
  });
  fit.closed = sgn(fit.residual_sq) == 0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    Laurent<Rational> t;
    for (int p = options.p_min; p <= options.p_max; ++p) t.set(p, (*tau)[k * powers + (p - options.p_min)]);
    fit.coefficients.push_back(std::move(t));
  }
  if (options.require_closed && !fit.closed)
    throw NotClosedError("no combination of the candidate fields reproduces the product (residual^2 = " +
                         to_string(fit.residual_sq) + ")");
  return fit;
}

std::vector<LaurentOpField<Rational>> taylor_composites(const LaurentOpField<Rational>& a,
                                                        const LaurentOpField<Rational>& b) {
  if (a.degree != b.degree) throw ShapeError("fields act on different truncations");
  if (a.has_negative_modes()) throw ShapeError("Taylor composites need a field without negative modes");
  std::vector<LaurentOpField<Rational>> out;
  const int top = std::max(a.n_max(), 0);
  for (int j = 0; j <= top; ++j) {
    const int lo = b.n_min;
    const int hi = std::max(a.n_max() - j + b.n_max(), lo);
    std::vector<LinOp<Rational>> modes(hi - lo + 1, verma::zero_op<Rational>(a.degree));
    for (int n = std::max(j, a.n_min); n <= a.n_max(); ++n) {
      const auto& an = a.modes[n - a.n_min];
      if (an.matrix.is_zero()) continue;
      for (int m = b.n_min; m <= b.n_max(); ++m) {
        const auto& bm = b.modes[m - b.n_min];
        if (bm.matrix.is_zero()) continue;
        auto& slot = modes[n - j + m - lo];
        slot = slot + binom(n, j) * verma::compose(an, bm);
      }
    }
    out.push_back(make_field<Rational>(lo, std::move(modes)));
  }
  return out;
}

Laurent<Rational> renormalized_coefficient(const Laurent<Rational>& t, const Laurent<Rational>& f,
                                           const Laurent<Rational>& g) {
  Laurent<Rational> h;
  for (const auto& [p, tp] : t.terms()) {
    if (p >= 0) {
      // (v-u)^p = sum_j binom(p,j) v^j (-u)^{p-j}
      for (int j = 0; j <= p; ++j) {
        Rational fj = f.coeff(-j);
        if (sgn(fj) == 0) continue;
        h.add(p - j, Rational(tp * binom(p, j) * fj * sign_power(p - j)));
      }
    } else if (!f.is_zero()) {
      // |v| > |u|: (v-u)^{-q} = sum_j binom(q+j-1, j) u^j v^{-q-j}
      const int q = -p;
      for (int j = std::max(0, f.min_power() - q); j <= f.max_power() - q; ++j) {
        Rational fj = f.coeff(q + j);
        if (sgn(fj) == 0) continue;
        h.add(j, Rational(tp * binom(q + j - 1, j) * fj));
      }
    }
  }
  return h * g;
}

LinOp<Rational> local_product(const LaurentOpField<Rational>& a, const Laurent<Rational>& f,
                              const LaurentOpField<Rational>& b, const Laurent<Rational>& g,
                              const std::vector<LaurentOpField<Rational>>& candidates, const OpeFit& structure) {
  if (candidates.empty() || structure.coefficients.size() != candidates.size())
    throw MissingStructureError("no structure coefficients for this pair of fields");
  if (a.degree != b.degree) throw ShapeError("fields act on different truncations");
  LinOp<Rational> out = verma::zero_op<Rational>(a.degree);
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    auto h = renormalized_coefficient(structure.coefficients[k], f, g);
    if (!h.is_zero()) out = out + smear(candidates[k], h);
  }
  return out;
}

StructureField<Rational> structure_from_fields(const std::vector<LaurentOpField<Rational>>& fields,
                                               const OpeOptions& options, bool* all_closed) {
  StructureField<Rational> s;
  s.dim = fields.size();
  bool closed = true;
  for (std::size_t i = 0; i < fields.size(); ++i)
    for (std::size_t j = 0; j < fields.size(); ++j) {
      auto fit = ope_structure(fields[i], fields[j], fields, options);
      closed = closed && fit.closed;
      for (std::size_t k = 0; k < fields.size(); ++k)
        if (!fit.coefficients[k].is_zero()) s.t[{i, j, k}] = fit.coefficients[k];
    }
  if (all_closed) *all_closed = closed;
  return s;
}

QftAxiomReport check_qft_axiom(const StructureField<Rational>& structure,
                               const std::vector<std::pair<Complex, Complex>>& samples) {
  const std::size_t n = structure.dim;
  auto table = [&](Complex x, const char* label) {
    std::vector<Complex> out(n * n * n, Complex(0.0, 0.0));
    for (const auto& [idx, t] : structure.t) {
      try {
        out[(idx[0] * n + idx[1]) * n + idx[2]] = t.evaluate(x);
      } catch (const EvalDomainError&) {
        throw SingularSampleError(std::string("sample hits a pole of the structure field at ") + label);
      }
    }
    return out;
  };
  auto at = [n](const std::vector<Complex>& t, std::size_t i, std::size_t j, std::size_t k) {
    return t[(i * n + j) * n + k];
  };

  QftAxiomReport report;
  for (const auto& [x, y] : samples) {
    auto tx = table(x, "x");
    auto ty = table(y, "y");
    auto txy = table(x - y, "x - y");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k)
          for (std::size_t l = 0; l < n; ++l) {
            Complex left = 0.0;
            Complex right = 0.0;
            for (std::size_t m = 0; m < n; ++m) {
              left += at(tx, i, m, l) * at(ty, j, k, m);
              right += at(txy, i, j, m) * at(ty, m, k, l);
            }
            report.max_deviation = std::max(report.max_deviation, std::abs(left - right));
          }
    ++report.samples;
  }
  return report;
}

// ---------------------------------------------------------------------------

namespace {

Matrix<Rational> unit_matrix(int degree, int r, int c) {
  Matrix<Rational> m(degree + 1, degree + 1);
  m(r, c) = 1;
  return m;
}

template <class S>
Matrix<S> ad(const Matrix<S>& n, const Matrix<S>& a) {
  return n * a - a * n;
}

}  // namespace

TranslationAlgebra TranslationAlgebra::full(int degree) {
  std::vector<Matrix<Rational>> basis;
  for (int r = 0; r <= degree; ++r)
    for (int c = 0; c <= degree; ++c) basis.push_back(unit_matrix(degree, r, c));
  return TranslationAlgebra(degree, std::move(basis));
}

TranslationAlgebra TranslationAlgebra::lower_triangular(int degree) {
  std::vector<Matrix<Rational>> basis;
  for (int r = 0; r <= degree; ++r)
    for (int c = 0; c <= r; ++c) basis.push_back(unit_matrix(degree, r, c));
  return TranslationAlgebra(degree, std::move(basis));
}

TranslationAlgebra TranslationAlgebra::strictly_lower_triangular(int degree) {
  std::vector<Matrix<Rational>> basis;
  for (int r = 1; r <= degree; ++r)
    for (int c = 0; c < r; ++c) basis.push_back(unit_matrix(degree, r, c));
  return TranslationAlgebra(degree, std::move(basis));
}

TranslationAlgebra::TranslationAlgebra(int degree, std::vector<Matrix<Rational>> basis)
    : degree_(degree), basis_(std::move(basis)), shift_(degree + 1, degree + 1) {
  if (degree < 1) throw DomainError("translation algebra needs degree >= 1");
  if (basis_.empty()) throw ShapeError("empty algebra basis");
  const std::size_t n = static_cast<std::size_t>(degree + 1);
  for (int i = 0; i < degree; ++i) shift_(i + 1, i) = 1;
  coord_system_ = Matrix<Rational>(n * n, basis_.size());
  for (std::size_t k = 0; k < basis_.size(); ++k) {
    if (basis_[k].rows() != n || basis_[k].cols() != n) throw ShapeError("basis matrix has the wrong size");
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) coord_system_(r * n + c, k) = basis_[k](r, c);
  }
  if (linalg::rank(coord_system_) != basis_.size()) throw ShapeError("algebra basis is linearly dependent");
}

std::vector<Rational> TranslationAlgebra::coordinates(const Matrix<Rational>& m) const {
  const std::size_t n = static_cast<std::size_t>(degree_ + 1);
  std::vector<Rational> rhs(n * n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) rhs[r * n + c] = m(r, c);
  auto x = linalg::solve(coord_system_, rhs);
  if (!x) throw ShapeError("matrix lies outside the algebra");
  return *x;
}

Matrix<Rational> TranslationAlgebra::element(const std::vector<Rational>& coords) const {
  if (coords.size() != basis_.size()) throw ShapeError("coordinate vector has the wrong length");
  Matrix<Rational> m(degree_ + 1, degree_ + 1);
  for (std::size_t k = 0; k < coords.size(); ++k)
    if (sgn(coords[k]) != 0) m += coords[k] * basis_[k];
  return m;
}

Matrix<Rational> TranslationAlgebra::translate(const Matrix<Rational>& a, const Rational& x) const {
  Matrix<Rational> sum = a;
  Matrix<Rational> term = a;
  for (int p = 1; !term.is_zero(); ++p) {
    term = ad(shift_, term) * Rational(x / p);
    sum += term;
  }
  return sum;
}

Matrix<Complex> TranslationAlgebra::translate(const Matrix<Complex>& a, Complex x) const {
  const auto n = convert<Complex>(shift_);
  Matrix<Complex> sum = a;
  Matrix<Complex> term = a;
  for (int p = 1; p <= 2 * degree_ + 1; ++p) {
    term = ad(n, term) * (x / static_cast<double>(p));
    sum += term;
  }
  return sum;
}

std::vector<Rational> TranslationAlgebra::unit() const {
  try {
    return coordinates(Matrix<Rational>::identity(degree_ + 1));
  } catch (const ShapeError&) {
    throw NoUnitError("the identity is not in the algebra");
  }
}

StructureField<Rational> TranslationAlgebra::structure() const {
  StructureField<Rational> s;
  s.dim = basis_.size();
  for (std::size_t i = 0; i < basis_.size(); ++i) {
    // (ad N)^p E_i / p!
    std::vector<Matrix<Rational>> powers{basis_[i]};
    while (true) {
      Matrix<Rational> next = ad(shift_, powers.back()) * Rational(1, static_cast<long>(powers.size()));
      if (next.is_zero()) break;
      powers.push_back(std::move(next));
    }
    for (std::size_t j = 0; j < basis_.size(); ++j)
      for (std::size_t p = 0; p < powers.size(); ++p) {
        auto c = coordinates(powers[p] * basis_[j]);
        for (std::size_t k = 0; k < c.size(); ++k) {
          if (sgn(c[k]) == 0) continue;
          auto& t = s.t[{i, j, k}];
          t.add(static_cast<int>(p), c[k]);
          if (t.is_zero()) s.t.erase({i, j, k});
        }
      }
  }
  return s;
}

std::vector<LaurentOpField<Rational>> TranslationAlgebra::fields() const {
  std::vector<LaurentOpField<Rational>> out;
  for (const auto& e : basis_) {
    std::vector<LinOp<Rational>> modes;
    Matrix<Rational> term = e;
    for (int p = 1; !term.is_zero(); ++p) {
      modes.push_back({term, 0, 0, degree_});
      term = ad(shift_, term) * Rational(1, p);
    }
    out.push_back(make_field<Rational>(0, std::move(modes)));
  }
  return out;
}

Matrix<Rational> infinitesimal_translation(const TranslationAlgebra& algebra) {
  algebra.unit();
  const std::size_t n = algebra.dim();
  Matrix<Rational> l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    auto c = algebra.coordinates(ad(algebra.shift(), algebra.basis()[i]));
    for (std::size_t k = 0; k < n; ++k) l(k, i) = c[k];
  }
  return l;
}

TranslationReport check_translations(const TranslationAlgebra& algebra, const std::vector<Complex>& xs) {
  const auto l = convert<Complex>(infinitesimal_translation(algebra));
  const auto n = convert<Complex>(algebra.shift());
  const auto id = Matrix<Complex>::identity(algebra.degree() + 1);
  std::vector<Matrix<Complex>> basis;
  for (const auto& e : algebra.basis()) basis.push_back(convert<Complex>(e));
  auto max_abs = [](const Matrix<Complex>& m) {
    double best = 0.0;
    for (const auto& x : m.data()) best = std::max(best, std::abs(x));
    return best;
  };

  TranslationReport report;
  for (Complex x : xs) {
    report.unit_deviation = std::max(report.unit_deviation, max_abs(algebra.translate(id, x) - id));
    const auto exp_xl = expm(l * x);
    for (std::size_t i = 0; i < basis.size(); ++i) {
      const auto& phi = basis[i];
      const auto t_phi = algebra.translate(phi, x);
      const auto t_lphi = algebra.translate(ad(n, phi), x);
      report.unit_deviation = std::max(report.unit_deviation, max_abs(algebra.translate(phi, Complex(0.0)) - phi));
      for (const auto& psi : basis) {
        auto lhs = ad(n, t_phi * psi) - t_phi * ad(n, psi);
        report.derivation_deviation = std::max(report.derivation_deviation, max_abs(lhs - t_lphi * psi));
      }
      Matrix<Complex> series(phi.rows(), phi.cols());
      for (std::size_t k = 0; k < basis.size(); ++k) series += exp_xl(k, i) * basis[k];
      report.exponential_deviation = std::max(report.exponential_deviation, max_abs(t_phi * id - series));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

}  // namespace droem::qpft

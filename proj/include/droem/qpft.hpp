#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "droem/laurent.hpp"
#include "droem/verma.hpp"

namespace droem::qpft {

using verma::LinOp;

/// phi(u) = sum_n l_n u^n, modes stored contiguously from n_min.
template <class S>
struct LaurentOpField {
  int degree = 0;
  int n_min = 0;
  std::vector<LinOp<S>> modes;

  int n_max() const { return n_min + static_cast<int>(modes.size()) - 1; }
  bool has_mode(int n) const { return n >= n_min && n <= n_max(); }
  LinOp<S> mode(int n) const { return has_mode(n) ? modes[n - n_min] : verma::zero_op<S>(degree); }

  int exact_below() const {
    int eb = degree;
    for (const auto& m : modes) eb = std::min(eb, m.exact_below);
    return eb;
  }

  bool has_negative_modes() const {
    for (int n = n_min; n < 0 && n <= n_max(); ++n)
      if (!modes[n - n_min].matrix.is_zero()) return true;
    return false;
  }
};

template <class S>
LaurentOpField<S> make_field(int n_min, std::vector<LinOp<S>> modes) {
  if (modes.empty()) throw ShapeError("a field needs at least one mode");
  const int degree = modes.front().degree();
  for (const auto& m : modes)
    if (m.degree() != degree) throw ShapeError("field modes act on different truncations");
  return {degree, n_min, std::move(modes)};
}

/// Single mode n = 0.
template <class S>
LaurentOpField<S> constant_field(const LinOp<S>& op) {
  return make_field<S>(0, {op});
}

template <class S>
LaurentOpField<S> identity_field(int degree) {
  return constant_field(verma::identity_op<S>(degree));
}

template <class S>
LaurentOpField<S> zero_field(int degree) {
  return constant_field(verma::zero_op<S>(degree));
}

template <class To, class From>
LaurentOpField<To> convert(const LaurentOpField<From>& f) {
  LaurentOpField<To> out{f.degree, f.n_min, {}};
  for (const auto& m : f.modes) out.modes.push_back(verma::convert<To>(m));
  return out;
}

/// sum_n l_n u^n at a point; u = 0 is rejected when negative modes are present.
template <class T, class S>
LinOp<T> evaluate(const LaurentOpField<S>& field, const T& u) {
  if (ScalarTraits<T>::is_zero(u) && field.has_negative_modes())
    throw EvalDomainError("field with negative modes evaluated at u = 0");
  LinOp<T> out = verma::zero_op<T>(field.degree);
  for (int n = field.n_min; n <= field.n_max(); ++n) {
    const auto& m = field.modes[n - field.n_min];
    if (m.matrix.is_zero()) continue;
    T un = Laurent<T>::monomial(n, ScalarTraits<T>::from_int(1)).evaluate(u);
    out = out + un * verma::convert<T>(m);
  }
  return out;
}

/// d/du: mode n of the result is (n+1) l_{n+1}.
template <class S>
LaurentOpField<S> derivative(const LaurentOpField<S>& field) {
  std::vector<LinOp<S>> modes;
  for (int n = field.n_min; n <= field.n_max(); ++n)
    modes.push_back(ScalarTraits<S>::from_int(n) * field.modes[n - field.n_min]);
  return make_field<S>(field.n_min - 1, std::move(modes));
}

/// phi(f) = sum_n l_n [u^{-n}] f.
template <class S>
LinOp<S> smear(const LaurentOpField<S>& field, const Laurent<S>& f) {
  LinOp<S> out = verma::zero_op<S>(field.degree);
  for (const auto& [p, c] : f.terms())
    if (field.has_mode(-p)) out = out + c * field.mode(-p);
  return out;
}

// ---------------------------------------------------------------------------
// Primary fields

struct PrimarySpec {
  Rational spin;
  int n_min = 0;
  int n_max = 0;
  /// Prescribed lowest mode; without it the solution is normalized so its
  /// first nonzero coefficient is 1.
  std::optional<LinOp<Rational>> seed;
};

/// Mode n shifts degree by n + spin.
int mode_shift(const Rational& spin, int n);

/// Basis of all solutions of the mode relations on the window. With two or
/// more modes a relation is imposed only when both modes it links are in
/// the window; a single mode must satisfy the relations with its
/// neighbours set to zero.
std::vector<LaurentOpField<Rational>> primary_field_space(const verma::ExactModule& mod, const PrimarySpec& spec);

LaurentOpField<Rational> solve_primary_field(const verma::ExactModule& mod, const PrimarySpec& spec);

struct RelationResidual {
  int k = 0;
  std::string relation;
  double max_residual = 0.0;
  bool exact_zero = true;
  int valid_degrees = 0;
};

/// Checks [L_k, l_n] = (-1)^k (n - k + (k+1) m) l_{n-k} for k in {-1, 0, 1}
/// on every mode pair the solver constrained, independently of the solver.
std::vector<RelationResidual> primary_residuals(const verma::ExactModule& mod, const LaurentOpField<Rational>& field,
                                                const Rational& spin);

/// The same relation summed against u^n at an exact Gaussian-rational point,
/// over the modes n whose partner n - k lies in the window. Returns true
/// when both sides agree on the valid columns.
bool primary_relation_holds_at(const verma::ExactModule& mod, const LaurentOpField<Rational>& field,
                               const Rational& spin, int k, const GaussianRational& u);

// ---------------------------------------------------------------------------
// Operator product expansion

/// t^k_ij(x) for basis indices i, j, k.
template <class S>
struct StructureField {
  std::size_t dim = 0;
  std::map<std::array<std::size_t, 3>, Laurent<S>> t;

  Laurent<S> get(std::size_t i, std::size_t j, std::size_t k) const {
    auto it = t.find({i, j, k});
    return it == t.end() ? Laurent<S>() : it->second;
  }
};

struct OpeOptions {
  /// Both sides are multiplied by (v - u)^r0 before matching, so t may have
  /// poles of order up to r0 at v = u.
  int r0 = 0;
  int p_min = 0;
  int p_max = 4;
  bool require_closed = false;
};

/// A(v) B(u) ~ sum_k t_k(v - u) C_k(u), with t_k in powers of w = v - u.
struct OpeFit {
  std::vector<Laurent<Rational>> coefficients;
  Rational residual_sq;
  bool closed = false;
  int valid_degrees = 0;
};

/// Exact least squares for the Laurent coefficients of t over a candidate
/// basis; entries are matched on input degrees up to the joint exact range.
OpeFit ope_structure(const LaurentOpField<Rational>& a, const LaurentOpField<Rational>& b,
                     const std::vector<LaurentOpField<Rational>>& candidates, const OpeOptions& options = {});

/// C_j(u) = sum_n binom(n, j) a_n u^{n-j} B(u); A(v) B(u) = sum_j (v-u)^j C_j(u)
/// holds exactly when A has no negative modes.
std::vector<LaurentOpField<Rational>> taylor_composites(const LaurentOpField<Rational>& a,
                                                        const LaurentOpField<Rational>& b);

/// sum_k phi_k(h_k) with h_k(u) = Res_{v=u} t_k(v-u) f(v) dv/v * g(u), the
/// residue taken in the expansion |v| > |u| that A(v) B(u) lives in.
LinOp<Rational> local_product(const LaurentOpField<Rational>& a, const Laurent<Rational>& f,
                              const LaurentOpField<Rational>& b, const Laurent<Rational>& g,
                              const std::vector<LaurentOpField<Rational>>& candidates, const OpeFit& structure);

/// Coefficient function h_k for one structure coefficient t.
Laurent<Rational> renormalized_coefficient(const Laurent<Rational>& t, const Laurent<Rational>& f,
                                           const Laurent<Rational>& g);

/// Runs ope_structure for every ordered pair of the given fields against the
/// same list, producing t^k_ij. all_closed reports whether every fit closed.
StructureField<Rational> structure_from_fields(const std::vector<LaurentOpField<Rational>>& fields,
                                               const OpeOptions& options, bool* all_closed = nullptr);

struct QftAxiomReport {
  double max_deviation = 0.0;
  std::size_t samples = 0;
};

/// sum_m t^l_im(x) t^m_jk(y) against sum_m t^m_ij(x-y) t^l_mk(y).
QftAxiomReport check_qft_axiom(const StructureField<Rational>& structure,
                               const std::vector<std::pair<Complex, Complex>>& samples);

// ---------------------------------------------------------------------------
// An algebra with unit and translations: a subalgebra of End(C^{D+1}) closed
// under ad N, N the truncated raising operator, with l_x(a) b = (e^{x ad N} a) b.

class TranslationAlgebra {
 public:
  static TranslationAlgebra full(int degree);
  static TranslationAlgebra lower_triangular(int degree);
  static TranslationAlgebra strictly_lower_triangular(int degree);
  TranslationAlgebra(int degree, std::vector<Matrix<Rational>> basis);

  int degree() const { return degree_; }
  std::size_t dim() const { return basis_.size(); }
  const std::vector<Matrix<Rational>>& basis() const { return basis_; }
  const Matrix<Rational>& shift() const { return shift_; }

  /// Coordinates in the basis; ShapeError when the matrix is outside the span.
  std::vector<Rational> coordinates(const Matrix<Rational>& m) const;
  Matrix<Rational> element(const std::vector<Rational>& coords) const;

  /// e^{x ad N} a, a polynomial in x since N is nilpotent.
  Matrix<Rational> translate(const Matrix<Rational>& a, const Rational& x) const;
  Matrix<Complex> translate(const Matrix<Complex>& a, Complex x) const;

  /// Coordinates of the unit; NoUnitError when the identity is not in the span.
  std::vector<Rational> unit() const;

  StructureField<Rational> structure() const;

  /// F_i(x) = e^{x ad N} E_i as polynomial operator fields.
  std::vector<LaurentOpField<Rational>> fields() const;

 private:
  int degree_;
  std::vector<Matrix<Rational>> basis_;
  Matrix<Rational> shift_;
  Matrix<Rational> coord_system_;
};

/// Matrix of L = ad N on the algebra's coordinates. NoUnitError without unit.
Matrix<Rational> infinitesimal_translation(const TranslationAlgebra& algebra);

struct TranslationReport {
  double derivation_deviation = 0.0;   // [L, l_x(phi)] - l_x(L phi)
  double exponential_deviation = 0.0;  // l_x(phi) 1 - exp(x L) phi
  double unit_deviation = 0.0;         // l_x(1) - Id, l_0(phi) - phi
};

TranslationReport check_translations(const TranslationAlgebra& algebra, const std::vector<Complex>& xs);

// ---------------------------------------------------------------------------

inline constexpr double kAnnulusInner = 0.05;
inline constexpr double kAnnulusOuter = 0.95;

template <class S>
LinOp<Complex> angular_field_impl(const std::vector<LaurentOpField<S>>& primaries, const std::vector<Complex>& M, Complex u,
                             Complex udot) {
  if (primaries.empty() || primaries.size() > 3) throw ShapeError("angular field takes one to three terms");
  if (primaries.size() != M.size()) throw ShapeError("one coefficient M_i per primary field is required");
  const int degree = primaries.front().degree;
  LinOp<Complex> out = verma::zero_op<Complex>(degree);
  Complex power = 1.0;
  for (std::size_t i = 0; i < primaries.size(); ++i) {
    const auto& v = primaries[i];
    if (v.degree != degree) throw ShapeError("primary fields act on different truncations");
    power *= udot;
    if (v.has_negative_modes()) {
      const double r = std::abs(u);
      if (r == 0.0) throw EvalDomainError("field with negative modes evaluated at u = 0");
      if (r < kAnnulusInner || r > kAnnulusOuter)
        throw EvalDomainError("|u| outside the evaluation annulus for a field with negative modes");
    }
    if (M[i] == Complex(0.0)) continue;
    out = out + (M[i] * power) * evaluate<Complex>(v, u);
  }
  return out;
}

/// A(u, u') = sum_i M_i u'^i V_i(u), i = 1..n, in complex double.
inline LinOp<Complex> angular_field(const std::vector<LaurentOpField<Rational>>& primaries, const std::vector<Complex>& M,
                                    Complex u, Complex udot) {
  return angular_field_impl(primaries, M, u, udot);
}

/// The same sum over fields already converted to complex double.
inline LinOp<Complex> angular_field(const std::vector<LaurentOpField<Complex>>& primaries, const std::vector<Complex>& M,
                                    Complex u, Complex udot) {
  return angular_field_impl(primaries, M, u, udot);
}

}  // namespace droem::qpft

#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "droem/expm.hpp"
#include "droem/verma.hpp"

// Infinite-dimensional symmetry generators on a truncated Verma module.
//
// Vector fields L_n with n >= -1 act through the W_1 representation T, and
// L_n with n <= -2 through the contravariant adjoint of T(L_{-n}). The
// abelian currents J_n = d^n (n >= 0) extend this to the semidirect sum with
// C[z]; J_{-n} is the adjoint of J_n. Defects of the bracket relations are
// measured in the orthonormal basis z^i / sqrt(G_i) of the contravariant form.

namespace droem::symmetries {

using verma::Gram;
using verma::LinOp;
using verma::VermaModule;

enum class Kind { VectorField, AbelianCurrent };
enum class Construction { T, TStar };

std::string to_string(Kind k);
Kind parse_kind(const std::string& s);

template <class S>
struct ExtendedGenerator {
  int n = 0;
  Kind kind = Kind::VectorField;
  LinOp<S> op;
  Construction construction = Construction::T;
};

template <class S>
LinOp<S> derivative_power(const VermaModule<S>& mod, int k) {
  const int d = mod.degree();
  LinOp<S> op{Matrix<S>(d + 1, d + 1), 0, k, d};
  for (int i = k; i <= d; ++i) {
    Rational falling = 1;
    for (int t = 0; t < k; ++t) falling *= (i - t);
    op.matrix(i - k, i) = ScalarTraits<S>::from_rational(falling);
  }
  return op;
}

/// rho(L_n) or rho(J_n). DomainError on |n| > D, UnitarizabilityError when an
/// adjoint is needed and h <= 0.
template <class S>
ExtendedGenerator<S> extended_generator(const VermaModule<S>& mod, int n, Kind kind) {
  if (std::abs(n) > mod.degree())
    throw DomainError("generator index " + std::to_string(n) + " exceeds truncation degree " +
                      std::to_string(mod.degree()));
  const bool direct = kind == Kind::VectorField ? n >= -1 : n >= 0;
  if (direct) {
    LinOp<S> op = kind == Kind::VectorField ? verma::vector_field_generator(mod, n) : derivative_power(mod, n);
    return {n, kind, std::move(op), Construction::T};
  }
  if (sgn(mod.h()) <= 0)
    throw UnitarizabilityError("adjoint generators need a unitarizable weight h > 0, got h=" +
                               droem::to_string(mod.h()));
  auto gram = verma::shapovalov_form(mod);
  LinOp<S> base = kind == Kind::VectorField ? verma::vector_field_generator(mod, -n) : derivative_power(mod, -n);
  return {n, kind, verma::adjoint(base, gram), Construction::TStar};
}

/// The bracket the symmetry algebra prescribes: (m-n) L_{m+n}, -n J_{m+n},
/// m J_{m+n} or 0 depending on the kinds.
template <class S>
LinOp<S> expected_bracket(const VermaModule<S>& mod, int m, Kind km, int n, Kind kn) {
  if (km == Kind::AbelianCurrent && kn == Kind::AbelianCurrent) return verma::zero_op<S>(mod.degree());
  long coef = 0;
  Kind target = Kind::AbelianCurrent;
  if (km == Kind::VectorField && kn == Kind::VectorField) {
    coef = m - n;
    target = Kind::VectorField;
  } else if (km == Kind::VectorField) {
    coef = -n;
  } else {
    coef = m;
  }
  if (coef == 0) return verma::zero_op<S>(mod.degree());
  return ScalarTraits<S>::from_int(coef) * extended_generator(mod, m + n, target).op;
}

/// Operator in the orthonormal basis: X_ij sqrt(G_i / G_j).
template <class S>
Matrix<Complex> to_orthonormal(const LinOp<S>& a, const Gram<S>& gram) {
  const std::size_t n = a.matrix.rows();
  Matrix<Complex> out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (ScalarTraits<S>::is_zero(a(i, j))) continue;
      const double scale = std::sqrt(ScalarTraits<S>::to_complex(gram.ratio(i, j)).real());
      out(i, j) = ScalarTraits<S>::to_complex(a(i, j)) * scale;
    }
  return out;
}

/// Frobenius norms of the leading (d+1)x(d+1) block for d = d0..D.
std::vector<double> tail_norms(const Matrix<Complex>& a, int d0);

struct DefectReport {
  int m = 0;
  int n = 0;
  Kind kind_m = Kind::VectorField;
  Kind kind_n = Kind::VectorField;
  Rational h;
  int degree = 0;
  int d0 = 0;
  /// Gram-weighted (orthonormal-basis) norms, then raw monomial-basis norms.
  std::vector<double> tail_norms;
  std::vector<double> raw_tail_norms;
  /// Inputs of degree <= valid_degrees are free of truncation loss; columns
  /// above it are zeroed before any norm is taken.
  int valid_degrees = 0;
  bool exact_zero = false;
  /// The defect matrix itself, orthonormal basis.
  Matrix<Complex> orthonormal;

  double hbar() const;
  /// Norm on the window of degrees 0..d.
  double window_norm(int d) const;
  /// (norm(D) - norm(ceil(3D/4))) / norm(D); 0 when the defect vanishes.
  double convergence_indicator() const;
};

/// D(m,n) = [rho(X_m), rho(Y_n)] - expected bracket, computed exactly.
DefectReport defect(const verma::ExactModule& mod, int m, int n, Kind km = Kind::VectorField,
                    Kind kn = Kind::VectorField, int d0 = 0);

struct ScanPair {
  int m = 0;
  int n = 0;
  Kind km = Kind::VectorField;
  Kind kn = Kind::VectorField;
};

struct ScanResult {
  ScanPair pair;
  std::vector<Rational> hbar;
  /// Window norm of D_h - D_{1/2}, orthonormal basis.
  std::vector<double> metric;
  /// Window norm of D_h itself, for comparison.
  std::vector<double> raw_metric;
  /// Rank and highest supporting degree of the h = 1/2 defect on the window.
  int rank_at_zero = 0;
  int support_at_zero = -1;
  /// "exact" when every defect vanishes, "fitted" otherwise.
  std::string status;
  double exponent = 0.0;
  double log_residual = 0.0;
  double raw_exponent = 0.0;
};

struct ScanOptions {
  int degree = 32;
  int window = 12;
};

/// Log-log fit of the defect against hbar = h - 1/2 for each pair.
/// InsufficientDataError below three values, DomainError for h <= 1/2.
std::vector<ScanResult> asymptotic_scan(const std::vector<Rational>& h_values, const std::vector<ScanPair>& pairs,
                                        const ScanOptions& opts = {});

/// Least-squares slope and RMS residual of log y against log x.
std::pair<double, double> loglog_fit(const std::vector<double>& x, const std::vector<double>& y);

/// exp(t X) in the orthonormal basis; OverflowError names t.
Matrix<Complex> exponentiate(const verma::ExactModule& mod, const LinOp<Rational>& x, double t);

/// Frobenius norm of exp(tX) exp(sX) - exp((t+s)X).
double group_law_residual(const verma::ExactModule& mod, const LinOp<Rational>& x, double t, double s);

nlohmann::json to_json(const DefectReport& r);
nlohmann::json to_json(const ScanResult& r);

/// Runs a grid description: {"h": [...], "degree": [...], "pairs": [[m, n, km?, kn?], ...], "d0": 0,
/// "window": 12, "scan": {"h": [...], "pairs": [...], "degree": 32, "window": 12},
/// "group_law": {"pairs": [[m, n], ...], "degree": 24, "h": "1", "t": [..], "s": [..]}}.
/// Every section is optional; independent defect tasks run concurrently.
nlohmann::json run_grid(const nlohmann::json& grid);

}  // namespace droem::symmetries

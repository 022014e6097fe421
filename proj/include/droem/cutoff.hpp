#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "droem/verma.hpp"

namespace droem::cutoff {

using verma::ExactModule;
using verma::LinOp;

/// Exact polynomial sum_k coeffs[k] x^k.
struct Polynomial {
  std::vector<Rational> coeffs;

  Rational operator()(const Rational& x) const;
  int degree() const;
  std::string to_string() const;
};

/// p(x + 1) - p(x), applied k times.
Polynomial forward_difference(const Polynomial& p, int k = 1);

/// The degree <= N interpolant through (i, 1/(2h+i)), i = 0..N.
Polynomial interp_poly(const Rational& h, int N);

struct CutoffSpec {
  int N = 0;
  Polynomial P;
};

CutoffSpec make_cutoff(const ExactModule& mod, int N);

/// False when P vanishes at some degree 0..D, so P^{-1}(z d/dz) is undefined.
bool inverse_defined(const ExactModule& mod, const CutoffSpec& spec);

/// J_k = d^k for k > 0; J_{-k} = z^k (Delta^k P)(z d/dz).
LinOp<Rational> cutoff_current(const ExactModule& mod, const CutoffSpec& spec, int k);

/// The literal candidate z P^{-1}(z d/dz); PoleError where P vanishes.
LinOp<Rational> literal_dilatation(const ExactModule& mod, const CutoffSpec& spec);

struct RelationCheck {
  std::string op;
  std::string relation;
  std::string convention;
  Rational residual_sq;
  int valid_degrees = 0;
  /// Largest d with the relation exact on degrees 0..d (-1: fails at z^0).
  int holds_through = -1;
  bool defined = true;

  double residual_frobenius() const;
  std::string verdict() const;
};

struct DilatationResult {
  /// Q(z d/dz) d/dz solved degree by degree from [L1cut, J_{-1}] = Id.
  LinOp<Rational> solved;
  /// Absent when P vanishes at some degree of the module.
  std::optional<LinOp<Rational>> literal;
  std::vector<RelationCheck> checks;
};

/// DegenerateDifferenceError when (Delta P)(i) = 0 for some i < D.
DilatationResult solve_cutoff_dilatation(const ExactModule& mod, const CutoffSpec& spec);

/// Any operator X, without band structure, with [X, J_{-1}] = Id on degrees
/// <= D-1; nullopt when the linear system has no solution.
std::optional<LinOp<Rational>> unrestricted_dilatation(const ExactModule& mod, const CutoffSpec& spec);

/// Residuals of the nonlinear sl2 brackets for both dilatation candidates,
/// both orders of the weight bracket and both readings of h(L_0).
std::vector<RelationCheck> nonlinear_sl2_probe(const ExactModule& mod, const CutoffSpec& spec);

/// One JSON object per check: {h, N, D, operator, relation, convention,
/// residual_frobenius, residual_sq, valid_degrees, holds_through, verdict}.
nlohmann::json probe_report(const ExactModule& mod, const CutoffSpec& spec, const std::vector<RelationCheck>& checks);

}  // namespace droem::cutoff

#include <gtest/gtest.h>

#include <random>

#include "droem/qpft.hpp"
#include "symbolic_oracle.hpp"

using namespace droem;
using namespace droem::qpft;

namespace {

Rational q(const char* s) { return parse_rational(s); }

PrimarySpec spec(long spin, int lo, int hi) { return {Rational(spin), lo, hi, std::nullopt}; }

// Column i of a matrix as an oracle polynomial.
oracle::Poly column(const LinOp<Rational>& op, int i) {
  oracle::Poly p;
  for (int r = 0; r <= op.degree(); ++r)
    if (sgn(op(r, i)) != 0) p[r] = op(r, i);
  return p;
}

// Applies a matrix to an oracle polynomial; degrees past the truncation
// are reported as failure through the flag.
oracle::Poly apply_matrix(const LinOp<Rational>& op, const oracle::Poly& p, bool& ok) {
  oracle::Poly out;
  for (const auto& [i, c] : p) {
    if (i > op.degree()) {
      ok = false;
      continue;
    }
    for (int r = 0; r <= op.degree(); ++r)
      if (sgn(op(r, i)) != 0) out[r] += c * op(r, i);
  }
  for (auto it = out.begin(); it != out.end();) it = sgn(it->second) == 0 ? out.erase(it) : std::next(it);
  return out;
}

Laurent<Rational> random_laurent(std::mt19937& rng, int lo, int hi) {
  std::uniform_int_distribution<int> coef(-5, 5);
  std::uniform_int_distribution<int> den(1, 4);
  Laurent<Rational> f;
  for (int p = lo; p <= hi; ++p) {
    Rational c(coef(rng), den(rng));
    c.canonicalize();
    f.set(p, c);
  }
  return f;
}

}  // namespace

TEST(Smear, CoefficientExtraction) {
  auto mod = verma::make_module<Rational>(q("3/4"), 8);
  auto field = solve_primary_field(mod, spec(1, 0, 3));
  EXPECT_EQ(smear(field, Laurent<Rational>::monomial(-2, Rational(1))).matrix, field.mode(2).matrix);
  EXPECT_TRUE(smear(field, Laurent<Rational>()).matrix.is_zero());
  Laurent<Rational> f = Laurent<Rational>::monomial(-1, Rational(2)) + Laurent<Rational>::monomial(-2, Rational(3));
  auto expected = Rational(2) * field.mode(1) + Rational(3) * field.mode(2);
  EXPECT_EQ(smear(field, f).matrix, expected.matrix);
  // powers with no matching mode contribute nothing
  EXPECT_TRUE(smear(field, Laurent<Rational>::monomial(-9, Rational(1))).matrix.is_zero());
}

TEST(PrimaryField, SpinZeroSingleModeIsIdentity) {
  auto mod = verma::make_module<Rational>(q("3/4"), 10);
  auto field = solve_primary_field(mod, spec(0, 0, 0));
  EXPECT_EQ(field.mode(0).matrix, Matrix<Rational>::identity(11));
  PrimarySpec seeded = spec(0, 0, 0);
  seeded.seed = verma::identity_op<Rational>(10);
  EXPECT_EQ(solve_primary_field(mod, seeded).mode(0).matrix, Matrix<Rational>::identity(11));
  for (const auto& r : primary_residuals(mod, field, Rational(0))) EXPECT_TRUE(r.exact_zero) << r.relation;
}

TEST(PrimaryField, SingleModeWithPositiveSpinHasNoSolution) {
  auto mod = verma::make_module<Rational>(q("3/4"), 10);
  EXPECT_THROW(solve_primary_field(mod, spec(2, 0, 0)), NoSolutionError);
  EXPECT_THROW(solve_primary_field(mod, spec(1, 0, 0)), NoSolutionError);
}

TEST(PrimaryField, RejectsNonIntegerSpinAndEmptyRange) {
  auto mod = verma::make_module<Rational>(q("3/4"), 6);
  EXPECT_THROW(solve_primary_field(mod, {q("1/2"), 0, 2, std::nullopt}), DomainError);
  EXPECT_THROW(solve_primary_field(mod, spec(1, 2, 0)), DomainError);
}

TEST(PrimaryField, SpinOneLowestModeIsDerivative) {
  const Rational h = q("3/4");
  auto mod = verma::make_module<Rational>(h, 12);
  auto field = solve_primary_field(mod, spec(1, -2, 2));
  for (int i = 0; i <= field.mode(-2).exact_below; ++i)
    EXPECT_EQ(column(field.mode(-2), i), oracle::apply(oracle::derivative(1), oracle::monomial(i)));
  EXPECT_EQ(field.mode(-1).matrix, (Rational(-1) * verma::identity_op<Rational>(12)).matrix);
  // the k = 1 relation is exact on degrees <= D - 2 for the raising mode l_1
  auto res = primary_residuals(mod, field, Rational(1));
  for (const auto& r : res) EXPECT_TRUE(r.exact_zero) << r.relation;
  EXPECT_EQ(res[2].valid_degrees, 12 - 3);
}

TEST(PrimaryField, SeededSolveReproducesFreeSolve) {
  auto mod = verma::make_module<Rational>(q("3/4"), 12);
  auto free = solve_primary_field(mod, spec(1, -2, 2));
  PrimarySpec seeded = spec(1, -2, 2);
  seeded.seed = free.mode(-2);
  auto field = solve_primary_field(mod, seeded);
  for (int n = -2; n <= 2; ++n) EXPECT_EQ(field.mode(n).matrix, free.mode(n).matrix) << n;

  PrimarySpec bad = spec(1, -2, 2);
  bad.seed = verma::identity_op<Rational>(12);  // wrong degree shift for mode -2
  EXPECT_THROW(solve_primary_field(mod, bad), NoSolutionError);
}

TEST(PrimaryField, WindowsHaveOneDimensionalSolutionSpace) {
  auto mod = verma::make_module<Rational>(q("5/4"), 10);
  for (long m : {1, 2, 3})
    for (auto [lo, hi] : std::vector<std::pair<int, int>>{{-2, 2}, {0, 4}, {-4, 0}, {0, 1}})
      EXPECT_EQ(primary_field_space(mod, spec(m, lo, hi)).size(), 1u) << "m=" << m << " [" << lo << "," << hi << "]";
}

// Relations rechecked with the symbolic differential operators instead of
// the truncated generator matrices.
TEST(PrimaryField, RelationsHoldAgainstSymbolicGenerators) {
  for (auto h : {q("1/2"), q("3/4"), q("5/2")})
    for (long m : {1, 2}) {
      const int degree = 12;
      auto mod = verma::make_module<Rational>(h, degree);
      auto field = solve_primary_field(mod, spec(m, -2, 2));
      for (int k = -1; k <= 1; ++k)
        for (int n = -2; n <= 2; ++n) {
          if (!field.has_mode(n - k)) continue;
          auto ln = field.mode(n);
          Rational coef = (k % 2 == 0 ? 1 : -1) * (Rational(n - k) + Rational(k + 1) * Rational(m));
          auto rhs_op = coef * field.mode(n - k);
          for (int i = 0; i <= std::min(ln.exact_below, rhs_op.exact_below) - (k == -1 ? 1 : 0); ++i) {
            bool ok = true;
            auto lz = apply_matrix(ln, oracle::monomial(i), ok);
            auto a = oracle::apply(oracle::generator(h, k), lz);
            auto b = apply_matrix(ln, oracle::apply(oracle::generator(h, k), oracle::monomial(i)), ok);
            oracle::Poly diff = a;
            for (const auto& [d, c] : b) diff[d] -= c;
            for (const auto& [d, c] : column(rhs_op, i)) diff[d] -= c;
            for (auto it = diff.begin(); it != diff.end();) it = sgn(it->second) == 0 ? diff.erase(it) : std::next(it);
            ASSERT_TRUE(ok);
            EXPECT_TRUE(diff.empty()) << "h=" << to_string(h) << " m=" << m << " k=" << k << " n=" << n << " i=" << i;
          }
        }
    }
}

TEST(PrimaryField, AcceptanceSizeSpinsOneAndTwo) {
  auto mod = verma::make_module<Rational>(q("3/4"), 12);
  for (long m : {1, 2}) {
    auto field = solve_primary_field(mod, spec(m, -2, 2));
    for (const auto& r : primary_residuals(mod, field, Rational(m))) {
      EXPECT_TRUE(r.exact_zero) << r.relation;
      EXPECT_GE(r.valid_degrees, 0);
    }
  }
}

TEST(PrimaryField, CommutatorLadderMatchesDerivative) {
  auto mod = verma::make_module<Rational>(q("3/4"), 12);
  for (long m : {1, 2}) {
    auto field = solve_primary_field(mod, spec(m, -2, 2));
    auto d = derivative(field);
    auto lm1 = verma::sl2_generator(mod, -1);
    for (int n = -2; n <= 1; ++n) {
      auto c = verma::commutator(lm1, field.mode(n));
      EXPECT_TRUE(verma::agree_on(c, Rational(-1) * d.mode(n), c.exact_below)) << n;
    }
  }
}

TEST(PrimaryField, PointwiseRelationAtGaussianRationalPoint) {
  auto mod = verma::make_module<Rational>(q("3/4"), 10);
  auto field = solve_primary_field(mod, spec(1, -2, 2));
  GaussianRational u(q("1/2"), q("1/3"));
  for (int k = -1; k <= 1; ++k) EXPECT_TRUE(primary_relation_holds_at(mod, field, Rational(1), k, u)) << k;
  auto broken = field;
  broken.modes[2].matrix(3, 3) += 1;
  EXPECT_FALSE(primary_relation_holds_at(mod, broken, Rational(1), 0, u));
  EXPECT_THROW(primary_relation_holds_at(mod, field, Rational(1), 0, GaussianRational(0)), EvalDomainError);
}

TEST(Ope, IdentityWithItself) {
  auto id = identity_field<Rational>(6);
  auto fit = ope_structure(id, id, {id}, {0, 0, 0, false});
  EXPECT_TRUE(fit.closed);
  EXPECT_EQ(fit.coefficients[0], Laurent<Rational>::constant(Rational(1)));
}

TEST(Ope, ZeroFields) {
  auto z = zero_field<Rational>(6);
  auto fit = ope_structure(z, z, {identity_field<Rational>(6)});
  EXPECT_TRUE(fit.closed);
  EXPECT_TRUE(fit.coefficients[0].is_zero());
}

TEST(Ope, TaylorCompositesCloseExactly) {
  auto mod = verma::make_module<Rational>(q("3/4"), 12);
  auto a = solve_primary_field(mod, spec(1, 0, 4));
  auto cands = taylor_composites(a, a);
  auto fit = ope_structure(a, a, cands, {0, 0, 4, true});
  EXPECT_TRUE(fit.closed);
  for (std::size_t j = 0; j < cands.size(); ++j)
    EXPECT_EQ(fit.coefficients[j], Laurent<Rational>::monomial(static_cast<int>(j), Rational(1))) << j;
}

TEST(Ope, NonClosureIsReportedNotThrown) {
  auto mod = verma::make_module<Rational>(q("3/4"), 12);
  auto a = solve_primary_field(mod, spec(1, -2, 2));
  std::vector<LaurentOpField<Rational>> cands{identity_field<Rational>(12), a};
  OpeOptions opts{2, -2, 2, false};
  auto fit = ope_structure(a, a, cands, opts);
  EXPECT_FALSE(fit.closed);
  EXPECT_GT(fit.residual_sq, 0);
  opts.require_closed = true;
  EXPECT_THROW(ope_structure(a, a, cands, opts), NotClosedError);
}

TEST(LocalProduct, MatchesDirectCompositionForRandomPairs) {
  auto mod = verma::make_module<Rational>(q("3/4"), 12);
  auto a = solve_primary_field(mod, spec(1, 0, 4));
  auto b = solve_primary_field(mod, spec(2, 0, 3));
  auto cands = taylor_composites(a, b);
  auto fit = ope_structure(a, b, cands, {0, 0, 4, true});
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> lo(-5, 0);
  std::uniform_int_distribution<int> span(0, 4);
  for (int trial = 0; trial < 20; ++trial) {
    int fl = lo(rng);
    int gl = lo(rng);
    auto f = random_laurent(rng, fl, fl + span(rng));
    auto g = random_laurent(rng, gl, gl + span(rng));
    auto direct = verma::compose(smear(a, f), smear(b, g));
    auto product = local_product(a, f, b, g, cands, fit);
    const int valid = std::min(direct.exact_below, fit.valid_degrees);
    EXPECT_GE(valid, 0);
    EXPECT_TRUE(verma::agree_on(product, direct, valid)) << "trial " << trial;
    // the Taylor identity holds entrywise for the truncated matrices too
    EXPECT_EQ(product.matrix, direct.matrix) << "trial " << trial;
  }
}

TEST(LocalProduct, InverseMonomials) {
  auto mod = verma::make_module<Rational>(q("3/4"), 12);
  auto a = solve_primary_field(mod, spec(1, 0, 4));
  auto cands = taylor_composites(a, a);
  auto fit = ope_structure(a, a, cands, {0, 0, 4, true});
  auto f = Laurent<Rational>::monomial(-1, Rational(1));
  auto direct = verma::compose(smear(a, f), smear(a, f));
  EXPECT_TRUE(verma::agree_on(local_product(a, f, a, f, cands, fit), direct, direct.exact_below));
  EXPECT_TRUE(local_product(a, Laurent<Rational>(), a, f, cands, fit).matrix.is_zero());
}

TEST(LocalProduct, IdentityFieldsGiveScalarMultiple) {
  auto id = identity_field<Rational>(5);
  auto fit = ope_structure(id, id, {id}, {0, 0, 0, true});
  Laurent<Rational> f = Laurent<Rational>::monomial(0, Rational(3)) + Laurent<Rational>::monomial(2, Rational(1));
  auto p = local_product(id, f, id, f, {id}, fit);
  EXPECT_EQ(p.matrix, (Rational(9) * verma::identity_op<Rational>(5)).matrix);
}

TEST(LocalProduct, NegativePowerStructureUsesOuterExpansion) {
  // t(w) = w^{-1}: Res_v (v-u)^{-1} f(v) dv/v over |v| > |u| for f = v^2
  // is sum_j u^j [v^0] v^{1-j} = u.
  auto h = renormalized_coefficient(Laurent<Rational>::monomial(-1, Rational(1)),
                                    Laurent<Rational>::monomial(2, Rational(1)), Laurent<Rational>::constant(1));
  EXPECT_EQ(h, Laurent<Rational>::monomial(1, Rational(1)));
}

TEST(LocalProduct, MissingStructure) {
  auto id = identity_field<Rational>(4);
  EXPECT_THROW(local_product(id, Laurent<Rational>(), id, Laurent<Rational>(), {}, OpeFit{}), MissingStructureError);
  EXPECT_THROW(local_product(id, Laurent<Rational>(), id, Laurent<Rational>(), {id}, OpeFit{}), MissingStructureError);
}

namespace {

// Constant structure of the 2x2 matrix units: E_ab E_cd = delta_bc E_ad.
StructureField<Rational> matrix_unit_structure() {
  StructureField<Rational> s;
  s.dim = 4;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      if (i % 2 == j / 2) s.t[{i, j, (i / 2) * 2 + j % 2}] = Laurent<Rational>::constant(Rational(1));
  return s;
}

std::vector<std::pair<Complex, Complex>> random_samples(int count, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<std::pair<Complex, Complex>> out;
  for (int i = 0; i < count; ++i) out.push_back({{d(rng), d(rng)}, {d(rng), d(rng)}});
  return out;
}

}  // namespace

TEST(QftAxiom, MatrixUnitsAreAssociative) {
  auto report = check_qft_axiom(matrix_unit_structure(), random_samples(5, 1));
  EXPECT_EQ(report.max_deviation, 0.0);
  EXPECT_EQ(report.samples, 5u);
}

TEST(QftAxiom, PerturbationIsDetected) {
  auto s = matrix_unit_structure();
  s.t[{0, 0, 0}] = Laurent<Rational>::constant(Rational(2));
  EXPECT_GT(check_qft_axiom(s, random_samples(3, 2)).max_deviation, 0.5);
}

TEST(QftAxiom, SingularSample) {
  StructureField<Rational> s;
  s.dim = 1;
  s.t[{0, 0, 0}] = Laurent<Rational>::monomial(-1, Rational(1));
  EXPECT_THROW(check_qft_axiom(s, {{Complex(0.5), Complex(0.5)}}), SingularSampleError);
  EXPECT_THROW(check_qft_axiom(s, {{Complex(0.5), Complex(0.0)}}), SingularSampleError);
}

TEST(TranslationAlgebraTest, StructureIsAssociative) {
  for (auto alg : {TranslationAlgebra::full(2), TranslationAlgebra::lower_triangular(2)}) {
    auto report = check_qft_axiom(alg.structure(), random_samples(20, 3));
    EXPECT_LE(report.max_deviation, 1e-10);
  }
}

TEST(TranslationAlgebraTest, OpeRecoversStructureFromFields) {
  auto alg = TranslationAlgebra::lower_triangular(2);
  bool closed = false;
  auto recovered = structure_from_fields(alg.fields(), {0, 0, 4, false}, &closed);
  EXPECT_TRUE(closed);
  auto direct = alg.structure();
  EXPECT_EQ(recovered.t, direct.t);
  EXPECT_LE(check_qft_axiom(recovered, random_samples(20, 4)).max_deviation, 1e-10);
}

TEST(TranslationAlgebraTest, UnitAndDerivation) {
  auto alg = TranslationAlgebra::full(2);
  auto l = infinitesimal_translation(alg);
  auto unit = alg.unit();
  for (std::size_t r = 0; r < alg.dim(); ++r) {
    Rational s = 0;
    for (std::size_t c = 0; c < alg.dim(); ++c) s += l(r, c) * unit[c];
    EXPECT_EQ(s, 0);
  }
  auto report = check_translations(alg, {Complex(0.1), Complex(-0.05, 0.02), Complex(0.3, 0.1)});
  EXPECT_LE(report.derivation_deviation, 1e-12);
  EXPECT_LE(report.exponential_deviation, 1e-10);
  EXPECT_LE(report.unit_deviation, 1e-12);
}

TEST(TranslationAlgebraTest, ModesOfFieldsAreCommutatorsWithShift) {
  auto alg = TranslationAlgebra::full(2);
  const auto& n = alg.shift();
  for (const auto& f : alg.fields()) {
    auto d = derivative(f);
    for (int p = 0; p < f.n_max(); ++p)
      EXPECT_EQ(d.mode(p).matrix, n * f.mode(p).matrix - f.mode(p).matrix * n);
  }
}

TEST(TranslationAlgebraTest, NoUnit) {
  auto alg = TranslationAlgebra::strictly_lower_triangular(2);
  EXPECT_THROW(alg.unit(), NoUnitError);
  EXPECT_THROW(infinitesimal_translation(alg), NoUnitError);
}

TEST(AngularField, ZeroCoefficients) {
  auto mod = verma::make_module<Rational>(q("3/4"), 8);
  auto v1 = solve_primary_field(mod, spec(1, 0, 3));
  auto v2 = solve_primary_field(mod, spec(2, 0, 3));
  auto a = angular_field({v1, v2}, {0.0, 0.0}, Complex(0.3, 0.1), Complex(0.05));
  EXPECT_TRUE(a.matrix.is_zero());
}

TEST(AngularField, SingleTermIsFieldValue) {
  auto mod = verma::make_module<Rational>(q("3/4"), 8);
  auto v1 = solve_primary_field(mod, spec(1, 0, 3));
  const Complex u(0.3, 0.1);
  auto a = angular_field({v1}, {1.0}, u, Complex(1.0));
  auto e = evaluate<Complex>(v1, u);
  for (int r = 0; r <= 8; ++r)
    for (int c = 0; c <= 8; ++c) EXPECT_EQ(a(r, c), e(r, c));
}

TEST(AngularField, TwoTermsMatchIndependentSum) {
  auto mod = verma::make_module<Rational>(q("3/4"), 8);
  auto v1 = solve_primary_field(mod, spec(1, 0, 3));
  auto v2 = solve_primary_field(mod, spec(2, 0, 3));
  const Complex u(0.3, 0.1);
  const Complex udot(0.05);
  auto a = angular_field({v1, v2}, {1.0, 0.5}, u, udot);
  for (int r = 0; r <= 8; ++r)
    for (int c = 0; c <= 8; ++c) {
      Complex want = 0.0;
      for (int n = 0; n <= 3; ++n) {
        want += 1.0 * udot * std::pow(u, n) * v1.mode(n)(r, c).get_d();
        want += 0.5 * udot * udot * std::pow(u, n) * v2.mode(n)(r, c).get_d();
      }
      EXPECT_NEAR(std::abs(a(r, c) - want), 0.0, 1e-12 * std::max(1.0, std::abs(want)));
    }
}

TEST(AngularField, DomainErrors) {
  auto mod = verma::make_module<Rational>(q("3/4"), 8);
  auto neg = solve_primary_field(mod, spec(1, -2, 2));
  EXPECT_THROW(angular_field({neg}, {1.0}, Complex(0.0), Complex(1.0)), EvalDomainError);
  EXPECT_THROW(angular_field({neg}, {1.0}, Complex(0.99), Complex(1.0)), EvalDomainError);
  EXPECT_NO_THROW(angular_field({neg}, {1.0}, Complex(0.5), Complex(1.0)));
  EXPECT_THROW(angular_field({neg, neg}, {1.0}, Complex(0.5), Complex(1.0)), ShapeError);
}

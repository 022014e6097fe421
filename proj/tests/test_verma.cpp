#include <gtest/gtest.h>

#include <random>

#include "droem/json_io.hpp"
#include "droem/verma.hpp"
#include "symbolic_oracle.hpp"

using namespace droem;
using namespace droem::verma;

namespace {

Rational q(const char* s) { return parse_rational(s); }

PolyState<Rational> basis_vector(int dim, int i) {
  PolyState<Rational> v{std::vector<Rational>(dim, Rational(0))};
  v.coeffs[i] = 1;
  return v;
}

// Matrix image of z^i compared with an oracle polynomial.
bool column_matches(const LinOp<Rational>& op, int i, const oracle::Poly& expected) {
  const int dim = op.degree() + 1;
  auto image = apply(op, basis_vector(dim, i));
  for (const auto& [deg, c] : expected)
    if (deg > op.degree()) return false;
  for (int d = 0; d < dim; ++d) {
    auto it = expected.find(d);
    Rational want = it == expected.end() ? Rational(0) : it->second;
    if (image.coeffs[d] != want) return false;
  }
  return true;
}

}  // namespace

TEST(MakeModule, DimensionIsDegreePlusOne) {
  auto mod = make_module<Rational>(q("1/2"), 8);
  EXPECT_EQ(mod.dim(), 9);
}

TEST(MakeModule, RejectsPole) {
  EXPECT_THROW(make_module<Rational>(q("-1"), 4), PoleError);
  // 2h + i = 0 at i = D + 2 is inside the headroom.
  EXPECT_THROW(make_module<Rational>(q("-3"), 4), PoleError);
}

TEST(MakeModule, AcceptsPositiveWeightAndRejectsSmallDegree) {
  EXPECT_NO_THROW(make_module<Rational>(q("3/4"), 16));
  EXPECT_THROW(make_module<Rational>(q("3/4"), 1), DomainError);
}

TEST(Sl2Generator, ExamplesOnMonomials) {
  auto mod = make_module<Rational>(q("3"), 6);
  auto z2 = basis_vector(7, 2);
  auto lm1 = apply(sl2_generator(mod, -1), z2);
  EXPECT_EQ(lm1.coeffs[3], 1);
  auto l0 = apply(sl2_generator(mod, 0), z2);
  EXPECT_EQ(l0.coeffs[2], 5);
  auto l1 = apply(sl2_generator(mod, 1), z2);
  EXPECT_EQ(l1.coeffs[1], 14);
  EXPECT_EQ(l1.coeffs[2], 0);
  EXPECT_THROW(sl2_generator(mod, 2), DomainError);
}

TEST(W1Generator, ExamplesOnMonomials) {
  auto mod1 = make_module<Rational>(q("1"), 6);
  EXPECT_EQ(apply(w1_generator(mod1, 2), basis_vector(7, 3)).coeffs[1], 24);
  auto z1 = apply(w1_generator(mod1, 2), basis_vector(7, 1));
  for (const auto& c : z1.coeffs) EXPECT_EQ(c, 0);
  auto mod_half = make_module<Rational>(q("1/2"), 6);
  EXPECT_EQ(apply(w1_generator(mod_half, 3), basis_vector(7, 3)).coeffs[0], 12);
  EXPECT_THROW(w1_generator(mod1, 1), DomainError);
}

TEST(Generators, ExactBelowIsDegreeMinusRaise) {
  auto mod = make_module<Rational>(q("3/4"), 10);
  for (int k = -1; k <= 5; ++k) {
    auto op = vector_field_generator(mod, k);
    EXPECT_EQ(op.exact_below, mod.degree() - op.raise) << "k=" << k;
  }
}

TEST(Generators, MatchSymbolicOracleOnEveryMonomial) {
  for (auto h : {q("1/2"), q("3/4"), q("5/2"), q("-1/3")}) {
    auto mod = make_module<Rational>(h, 9);
    for (int k = -1; k <= 4; ++k) {
      auto op = vector_field_generator(mod, k);
      for (int i = 0; i <= op.exact_below; ++i)
        EXPECT_TRUE(column_matches(op, i, oracle::apply(oracle::generator(h, k), oracle::monomial(i))))
            << "h=" << to_string(h) << " k=" << k << " i=" << i;
    }
  }
}

TEST(DiagOperator, Examples) {
  auto mod = make_module<Rational>(q("1/2"), 6);
  DiagSymbol<Rational> ones{std::vector<Rational>(7, Rational(1))};
  EXPECT_EQ(diag_operator(mod, ones).matrix, Matrix<Rational>::identity(7));

  DiagSymbol<Rational> inv;
  for (int i = 0; i <= 6; ++i) inv.values.push_back(Rational(1) / (2 * mod.h() + i));
  auto d = diag_operator(mod, inv);
  EXPECT_EQ(d(0, 0), 1);
  EXPECT_EQ(d(1, 1), q("1/2"));
  EXPECT_EQ(d(2, 2), q("1/3"));
  EXPECT_EQ(d.raise, 0);
  EXPECT_EQ(d.exact_below, 6);

  DiagSymbol<Rational> weight;
  for (int i = 0; i <= 6; ++i) weight.values.push_back(i + mod.h());
  EXPECT_EQ(diag_operator(mod, weight).matrix, sl2_generator(mod, 0).matrix);
}

TEST(Commutator, Examples) {
  auto mod = make_module<Rational>(q("3/4"), 10);
  auto lm1 = sl2_generator(mod, -1);
  auto l0 = sl2_generator(mod, 0);
  auto l1 = sl2_generator(mod, 1);
  EXPECT_TRUE(agree_on(commutator(l0, lm1), lm1, mod.degree() - 1));
  EXPECT_TRUE(commutator(l1, l1).matrix.is_zero());
  EXPECT_TRUE(agree_on(commutator(l1, lm1), Rational(2) * l0, mod.degree() - 1));
  // the top column is a truncation artifact and must not agree
  EXPECT_FALSE(agree_on(commutator(l1, lm1), Rational(2) * l0, mod.degree()));
  EXPECT_GE(commutator(l1, lm1).exact_below, mod.degree() - 1);
}

TEST(Commutator, MismatchedModulesThrow) {
  auto a = sl2_generator(make_module<Rational>(q("1"), 4), 0);
  auto b = sl2_generator(make_module<Rational>(q("1"), 5), 0);
  EXPECT_THROW(commutator(a, b), ShapeError);
}

TEST(Relations, Sl2ExactBelowTopTwoDegrees) {
  for (auto h : {q("1/2"), q("3/4"), q("1"), q("5/2"), q("-1/3")}) {
    for (int degree : {4, 9, 16}) {
      auto mod = make_module<Rational>(h, degree);
      for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j) {
          auto lhs = commutator(sl2_generator(mod, i), sl2_generator(mod, j));
          auto rhs = (i + j >= -1 && i + j <= 1) ? Rational(i - j) * sl2_generator(mod, i + j) : zero_op<Rational>(degree);
          EXPECT_TRUE(agree_on(lhs, rhs, degree - 2)) << "i=" << i << " j=" << j;
          EXPECT_GE(lhs.exact_below, degree - 2);
        }
    }
  }
}

TEST(Relations, W1ExactOnAllDegrees) {
  for (auto h : {q("1/2"), q("3/4"), q("2")}) {
    const int degree = 16;
    auto mod = make_module<Rational>(h, degree);
    for (int i = 2; i <= 4; ++i)
      for (int j = 2; j <= 4; ++j) {
        if (i + j > degree) continue;
        auto lhs = commutator(w1_generator(mod, i), w1_generator(mod, j));
        auto rhs = Rational(i - j) * w1_generator(mod, i + j);
        EXPECT_EQ(lhs.exact_below, degree);
        EXPECT_TRUE(agree_on(lhs, rhs, degree)) << "i=" << i << " j=" << j;
      }
  }
}

TEST(Relations, MixedWithSl2) {
  auto mod = make_module<Rational>(q("3/4"), 14);
  for (int k = 2; k <= 5; ++k) {
    auto l1k = commutator(sl2_generator(mod, 1), w1_generator(mod, k));
    EXPECT_TRUE(agree_on(l1k, Rational(1 - k) * w1_generator(mod, k + 1), mod.degree() - 1));
    auto l0k = commutator(sl2_generator(mod, 0), w1_generator(mod, k));
    EXPECT_TRUE(agree_on(l0k, Rational(-k) * w1_generator(mod, k), mod.degree()));
    auto lm1k = commutator(sl2_generator(mod, -1), w1_generator(mod, k));
    EXPECT_TRUE(agree_on(lm1k, Rational(-1 - k) * vector_field_generator(mod, k - 1), mod.degree() - 1));
  }
}

TEST(Shapovalov, RecursionValues) {
  auto g = shapovalov_form(make_module<Rational>(q("1/2"), 6));
  EXPECT_EQ(g.values[0], 1);
  EXPECT_EQ(g.values[1], 1);
  EXPECT_EQ(g.values[2], 4);
  auto g2 = shapovalov_form(make_module<Rational>(q("7/3"), 6));
  EXPECT_EQ(g2.values[0], 1);
}

TEST(Shapovalov, PositiveForPositiveWeight) {
  for (auto h : {q("1/100"), q("1/2"), q("3/4"), q("5")}) {
    auto g = shapovalov_form(make_module<Rational>(h, 40));
    for (const auto& v : g.values) EXPECT_GT(sgn(v), 0);
  }
  EXPECT_THROW(shapovalov_form(make_module<Rational>(q("-1/3"), 6)), DomainError);
}

TEST(Adjoint, LoweringAndRaisingArePaired) {
  auto mod = make_module<Rational>(q("3/4"), 12);
  auto g = shapovalov_form(mod);
  auto adj = adjoint(sl2_generator(mod, -1), g);
  EXPECT_TRUE(agree_on(adj, sl2_generator(mod, 1), mod.degree() - 1));
  EXPECT_EQ(adjoint(identity_op<Rational>(12), g).matrix, Matrix<Rational>::identity(13));
  auto l2 = w1_generator(mod, 2);
  EXPECT_EQ(adjoint(adjoint(l2, g), g).matrix, l2.matrix);
  EXPECT_EQ(adjoint(l2, g).raise, 2);
  EXPECT_EQ(adjoint(l2, g).exact_below, mod.degree() - 2);
}

TEST(Adjoint, RejectsNonPositiveGram) {
  auto mod = make_module<Rational>(q("3/4"), 4);
  auto g = shapovalov_form(mod);
  g.values[2] = -1;
  EXPECT_THROW(adjoint(sl2_generator(mod, 0), g), DomainError);
}

TEST(Adjoint, FormIdentityOnRandomVectors) {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> coef(-9, 9);
  auto mod = make_module<Rational>(q("5/4"), 10);
  auto g = shapovalov_form(mod);
  auto form = [&](const PolyState<Rational>& x, const PolyState<Rational>& y) {
    Rational s = 0;
    for (int i = 0; i < mod.dim(); ++i) s += x.coeffs[i] * y.coeffs[i] * g.values[i];
    return s;
  };
  for (int k : {-1, 0, 1, 2, 3}) {
    auto a = vector_field_generator(mod, k);
    auto as = adjoint(a, g);
    for (int trial = 0; trial < 10; ++trial) {
      PolyState<Rational> x{std::vector<Rational>(mod.dim(), Rational(0))};
      PolyState<Rational> y = x;
      // supports chosen so neither side leaves the truncation
      for (int i = 0; i <= a.exact_below; ++i) x.coeffs[i] = coef(rng);
      for (int i = 0; i <= as.exact_below; ++i) y.coeffs[i] = coef(rng);
      EXPECT_EQ(form(apply(a, x), y), form(x, apply(as, y))) << "k=" << k;
    }
  }
}

// Random words in the constructors: wherever the bookkeeping claims
// exactness, the truncated product must agree with symbolic evaluation.
TEST(Bookkeeping, ExactBelowIsSoundForRandomProducts) {
  std::mt19937 rng(2024);
  std::uniform_int_distribution<int> pick(-1, 4);
  std::uniform_int_distribution<int> length(2, 4);
  const Rational h = q("3/4");
  const int degree = 14;
  auto mod = make_module<Rational>(h, degree);
  for (int trial = 0; trial < 60; ++trial) {
    int n = length(rng);
    std::vector<int> word;
    for (int t = 0; t < n; ++t) word.push_back(pick(rng));
    LinOp<Rational> op = vector_field_generator(mod, word[0]);
    for (int t = 1; t < n; ++t) op = compose(op, vector_field_generator(mod, word[t]));
    for (int i = 0; i <= op.exact_below; ++i) {
      oracle::Poly p = oracle::monomial(i);
      for (int t = n - 1; t >= 0; --t) p = oracle::apply(oracle::generator(h, word[t]), p);
      EXPECT_TRUE(column_matches(op, i, p)) << "trial " << trial << " column " << i;
    }
  }
}

TEST(FastMode, AgreesWithExactMode) {
  const Rational h = q("3/4");
  auto exact = make_module<Rational>(h, 16);
  auto fast = make_module<Complex>(h, 16);
  for (int i = -1; i <= 4; ++i)
    for (int j = -1; j <= 4; ++j) {
      auto e = convert<Complex>(commutator(vector_field_generator(exact, i), vector_field_generator(exact, j)));
      auto f = commutator(vector_field_generator(fast, i), vector_field_generator(fast, j));
      for (int r = 0; r < 17; ++r)
        for (int c = 0; c < 17; ++c) {
          double ref = std::abs(e(r, c));
          if (ref > 1e6) continue;
          EXPECT_LE(std::abs(e(r, c) - f(r, c)), 1e-12 * std::max(1.0, ref));
        }
    }
  auto ge = shapovalov_form(exact);
  auto gf = shapovalov_form(fast);
  auto ae = convert<Complex>(adjoint(w1_generator(exact, 3), ge));
  auto af = adjoint(w1_generator(fast, 3), gf);
  for (int r = 0; r < 17; ++r)
    for (int c = 0; c < 17; ++c) EXPECT_LE(std::abs(ae(r, c) - af(r, c)), 1e-12 * std::max(1.0, std::abs(ae(r, c))));
}

TEST(DebugDump, RationalMatrixRoundTrip) {
  auto op = sl2_generator(make_module<Rational>(q("3/4"), 4), 1);
  auto j = to_json(op.matrix);
  EXPECT_EQ(j[0][1].get<std::string>(), "3/2");
  EXPECT_EQ(rational_matrix_from_json(j), op.matrix);
}

TEST(ParseRational, Forms) {
  EXPECT_EQ(parse_rational("3/4"), q("6/8"));
  EXPECT_EQ(parse_rational("0.75"), Rational(3, 4));
  EXPECT_EQ(parse_rational("-2"), Rational(-2));
  EXPECT_EQ(parse_rational("-0.5"), Rational(-1, 2));
  EXPECT_THROW(parse_rational("1/0"), ParseError);
  EXPECT_THROW(parse_rational("abc"), ParseError);
}

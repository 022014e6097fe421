#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "droem/qpft.hpp"
#include "droem/symmetries.hpp"
#include "symbolic_oracle.hpp"

using namespace droem;
using namespace droem::symmetries;

namespace {

Rational q(const char* s) { return parse_rational(s); }

const Kind VF = Kind::VectorField;
const Kind AB = Kind::AbelianCurrent;

// G_n = n! (2h)(2h+1)...(2h+n-1), built directly from the product.
std::vector<Rational> gram_oracle(const Rational& h, int d) {
  std::vector<Rational> g;
  for (int n = 0; n <= d; ++n) {
    Rational v = 1;
    for (int t = 1; t <= n; ++t) v *= Rational(t) * (2 * h + (t - 1));
    g.push_back(v);
  }
  return g;
}

// Orthonormal-basis generators from the closed form: rho(L_k) sends e_i to
// c_k(i) sqrt(G_{i-k}/G_i) e_{i-k}, and rho(L_{-k}) is its transpose.
Eigen::MatrixXd eigen_generator(const Rational& h, int d, int k) {
  if (k <= -2) return eigen_generator(h, d, -k).transpose();
  auto g = gram_oracle(h, d);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d + 1, d + 1);
  for (int i = 0; i <= d; ++i)
    for (const auto& [r, c] : oracle::apply(oracle::generator(h, k), oracle::monomial(i)))
      if (r <= d) m(r, i) = c.get_d() * std::sqrt(Rational(g[r] / g[i]).get_d());
  return m;
}

Eigen::MatrixXd to_eigen(const Matrix<Complex>& a) {
  Eigen::MatrixXd m(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) m(i, j) = a(i, j).real();
  return m;
}

double max_abs_diff(const Matrix<Complex>& a, const Matrix<Complex>& b) {
  double best = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) best = std::max(best, std::abs(a(i, j) - b(i, j)));
  return best;
}

}  // namespace

TEST(ExtendedGenerator, DirectAndAdjointConstruction) {
  auto mod = verma::make_module<Rational>(q("3/4"), 10);
  for (int n = -1; n <= 4; ++n) {
    auto g = extended_generator(mod, n, VF);
    EXPECT_EQ(g.construction, Construction::T);
    for (int i = 0; i <= 10; ++i) {
      auto want = oracle::apply(oracle::generator(q("3/4"), n), oracle::monomial(i));
      for (int r = 0; r <= 10; ++r) EXPECT_EQ(g.op(r, i), want.count(r) ? want[r] : Rational(0));
    }
  }
  auto gram = gram_oracle(q("3/4"), 10);
  for (int n = 2; n <= 4; ++n) {
    auto star = extended_generator(mod, -n, VF);
    EXPECT_EQ(star.construction, Construction::TStar);
    EXPECT_EQ(star.op.raise, n);
    for (int i = 0; i <= 10; ++i)
      for (int j = 0; j <= 10; ++j) {
        auto col = oracle::apply(oracle::generator(q("3/4"), n), oracle::monomial(i));
        Rational lji = col.count(j) ? col[j] : Rational(0);
        EXPECT_EQ(star.op(i, j), Rational(gram[j] / gram[i]) * lji) << n << " " << i << " " << j;
      }
  }
}

TEST(ExtendedGenerator, AbelianCurrents) {
  auto mod = verma::make_module<Rational>(q("1"), 8);
  EXPECT_EQ(extended_generator(mod, 0, AB).op.matrix, Matrix<Rational>::identity(9));
  auto j1 = extended_generator(mod, 1, AB);
  for (int i = 0; i <= 8; ++i) {
    auto want = oracle::apply(oracle::derivative(1), oracle::monomial(i));
    for (int r = 0; r <= 8; ++r) EXPECT_EQ(j1.op(r, i), want.count(r) ? want[r] : Rational(0));
  }
  // d^* z^{i-1} = z^i / (i - 1 + 2h)
  auto jm1 = extended_generator(mod, -1, AB);
  for (int i = 1; i <= 8; ++i) EXPECT_EQ(jm1.op(i, i - 1), 1 / (Rational(i - 1) + 2));
}

TEST(ExtendedGenerator, Errors) {
  auto mod = verma::make_module<Rational>(q("1"), 6);
  EXPECT_THROW(extended_generator(mod, 7, VF), DomainError);
  EXPECT_THROW(extended_generator(mod, -7, AB), DomainError);
  auto neg = verma::make_module<Rational>(q("-1/4"), 6);
  EXPECT_NO_THROW(extended_generator(neg, 3, VF));
  EXPECT_THROW(extended_generator(neg, -2, VF), UnitarizabilityError);
  EXPECT_THROW(extended_generator(neg, -1, AB), UnitarizabilityError);
}

TEST(ExtendedGenerator, MixedBracketHoldsExactly) {
  // ([B, A*])* = [A, B*] turns [L_{-1}, L_2] = -3 L_1 into this identity
  for (auto h : {q("1/2"), q("3/4"), q("1"), q("5/2")}) {
    auto mod = verma::make_module<Rational>(h, 16);
    auto lhs = verma::commutator(extended_generator(mod, 1, VF).op, extended_generator(mod, -2, VF).op);
    auto rhs = Rational(3) * extended_generator(mod, -1, VF).op;
    EXPECT_TRUE(verma::agree_on(lhs, rhs, lhs.exact_below)) << to_string(h);
    EXPECT_GE(lhs.exact_below, 12);
  }
}

TEST(Defect, Sl2CoreVanishesExactly) {
  for (auto h : {q("1/2"), q("3/4"), q("1"), q("5/2")}) {
    auto mod = verma::make_module<Rational>(h, 16);
    for (int m = -1; m <= 1; ++m)
      for (int n = -1; n <= 1; ++n) {
        auto r = defect(mod, m, n);
        EXPECT_TRUE(r.exact_zero) << m << "," << n;
        for (double v : r.tail_norms) EXPECT_EQ(v, 0.0);
        EXPECT_EQ(r.convergence_indicator(), 0.0);
      }
  }
}

TEST(Defect, AdjointIdentitiesGiveZeroDefect) {
  auto mod = verma::make_module<Rational>(q("1"), 20);
  for (auto [m, n] : {std::pair{1, -2}, {-2, 1}, {-1, -2}, {2, -1}, {3, 2}, {-1, -3}})
    EXPECT_TRUE(defect(mod, m, n).exact_zero) << m << "," << n;
  // W_1 and the abelian module structure on the direct side
  EXPECT_TRUE(defect(mod, 2, 3, VF, AB).exact_zero);
  EXPECT_TRUE(defect(mod, -1, 2, VF, AB).exact_zero);
  EXPECT_TRUE(defect(mod, 2, 3, AB, AB).exact_zero);
  EXPECT_TRUE(defect(mod, 1, 2, AB, VF).exact_zero);
}

TEST(Defect, NonSl2PairIsNonzero) {
  auto mod = verma::make_module<Rational>(q("1"), 32);
  auto r = defect(mod, 2, -2);
  EXPECT_FALSE(r.exact_zero);
  EXPECT_GT(r.window_norm(32), 0.0);
  EXPECT_EQ(r.valid_degrees, 30);
  EXPECT_FALSE(defect(mod, 1, -1, AB, AB).exact_zero);
}

// At h = 1/2 the orthonormal generators are e_i -> (i - (k-1)/2) e_{i-k}, so
// D(k,-k) = diag((j + (k+1)/2)^2 - 2k(j + 1/2)) for j < k and 0 above.
TEST(Defect, HalfWeightClosedForm) {
  for (int k = 2; k <= 4; ++k) {
    auto mod = verma::make_module<Rational>(q("1/2"), 20);
    auto a = extended_generator(mod, k, VF).op;
    auto b = extended_generator(mod, -k, VF).op;
    auto d = verma::commutator(a, b) - Rational(2 * k) * extended_generator(mod, 0, VF).op;
    for (int j = 0; j <= d.exact_below; ++j)
      for (int i = 0; i <= 20; ++i) {
        Rational want = 0;
        if (i == j && j < k) {
          Rational s = Rational(j) + Rational(k + 1, 2);
          s.canonicalize();
          want = s * s - 2 * k * (Rational(j) + Rational(1, 2));
        }
        EXPECT_EQ(d(i, j), want) << k << " " << i << " " << j;
      }
  }
}

TEST(Defect, MatchesEigenOracle) {
  for (auto h : {q("3/4"), q("1"), q("5/2")}) {
    const int d = 16;
    auto mod = verma::make_module<Rational>(h, d);
    for (auto [m, n] : {std::pair{2, -2}, {3, -2}, {2, -3}, {3, -3}}) {
      auto r = defect(mod, m, n);
      Eigen::MatrixXd a = eigen_generator(h, d, m), b = eigen_generator(h, d, n);
      Eigen::MatrixXd want = a * b - b * a - (m - n) * eigen_generator(h, d, m + n);
      Eigen::MatrixXd got = to_eigen(r.orthonormal);
      for (int j = 0; j <= r.valid_degrees; ++j)
        for (int i = 0; i <= d; ++i)
          EXPECT_NEAR(got(i, j), want(i, j), 1e-9 * (1.0 + std::abs(want(i, j))))
              << to_string(h) << " (" << m << "," << n << ") " << i << " " << j;
    }
  }
}

TEST(Defect, AdjointSymmetry) {
  // D(m,n)* = D(-n,-m): in the orthonormal basis, the transpose
  auto mod = verma::make_module<Rational>(q("3/4"), 24);
  for (auto [m, n] : {std::pair{2, -3}, {3, -2}, {2, -2}, {4, -1}}) {
    auto a = defect(mod, m, n);
    auto b = defect(mod, -n, -m);
    const int w = std::min(a.valid_degrees, b.valid_degrees);
    for (int i = 0; i <= w; ++i)
      for (int j = 0; j <= w; ++j)
        EXPECT_NEAR(std::abs(a.orthonormal(i, j) - std::conj(b.orthonormal(j, i))), 0.0,
                    1e-9 * (1.0 + std::abs(a.orthonormal(i, j))));
  }
}

TEST(Defect, TailNormsAndIndicator) {
  auto mod = verma::make_module<Rational>(q("3/4"), 24);
  auto r = defect(mod, 3, -2, VF, VF, 4);
  ASSERT_EQ(r.tail_norms.size(), 21u);
  for (std::size_t i = 1; i < r.tail_norms.size(); ++i) EXPECT_GE(r.tail_norms[i], r.tail_norms[i - 1]);
  for (std::size_t i = 1; i < r.raw_tail_norms.size(); ++i) EXPECT_GE(r.raw_tail_norms[i], r.raw_tail_norms[i - 1]);
  const double full = r.window_norm(24);
  EXPECT_DOUBLE_EQ(r.convergence_indicator(), (full - r.window_norm(18)) / full);
  EXPECT_THROW(r.window_norm(3), DomainError);
  EXPECT_THROW(defect(mod, 3, -2, VF, VF, 25), DomainError);
}

TEST(Defect, WindowNormStabilizesAcrossTruncations) {
  std::vector<double> norms;
  for (int d : {16, 24, 32, 48}) norms.push_back(defect(verma::make_module<Rational>(q("1"), d), 2, -2).window_norm(12));
  for (double v : norms) EXPECT_GT(v, 0.0);
  EXPECT_LE(std::abs(norms[3] - norms[2]) / norms[3], 0.01);
}

TEST(Defect, MatchesGoldenFile) {
  auto r = defect(verma::make_module<Rational>(q("1"), 32), 2, -2);
  const std::string text = to_json(r).dump(2) + "\n";
  std::ifstream in(std::string(DROEM_GOLDEN_DIR) + "/defect_h1_D32_m2_n-2.json", std::ios::binary);
  ASSERT_TRUE(in);
  std::stringstream buf;
  buf << in.rdbuf();
  EXPECT_EQ(text, buf.str());
}

TEST(AsymptoticScan, ExponentNearOne) {
  auto res = asymptotic_scan({q("7/10"), q("3/5"), q("11/20")}, {{2, -2}, {3, -3}, {3, -2}, {1, -1, AB, AB}});
  ASSERT_EQ(res.size(), 4u);
  for (const auto& r : res) {
    EXPECT_EQ(r.status, "fitted");
    EXPECT_GE(r.exponent, 0.7) << r.pair.m << "," << r.pair.n;
    EXPECT_LE(r.exponent, 1.3) << r.pair.m << "," << r.pair.n;
    // the h = 1/2 defect is a finite-rank term on the lowest degrees
    EXPECT_GE(r.rank_at_zero, 1);
    EXPECT_LE(r.support_at_zero, std::max(std::abs(r.pair.m), std::abs(r.pair.n)));
  }
  EXPECT_EQ(res[0].rank_at_zero, 2);
  EXPECT_EQ(res[0].support_at_zero, 1);
}

TEST(AsymptoticScan, Sl2PairIsExactAndPreconditions) {
  auto res = asymptotic_scan({q("7/10"), q("3/5"), q("11/20")}, {{1, -1}, {0, 1}});
  for (const auto& r : res) {
    EXPECT_EQ(r.status, "exact");
    for (double v : r.metric) EXPECT_EQ(v, 0.0);
  }
  EXPECT_THROW(asymptotic_scan({q("3/5")}, {{2, -2}}), InsufficientDataError);
  EXPECT_THROW(asymptotic_scan({q("1/2"), q("3/5"), q("7/10")}, {{2, -2}}), DomainError);
  EXPECT_THROW(loglog_fit({1.0, 2.0}, {1.0, 2.0}), InsufficientDataError);
}

TEST(AsymptoticScan, LogLogFitRecoversPowerLaw) {
  auto [p, res] = loglog_fit({0.2, 0.1, 0.05, 0.025}, {3 * std::pow(0.2, 1.5), 3 * std::pow(0.1, 1.5),
                                                        3 * std::pow(0.05, 1.5), 3 * std::pow(0.025, 1.5)});
  EXPECT_NEAR(p, 1.5, 1e-12);
  EXPECT_NEAR(res, 0.0, 1e-12);
}

TEST(Exponentiate, ZeroTimeAndDiagonal) {
  auto mod = verma::make_module<Rational>(q("3/4"), 12);
  auto x = extended_generator(mod, 2, VF).op + extended_generator(mod, -2, VF).op;
  EXPECT_EQ(max_abs_diff(exponentiate(mod, x, 0.0), Matrix<Complex>::identity(13)), 0.0);
  auto e = exponentiate(mod, extended_generator(mod, 0, VF).op, 0.3);
  for (int i = 0; i <= 12; ++i)
    for (int j = 0; j <= 12; ++j) {
      const double want = i == j ? std::exp(0.3 * (i + 0.75)) : 0.0;
      EXPECT_NEAR(std::abs(e(i, j) - want), 0.0, 1e-12 * (1.0 + want));
    }
}

TEST(Exponentiate, GroupLaw) {
  auto mod = verma::make_module<Rational>(q("1"), 24);
  auto x = extended_generator(mod, 2, VF).op + extended_generator(mod, -2, VF).op;
  for (double t : {0.1, 0.2})
    for (double s : {0.1, 0.2}) EXPECT_LE(group_law_residual(mod, x, t, s), 1e-8) << t << " " << s;
}

TEST(Exponentiate, MatchesEigenPade) {
  auto mod = verma::make_module<Rational>(q("1"), 16);
  auto x = extended_generator(mod, 2, VF).op - extended_generator(mod, -2, VF).op +
           extended_generator(mod, 1, AB).op;
  auto gram = verma::shapovalov_form(mod);
  Eigen::MatrixXd a = 0.25 * to_eigen(to_orthonormal(x, gram));
  Eigen::MatrixXd want = a.exp();
  Eigen::MatrixXd got = to_eigen(exponentiate(mod, x, 0.25));
  EXPECT_LE((got - want).norm() / want.norm(), 1e-12);
}

TEST(Exponentiate, OverflowNamesTime) {
  auto mod = verma::make_module<Rational>(q("1"), 12);
  try {
    exponentiate(mod, extended_generator(mod, 0, VF).op, 1000.0);
    FAIL() << "expected overflow";
  } catch (const OverflowError& e) {
    EXPECT_NE(std::string(e.what()).find("t=1000"), std::string::npos) << e.what();
  }
}

// Spin-2 primary fields solved from the commutation relations alone are the
// vector-field generators: l_n = c (-1)^n rho(L_{-n-2}).
TEST(ModeConsistency, SpinTwoFieldIsVectorFieldFamily) {
  for (auto h : {q("3/4"), q("1")}) {
    auto mod = verma::make_module<Rational>(h, 12);
    auto field = qpft::solve_primary_field(mod, {Rational(2), -4, 2, std::nullopt});
    auto lowest = extended_generator(mod, 2, VF).op;
    // the solver normalizes the first nonzero coefficient of l_{-4} to 1
    Rational c = 0;
    for (int i = 0; i <= 12 && sgn(c) == 0; ++i)
      for (int r = 0; r <= 12; ++r)
        if (sgn(lowest(r, i)) != 0) {
          c = 1 / lowest(r, i);
          break;
        }
    for (int n = -4; n <= 2; ++n) {
      Rational sign = n % 2 == 0 ? 1 : -1;
      auto want = Rational(c * sign) * extended_generator(mod, -n - 2, VF).op;
      EXPECT_EQ(field.mode(n).matrix, want.matrix) << to_string(h) << " n=" << n;
    }
  }
}

TEST(ModeConsistency, SpinOneFieldIsCurrentFamily) {
  auto mod = verma::make_module<Rational>(q("3/4"), 12);
  auto field = qpft::solve_primary_field(mod, {Rational(1), -3, 2, std::nullopt});
  for (int n = -3; n <= 2; ++n) {
    Rational sign = (n + 3) % 2 == 0 ? 1 : -1;
    auto want = Rational(sign / 2) * extended_generator(mod, -n - 1, AB).op;
    EXPECT_EQ(field.mode(n).matrix, want.matrix) << "n=" << n;
  }
}

TEST(Grid, RunsAllSections) {
  nlohmann::json grid = {{"h", {"1", "3/4"}},
                         {"degree", {16}},
                         {"pairs", {{2, -2}, {1, -1, "abelian-current", "abelian-current"}}},
                         {"scan", {{"h", {"7/10", "3/5", "11/20"}}, {"pairs", {{2, -2}}}, {"degree", 16}}},
                         {"group_law", {{"degree", 12}, {"generators", {2, -2}}}}};
  auto out = run_grid(grid);
  EXPECT_EQ(out["defects"].size(), 4u);
  EXPECT_EQ(out["defects"][0]["h"], "1/1");
  EXPECT_TRUE(out["defects"][0].contains("window_norm"));
  EXPECT_EQ(out["scan"][0]["status"], "fitted");
  EXPECT_EQ(out["group_law"].size(), 4u);
  EXPECT_THROW(run_grid({{"h", {"1"}}, {"pairs", {{2}}}}), ParseError);
  EXPECT_THROW(run_grid({{"h", {"1"}}, {"pairs", {{2, -2, "bogus"}}}}), ParseError);
}

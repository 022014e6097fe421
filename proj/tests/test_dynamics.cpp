#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "droem/dynamics.hpp"
#include "droem/expm.hpp"

using namespace droem;
using namespace droem::dynamics;

namespace {

OperatorFn constant(const Matrix<Complex>& a) {
  return [a](double) { return a; };
}

Matrix<Complex> scalar_op(int n, Complex a) { return Matrix<Complex>::identity(n) * a; }

// A fixed non-normal 4x4 generator with complex entries.
Matrix<Complex> sample_operator() {
  Matrix<Complex> a(4, 4);
  const double re[4][4] = {{-0.2, 0.5, 0.0, 0.1}, {-0.5, 0.1, 0.3, 0.0}, {0.0, -0.3, -0.4, 0.6}, {0.2, 0.0, -0.6, 0.0}};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) a(i, j) = Complex(re[i][j], 0.1 * (i - j));
  return a;
}

State sample_state() { return {Complex(1, 0), Complex(0.5, -0.25), Complex(-0.3, 0.2), Complex(0, 0.8)}; }

double distance(const State& a, const State& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::norm(a[i] - b[i]);
  return std::sqrt(s);
}

State evolve(const OperatorFn& a, State phi, double T, double dt) {
  EvolState s{0.0, std::move(phi), std::nullopt, 0};
  const int n = static_cast<int>(std::llround(T / dt));
  for (int k = 0; k < n; ++k) s = step_deterministic(s, a, dt);
  return s.phi;
}

}  // namespace

TEST(Deterministic, ZeroOperatorLeavesStateUnchanged) {
  auto phi = sample_state();
  EXPECT_EQ(evolve(constant(Matrix<Complex>(4, 4)), phi, 1.0, 0.1), phi);
}

TEST(Deterministic, ScalarExponentialAndOrder) {
  const Complex a(1.0, 0.5);
  const Complex exact = std::exp(a);
  std::vector<double> errs;
  for (double dt : {0.1, 0.05, 0.025}) {
    auto phi = evolve(constant(scalar_op(1, a)), {Complex(1, 0)}, 1.0, dt);
    errs.push_back(std::abs(phi[0] - exact) / std::abs(exact));
  }
  EXPECT_LE(errs[0], 1e-4);
  for (int i = 0; i + 1 < 3; ++i) {
    const double order = std::log2(errs[i] / errs[i + 1]);
    EXPECT_GE(order, 3.8) << i;
    EXPECT_LE(order, 4.2) << i;
  }
}

TEST(Deterministic, MatrixSystemMatchesEigenExponential) {
  auto a = sample_operator();
  Eigen::MatrixXcd ea(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) ea(i, j) = a(i, j);
  Eigen::MatrixXcd prop = ea.exp();
  auto phi0 = sample_state();
  Eigen::VectorXcd v(4);
  for (int i = 0; i < 4; ++i) v(i) = phi0[i];
  Eigen::VectorXcd want = prop * v;
  auto got = evolve(constant(a), phi0, 1.0, 0.01);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(std::abs(got[i] - want(i)), 0.0, 1e-9);
}

TEST(Deterministic, TimeDependentOperatorIsSampledAtStages) {
  // dPhi/dt = 2t Phi has Phi(1) = e
  OperatorFn a = [](double t) { return scalar_op(1, Complex(2 * t, 0)); };
  auto phi = evolve(a, {Complex(1, 0)}, 1.0, 0.01);
  EXPECT_NEAR(phi[0].real(), std::exp(1.0), 5e-9);
}

TEST(Deterministic, Linearity) {
  auto a = sample_operator();
  State x = sample_state(), y{Complex(0.1, 0.2), Complex(-1, 0), Complex(0.3, 0.3), Complex(0, -0.5)};
  const Complex alpha(0.7, -0.2), beta(-1.3, 0.4);
  State comb(4);
  for (int i = 0; i < 4; ++i) comb[i] = alpha * x[i] + beta * y[i];
  auto ex = evolve(constant(a), x, 1.0, 0.01), ey = evolve(constant(a), y, 1.0, 0.01);
  auto ec = evolve(constant(a), comb, 1.0, 0.01);
  State sup(4);
  for (int i = 0; i < 4; ++i) sup[i] = alpha * ex[i] + beta * ey[i];
  EXPECT_LE(distance(ec, sup), 1e-10);
}

TEST(Deterministic, NonlinearityHookScalesOperator) {
  Nonlinearity nl = [](const State&) { return Complex(2, 0); };
  EvolState s{0.0, {Complex(1, 0)}, std::nullopt, 0};
  for (int k = 0; k < 100; ++k) s = step_deterministic(s, constant(scalar_op(1, 1.0)), 0.01, nl);
  EXPECT_NEAR(s.phi[0].real(), std::exp(2.0), 1e-7);
}

TEST(Deterministic, NonFiniteStateRaisesStability) {
  EvolState s{0.0, {Complex(1e300, 0)}, std::nullopt, 0};
  EXPECT_THROW(step_deterministic(s, constant(scalar_op(1, 1e10)), 0.1), StabilityError);
}

TEST(Stochastic, ZeroNoiseIsExplicitEuler) {
  auto a = sample_operator();
  EvolState s{0.0, sample_state(), std::nullopt, 0};
  std::vector<NoiseChannel> noise{{constant(Matrix<Complex>(4, 4)), 0.7}, {constant(a), 0.0}};
  auto out = step_stochastic(s, constant(a), noise, 0.05, 9);
  auto want = s.phi;
  auto da = act(a, s.phi);
  for (int i = 0; i < 4; ++i) want[i] += 0.05 * da[i];
  EXPECT_EQ(out.phi, want);
  EXPECT_EQ(out.step, 1u);
  EXPECT_DOUBLE_EQ(out.t, 0.05);
}

TEST(Stochastic, SeededTrajectoriesAreBitIdentical) {
  auto a = sample_operator();
  std::vector<NoiseChannel> noise{{constant(a), 0.3}, {constant(scalar_op(4, Complex(0, 1))), 0.2}};
  auto run = [&](std::uint64_t seed) {
    EvolState s{0.0, sample_state(), std::nullopt, 0};
    for (int k = 0; k < 200; ++k) s = step_stochastic(s, constant(a), noise, 0.01, seed);
    return s.phi;
  };
  EXPECT_EQ(run(42), run(42));
  EXPECT_NE(run(42), run(43));
}

TEST(Stochastic, GaussianStreamMoments) {
  double m = 0.0, v = 0.0;
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    const double x = gaussian(7, 0, k);
    m += x;
    v += x * x;
  }
  m /= n;
  v = v / n - m * m;
  EXPECT_NEAR(m, 0.0, 5 * std::sqrt(1.0 / n));
  EXPECT_NEAR(v, 1.0, 5 * std::sqrt(2.0 / n));
  EXPECT_NE(gaussian(7, 0, 5), gaussian(7, 1, 5));
  EXPECT_EQ(gaussian(7, 1, 5), gaussian(7, 1, 5));
}

TEST(Stochastic, GeometricMeanWithinThreeStandardErrors) {
  const double a = 0.5, b = 0.3;
  auto r = scalar_geometric_mean(a, b, 1.0, 0.001, 10000, 2024);
  EXPECT_LE(std::abs(r.mean - std::exp(a)), 3 * r.std_error) << r.mean << " se " << r.std_error;
  EXPECT_GT(r.std_error, 0.0);
}

TEST(Stochastic, WeakOrderOfMean) {
  const double a = 1.0, b = 0.1;
  std::vector<double> x, y;
  for (double dt : {0.1, 0.05, 0.025}) {
    auto r = scalar_geometric_mean(a, b, 1.0, dt, 10000, 77);
    x.push_back(std::log(dt));
    y.push_back(std::log(std::abs(r.mean - std::exp(a))));
  }
  const double slope = ((y[2] - y[0]) / (x[2] - x[0]));
  EXPECT_GE(slope, 0.7);
  EXPECT_LE(slope, 1.3);
}

TEST(Memory, ZeroStrengthFreezesState) {
  EvolState s{0.0, sample_state(), std::nullopt, 0};
  for (int k = 0; k < 50; ++k) s = memory_step(s, constant(sample_operator()), {3.0, 0.0}, 0.02);
  EXPECT_EQ(s.phi, sample_state());
  ASSERT_TRUE(s.memory_aux.has_value());
}

TEST(Memory, FastKernelRecoversMemorylessDynamics) {
  const double lambda = 100.0;
  auto a = sample_operator();
  EvolState s{0.0, sample_state(), std::nullopt, 0};
  for (int k = 0; k < 1000; ++k) s = memory_step(s, constant(a), {lambda, lambda}, 0.001);
  auto direct = evolve(constant(a), sample_state(), 1.0, 0.001);
  EXPECT_LE(distance(s.phi, direct), 5e-2);
}

TEST(Memory, MatchesAugmentedExponential) {
  const double lambda = 2.0, kappa = 1.5;
  auto a = sample_operator();
  Matrix<Complex> big(8, 8);
  for (int i = 0; i < 4; ++i) {
    big(i, 4 + i) = kappa;
    big(4 + i, 4 + i) = -lambda;
    for (int j = 0; j < 4; ++j) big(4 + i, j) = a(i, j);
  }
  auto prop = expm(big);
  State y0 = sample_state();
  y0.resize(8);
  auto want = act(prop, y0);
  EvolState s{0.0, sample_state(), std::nullopt, 0};
  for (int k = 0; k < 100; ++k) s = memory_step(s, constant(a), {lambda, kappa}, 0.01);
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(std::abs(s.phi[i] - want[i]), 0.0, 1e-8);
    EXPECT_NEAR(std::abs((*s.memory_aux)[i] - want[4 + i]), 0.0, 1e-8);
  }
}

TEST(Screening, IdentityBandAndZero) {
  auto phi = sample_state();
  EXPECT_EQ(apply_screening(ScreeningSpec::identity(), phi), phi);
  auto once = apply_screening(ScreeningSpec::band(0, 1), phi);
  EXPECT_EQ(apply_screening(ScreeningSpec::band(0, 1), once), once);
  EXPECT_EQ(once[2], Complex(0, 0));
  EXPECT_EQ(once[3], Complex(0, 0));
  EXPECT_EQ(once[1], phi[1]);
  for (const auto& x : apply_screening(ScreeningSpec::zero(), phi)) EXPECT_EQ(x, Complex(0, 0));
  ScreeningSpec bad{ScreeningSpec::Kind::Matrix, 0, 0, Matrix<Complex>(3, 3)};
  EXPECT_THROW(apply_screening(bad, phi), ShapeError);
}

TEST(Screening, BandProjectorOnRandomStateKillsKernelExactly) {
  State phi(13);
  for (int i = 0; i < 13; ++i) phi[i] = Complex(gaussian(3, 0, i), gaussian(3, 1, i));
  auto psi = apply_screening(ScreeningSpec::band(0, 4), phi);
  for (int i = 0; i < 13; ++i) EXPECT_EQ(psi[i], i <= 4 ? phi[i] : Complex(0, 0));
}

TEST(Config, Validation) {
  EvolutionConfig c;
  EXPECT_NO_THROW(c.validate());
  c.dt = 0.2;
  EXPECT_THROW(c.validate(), DomainError);
  c.dt = 0.01;
  c.noise_amplitudes = {0.1, -0.1};
  EXPECT_THROW(c.validate(), DomainError);
  c.noise_amplitudes = {};
  c.memory = MemoryConfig{0.0, 1.0};
  EXPECT_THROW(c.validate(), DomainError);
}

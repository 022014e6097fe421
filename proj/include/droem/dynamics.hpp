#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "droem/matrix.hpp"

// Time evolution of the image state Phi in complex double.
//
// Deterministic steps are classical RK4 on dPhi = A(t) Phi dt. Stochastic
// steps are Euler-Maruyama in the Ito convention, with each Wiener
// increment drawn from a counter-keyed stream (seed, channel, step), so a
// trajectory never depends on how many draws happened before it.

namespace droem::dynamics {

using State = std::vector<Complex>;
using OperatorFn = std::function<Matrix<Complex>(double t)>;
/// Optional weak nonlinearity: a state-dependent factor multiplying A.
using Nonlinearity = std::function<Complex(const State&)>;

struct EvolState {
  double t = 0.0;
  State phi;
  std::optional<State> memory_aux;
  /// Number of steps taken; the counter of the noise stream.
  std::uint64_t step = 0;
};

struct NoiseChannel {
  OperatorFn B;
  double amplitude = 0.0;
};

struct MemoryConfig {
  double lambda = 1.0;
  double kappa = 1.0;
};

enum class Mode { Deterministic, Stochastic };

struct EvolutionConfig {
  Mode mode = Mode::Deterministic;
  double dt = 0.01;
  std::uint64_t seed = 0;
  std::vector<double> noise_amplitudes;
  std::optional<MemoryConfig> memory;

  /// DomainError unless dt is in (0, 0.1], amplitudes are >= 0 and lambda > 0.
  void validate() const;
};

/// a v; named so it never competes with std::apply under ADL.
State act(const Matrix<Complex>& a, const State& v);

/// Standard normal draw k of (seed, channel, step). SplitMix64 keys a
/// uniform pair, Box-Muller turns it into a Gaussian.
double gaussian(std::uint64_t seed, std::uint64_t channel, std::uint64_t step, std::uint64_t k = 0);

EvolState step_deterministic(const EvolState& s, const OperatorFn& a, double dt, const Nonlinearity& nl = nullptr);

/// Phi += A Phi dt + sum_a amp_a B_a Phi sqrt(dt) xi_a, A and B_a taken at t.
EvolState step_stochastic(const EvolState& s, const OperatorFn& a, const std::vector<NoiseChannel>& noise, double dt,
                          std::uint64_t seed);

/// dPhi/dt = kappa M, dM/dt = -lambda M + A Phi, by RK4 on the pair. A zero
/// auxiliary is created when the state has none.
EvolState memory_step(const EvolState& s, const OperatorFn& a, const MemoryConfig& cfg, double dt);

/// Coordinate screening: identity, zero, or the projector keeping degrees
/// lo..hi. A general matrix may be given instead.
struct ScreeningSpec {
  enum class Kind { Identity, Zero, Band, Matrix };
  Kind kind = Kind::Identity;
  int lo = 0;
  int hi = 0;
  droem::Matrix<Complex> matrix;

  static ScreeningSpec identity() { return {}; }
  static ScreeningSpec zero() { return {Kind::Zero, 0, -1, {}}; }
  static ScreeningSpec band(int lo, int hi) { return {Kind::Band, lo, hi, {}}; }
};

/// Psi = J Phi; ShapeError when a matrix J does not fit Phi.
State apply_screening(const ScreeningSpec& j, const State& phi);

struct MonteCarloMean {
  Complex mean;
  double std_error = 0.0;
};

/// Euler-Maruyama ensemble for the scalar test dPhi = a Phi dt + b Phi dw,
/// Phi(0) = 1, path p keyed by seed + p. Paths run in parallel chunks.
MonteCarloMean scalar_geometric_mean(double a, double b, double T, double dt, int paths, std::uint64_t seed);

/// StabilityError naming the step when any entry is NaN or infinite.
void check_finite(const EvolState& s);

}  // namespace droem::dynamics

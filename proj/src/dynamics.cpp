#include "droem/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numbers>
#include <thread>

namespace droem::dynamics {

void EvolutionConfig::validate() const {
  if (!(dt > 0.0 && dt <= 0.1)) throw DomainError("dt must lie in (0, 0.1], got " + std::to_string(dt));
  for (double a : noise_amplitudes)
    if (!(a >= 0.0)) throw DomainError("noise amplitudes must be nonnegative");
  if (memory && !(memory->lambda > 0.0)) throw DomainError("memory kernel rate must be positive");
}

State act(const Matrix<Complex>& a, const State& v) {
  if (a.cols() != v.size()) throw ShapeError("operator and state sizes differ");
  State out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    Complex acc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * v[j];
    out[i] = acc;
  }
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// uniform in (0, 1], never 0 so the logarithm stays finite
double unit(std::uint64_t bits) { return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53; }

void axpy(State& y, Complex a, const State& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

}  // namespace

double gaussian(std::uint64_t seed, std::uint64_t channel, std::uint64_t step, std::uint64_t k) {
  std::uint64_t key = splitmix64(seed);
  key = splitmix64(key ^ channel);
  key = splitmix64(key ^ step);
  key = splitmix64(key ^ k);
  const double u1 = unit(key);
  const double u2 = unit(splitmix64(key));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void check_finite(const EvolState& s) {
  auto bad = [](const State& v) {
    for (const auto& x : v)
      if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) return true;
    return false;
  };
  if (bad(s.phi) || (s.memory_aux && bad(*s.memory_aux)))
    throw StabilityError("non-finite state after step " + std::to_string(s.step) + " at t=" + std::to_string(s.t));
}

EvolState step_deterministic(const EvolState& s, const OperatorFn& a, double dt, const Nonlinearity& nl) {
  auto f = [&](double t, const State& y) {
    State out = act(a(t), y);
    if (nl) {
      const Complex c = nl(y);
      for (auto& x : out) x *= c;
    }
    return out;
  };
  const State k1 = f(s.t, s.phi);
  State y = s.phi;
  axpy(y, dt / 2, k1);
  const State k2 = f(s.t + dt / 2, y);
  y = s.phi;
  axpy(y, dt / 2, k2);
  const State k3 = f(s.t + dt / 2, y);
  y = s.phi;
  axpy(y, dt, k3);
  const State k4 = f(s.t + dt, y);

  EvolState out = s;
  for (std::size_t i = 0; i < y.size(); ++i) out.phi[i] += dt / 6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  out.t = s.t + dt;
  out.step = s.step + 1;
  check_finite(out);
  return out;
}

EvolState step_stochastic(const EvolState& s, const OperatorFn& a, const std::vector<NoiseChannel>& noise, double dt,
                          std::uint64_t seed) {
  EvolState out = s;
  axpy(out.phi, dt, act(a(s.t), s.phi));
  const double sq = std::sqrt(dt);
  for (std::size_t c = 0; c < noise.size(); ++c) {
    if (noise[c].amplitude == 0.0) continue;
    const double dw = sq * gaussian(seed, c, s.step);
    axpy(out.phi, noise[c].amplitude * dw, act(noise[c].B(s.t), s.phi));
  }
  out.t = s.t + dt;
  out.step = s.step + 1;
  check_finite(out);
  return out;
}

EvolState memory_step(const EvolState& s, const OperatorFn& a, const MemoryConfig& cfg, double dt) {
  const std::size_t n = s.phi.size();
  const State m0 = s.memory_aux ? *s.memory_aux : State(n);
  if (m0.size() != n) throw ShapeError("memory auxiliary size differs from the state");

  struct Pair {
    State phi, m;
  };
  auto f = [&](double t, const Pair& y) {
    Pair d{State(n), act(a(t), y.phi)};
    for (std::size_t i = 0; i < n; ++i) {
      d.phi[i] = cfg.kappa * y.m[i];
      d.m[i] -= cfg.lambda * y.m[i];
    }
    return d;
  };
  auto shifted = [&](const Pair& base, double h, const Pair& k) {
    Pair y = base;
    axpy(y.phi, h, k.phi);
    axpy(y.m, h, k.m);
    return y;
  };
  const Pair y0{s.phi, m0};
  const Pair k1 = f(s.t, y0);
  const Pair k2 = f(s.t + dt / 2, shifted(y0, dt / 2, k1));
  const Pair k3 = f(s.t + dt / 2, shifted(y0, dt / 2, k2));
  const Pair k4 = f(s.t + dt, shifted(y0, dt, k3));

  EvolState out = s;
  State m = m0;
  for (std::size_t i = 0; i < n; ++i) {
    out.phi[i] += dt / 6 * (k1.phi[i] + 2.0 * k2.phi[i] + 2.0 * k3.phi[i] + k4.phi[i]);
    m[i] += dt / 6 * (k1.m[i] + 2.0 * k2.m[i] + 2.0 * k3.m[i] + k4.m[i]);
  }
  out.memory_aux = std::move(m);
  out.t = s.t + dt;
  out.step = s.step + 1;
  check_finite(out);
  return out;
}

MonteCarloMean scalar_geometric_mean(double a, double b, double T, double dt, int paths, std::uint64_t seed) {
  if (paths < 2) throw DomainError("a Monte-Carlo mean needs at least 2 paths");
  const auto steps = static_cast<std::uint64_t>(std::llround(T / dt));
  const Matrix<Complex> am = Matrix<Complex>::identity(1) * Complex(a, 0.0);
  const Matrix<Complex> bm = Matrix<Complex>::identity(1);
  const OperatorFn fa = [&am](double) { return am; };
  const std::vector<NoiseChannel> noise{{[&bm](double) { return bm; }, b}};

  const int chunks = static_cast<int>(std::clamp(std::thread::hardware_concurrency(), 1u, 16u));
  std::vector<std::future<std::pair<Complex, double>>> jobs;
  for (int c = 0; c < chunks; ++c)
    jobs.push_back(std::async(std::launch::async, [&, c] {
      Complex sum = 0.0;
      double sum_sq = 0.0;
      for (int p = c; p < paths; p += chunks) {
        EvolState s{0.0, {Complex(1.0, 0.0)}, std::nullopt, 0};
        for (std::uint64_t k = 0; k < steps; ++k) s = step_stochastic(s, fa, noise, dt, seed + p);
        sum += s.phi[0];
        sum_sq += std::norm(s.phi[0]);
      }
      return std::pair{sum, sum_sq};
    }));
  Complex sum = 0.0;
  double sum_sq = 0.0;
  for (auto& j : jobs) {
    auto [s1, s2] = j.get();
    sum += s1;
    sum_sq += s2;
  }
  const Complex mean = sum / static_cast<double>(paths);
  const double var = (sum_sq - paths * std::norm(mean)) / (paths - 1);
  return {mean, std::sqrt(std::max(var, 0.0) / paths)};
}

State apply_screening(const ScreeningSpec& j, const State& phi) {
  switch (j.kind) {
    case ScreeningSpec::Kind::Identity:
      return phi;
    case ScreeningSpec::Kind::Zero:
      return State(phi.size());
    case ScreeningSpec::Kind::Band: {
      State out(phi.size());
      for (int i = std::max(j.lo, 0); i <= j.hi && i < static_cast<int>(phi.size()); ++i) out[i] = phi[i];
      return out;
    }
    case ScreeningSpec::Kind::Matrix:
      if (j.matrix.rows() != phi.size() || j.matrix.cols() != phi.size())
        throw ShapeError("screening matrix does not match the state size");
      return act(j.matrix, phi);
  }
  return phi;
}

}  // namespace droem::dynamics

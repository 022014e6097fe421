#include "droem/symmetries.hpp"

#include <cmath>
#include <future>

#include <Eigen/Dense>

namespace droem::symmetries {

std::string to_string(Kind k) { return k == Kind::VectorField ? "vector-field" : "abelian-current"; }

Kind parse_kind(const std::string& s) {
  if (s == "vector-field") return Kind::VectorField;
  if (s == "abelian-current") return Kind::AbelianCurrent;
  throw ParseError("unknown generator kind '" + s + "'");
}

std::vector<double> tail_norms(const Matrix<Complex>& a, int d0) {
  const int n = static_cast<int>(a.rows());
  std::vector<double> out;
  double acc = 0.0;
  // grow the leading block one row and column at a time
  for (int d = 0; d < n; ++d) {
    for (int j = 0; j <= d; ++j) acc += std::norm(a(d, j));
    for (int i = 0; i < d; ++i) acc += std::norm(a(i, d));
    if (d >= d0) out.push_back(std::sqrt(acc));
  }
  return out;
}

double DefectReport::hbar() const { return Rational(h - Rational(1, 2)).get_d(); }

double DefectReport::window_norm(int d) const {
  if (d < d0 || d > degree) throw DomainError("window degree " + std::to_string(d) + " outside reported range");
  return tail_norms[d - d0];
}

double DefectReport::convergence_indicator() const {
  const double full = window_norm(degree);
  if (full == 0.0) return 0.0;
  const int q = std::max(d0, (3 * degree + 3) / 4);
  return (full - window_norm(q)) / full;
}

DefectReport defect(const verma::ExactModule& mod, int m, int n, Kind km, Kind kn, int d0) {
  if (d0 < 0 || d0 > mod.degree()) throw DomainError("d0 must lie in [0, D]");
  auto a = extended_generator(mod, m, km).op;
  auto b = extended_generator(mod, n, kn).op;
  auto diff = verma::commutator(a, b) - expected_bracket(mod, m, km, n, kn);
  auto gram = verma::shapovalov_form(mod);
  // columns past exact_below only record truncation loss, not a defect
  for (int j = std::max(diff.exact_below + 1, 0); j <= mod.degree(); ++j)
    for (int i = 0; i <= mod.degree(); ++i) diff.matrix(i, j) = 0;

  DefectReport r;
  r.m = m;
  r.n = n;
  r.kind_m = km;
  r.kind_n = kn;
  r.h = mod.h();
  r.degree = mod.degree();
  r.d0 = d0;
  r.valid_degrees = diff.exact_below;
  r.exact_zero = diff.matrix.is_zero();
  r.orthonormal = to_orthonormal(diff, gram);
  r.tail_norms = tail_norms(r.orthonormal, d0);
  r.raw_tail_norms = tail_norms(droem::convert<Complex>(diff.matrix), d0);
  return r;
}

std::pair<double, double> loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("fit needs equally many x and y values");
  if (x.size() < 3) throw InsufficientDataError("log-log fit needs at least 3 points, got " + std::to_string(x.size()));
  const int k = static_cast<int>(x.size());
  Eigen::MatrixXd a(k, 2);
  Eigen::VectorXd b(k);
  for (int i = 0; i < k; ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw DomainError("log-log fit needs positive data");
    a(i, 0) = 1.0;
    a(i, 1) = std::log(x[i]);
    b(i) = std::log(y[i]);
  }
  Eigen::Vector2d coef = a.colPivHouseholderQr().solve(b);
  const double rms = std::sqrt((a * coef - b).squaredNorm() / k);
  return {coef(1), rms};
}

namespace {

double window_frobenius(const Matrix<Complex>& a, int window) {
  double s = 0.0;
  for (int i = 0; i <= window; ++i)
    for (int j = 0; j <= window; ++j) s += std::norm(a(i, j));
  return std::sqrt(s);
}

}  // namespace

std::vector<ScanResult> asymptotic_scan(const std::vector<Rational>& h_values, const std::vector<ScanPair>& pairs,
                                        const ScanOptions& opts) {
  if (h_values.size() < 3)
    throw InsufficientDataError("asymptotic scan needs at least 3 weights, got " + std::to_string(h_values.size()));
  const Rational half(1, 2);
  for (const auto& h : h_values)
    if (h <= half) throw DomainError("asymptotic scan needs h > 1/2, got " + droem::to_string(h));
  if (opts.window < 0 || opts.window > opts.degree) throw DomainError("scan window must lie in [0, D]");

  const auto base_mod = verma::make_module<Rational>(half, opts.degree);
  std::vector<verma::ExactModule> mods;
  for (const auto& h : h_values) mods.push_back(verma::make_module<Rational>(h, opts.degree));

  std::vector<ScanResult> out;
  for (const auto& p : pairs) {
    ScanResult r;
    r.pair = p;
    auto base = defect(base_mod, p.m, p.n, p.km, p.kn);

    Eigen::MatrixXcd w(opts.window + 1, opts.window + 1);
    for (int i = 0; i <= opts.window; ++i)
      for (int j = 0; j <= opts.window; ++j) w(i, j) = base.orthonormal(i, j);
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(w);
    lu.setThreshold(1e-12);
    r.rank_at_zero = static_cast<int>(lu.rank());
    for (int i = 0; i <= opts.window; ++i)
      for (int j = 0; j <= opts.window; ++j)
        if (w(i, j) != Complex(0.0, 0.0)) r.support_at_zero = std::max({r.support_at_zero, i, j});

    std::vector<std::future<DefectReport>> jobs;
    for (const auto& mod : mods)
      jobs.push_back(std::async(std::launch::async, [&mod, &p] { return defect(mod, p.m, p.n, p.km, p.kn); }));

    bool all_zero = base.exact_zero;
    std::vector<double> xs;
    for (std::size_t k = 0; k < mods.size(); ++k) {
      auto d = jobs[k].get();
      all_zero = all_zero && d.exact_zero;
      r.hbar.push_back(h_values[k] - half);
      xs.push_back(r.hbar.back().get_d());
      r.metric.push_back(window_frobenius(d.orthonormal - base.orthonormal, opts.window));
      r.raw_metric.push_back(window_frobenius(d.orthonormal, opts.window));
    }
    if (all_zero) {
      r.status = "exact";
    } else {
      r.status = "fitted";
      std::tie(r.exponent, r.log_residual) = loglog_fit(xs, r.metric);
      bool raw_positive = true;
      for (double v : r.raw_metric) raw_positive = raw_positive && v > 0.0;
      if (raw_positive) r.raw_exponent = loglog_fit(xs, r.raw_metric).first;
    }
    out.push_back(std::move(r));
  }
  return out;
}

Matrix<Complex> exponentiate(const verma::ExactModule& mod, const LinOp<Rational>& x, double t) {
  auto gram = verma::shapovalov_form(mod);
  Matrix<Complex> a = to_orthonormal(x, gram) * Complex(t, 0.0);
  try {
    return expm(a);
  } catch (const OverflowError& e) {
    throw OverflowError(std::string(e.what()) + " at t=" + std::to_string(t));
  }
}

double group_law_residual(const verma::ExactModule& mod, const LinOp<Rational>& x, double t, double s) {
  auto lhs = exponentiate(mod, x, t) * exponentiate(mod, x, s);
  return std::sqrt((lhs - exponentiate(mod, x, t + s)).frobenius_sq());
}

nlohmann::json to_json(const DefectReport& r) {
  return {{"m", r.m},
          {"n", r.n},
          {"kind_m", to_string(r.kind_m)},
          {"kind_n", to_string(r.kind_n)},
          {"h", droem::to_string(r.h)},
          {"hbar", droem::to_string(Rational(r.h - Rational(1, 2)))},
          {"D", r.degree},
          {"d0", r.d0},
          {"valid_degrees", r.valid_degrees},
          {"exact_zero", r.exact_zero},
          {"tail_norms", r.tail_norms},
          {"raw_tail_norms", r.raw_tail_norms},
          {"convergence_indicator", r.convergence_indicator()}};
}

nlohmann::json to_json(const ScanResult& r) {
  nlohmann::json hb = nlohmann::json::array();
  for (const auto& q : r.hbar) hb.push_back(droem::to_string(q));
  return {{"m", r.pair.m},
          {"n", r.pair.n},
          {"kind_m", to_string(r.pair.km)},
          {"kind_n", to_string(r.pair.kn)},
          {"hbar", hb},
          {"metric", r.metric},
          {"raw_metric", r.raw_metric},
          {"rank_at_zero", r.rank_at_zero},
          {"support_at_zero", r.support_at_zero},
          {"status", r.status},
          {"exponent", r.exponent},
          {"log_residual", r.log_residual},
          {"raw_exponent", r.raw_exponent}};
}

namespace {

ScanPair parse_pair(const nlohmann::json& j) {
  if (!j.is_array() || j.size() < 2 || j.size() > 4) throw ParseError("pair must be [m, n] or [m, n, kind_m, kind_n]");
  ScanPair p{j[0].get<int>(), j[1].get<int>()};
  if (j.size() >= 3) p.km = parse_kind(j[2].get<std::string>());
  if (j.size() == 4) p.kn = parse_kind(j[3].get<std::string>());
  return p;
}

Rational rational_from_json(const nlohmann::json& v) {
  if (v.is_string()) return parse_rational(v.get<std::string>());
  if (v.is_number_integer()) return Rational(v.get<long>());
  throw ParseError("weights must be integers or \"p/q\" strings");
}

std::vector<Rational> parse_rationals(const nlohmann::json& j) {
  std::vector<Rational> out;
  for (const auto& v : j) out.push_back(rational_from_json(v));
  return out;
}

std::vector<ScanPair> parse_pairs(const nlohmann::json& j) {
  std::vector<ScanPair> out;
  for (const auto& p : j) out.push_back(parse_pair(p));
  return out;
}

}  // namespace

nlohmann::json run_grid(const nlohmann::json& grid) {
  nlohmann::json out = nlohmann::json::object();
  try {
    if (grid.contains("h")) {
      const auto hs = parse_rationals(grid.at("h"));
      const auto degrees = grid.value("degree", std::vector<int>{32});
      const auto pairs = parse_pairs(grid.at("pairs"));
      const int d0 = grid.value("d0", 0);
      const int window = grid.value("window", 12);
      std::vector<std::future<nlohmann::json>> jobs;
      for (const auto& h : hs)
        for (int d : degrees)
          for (const auto& p : pairs)
            jobs.push_back(std::async(std::launch::async, [h, d, p, d0, window] {
              auto mod = verma::make_module<Rational>(h, d);
              auto r = defect(mod, p.m, p.n, p.km, p.kn, d0);
              auto j = to_json(r);
              if (window >= d0 && window <= d) j["window_norm"] = r.window_norm(window);
              return j;
            }));
      nlohmann::json defects = nlohmann::json::array();
      for (auto& f : jobs) defects.push_back(f.get());
      out["defects"] = defects;
    }
    if (grid.contains("scan")) {
      const auto& s = grid.at("scan");
      ScanOptions opts{s.value("degree", 32), s.value("window", 12)};
      nlohmann::json scans = nlohmann::json::array();
      for (const auto& r : asymptotic_scan(parse_rationals(s.at("h")), parse_pairs(s.at("pairs")), opts))
        scans.push_back(to_json(r));
      out["scan"] = scans;
    }
    if (grid.contains("group_law")) {
      const auto& g = grid.at("group_law");
      auto mod = verma::make_module<Rational>(rational_from_json(g.value("h", nlohmann::json("1"))),
                                              g.value("degree", 24));
      auto x = verma::zero_op<Rational>(mod.degree());
      for (const auto& gen : g.at("generators")) {
        Kind k = gen.is_array() && gen.size() > 1 ? parse_kind(gen[1].get<std::string>()) : Kind::VectorField;
        int idx = gen.is_array() ? gen[0].get<int>() : gen.get<int>();
        x = x + extended_generator(mod, idx, k).op;
      }
      nlohmann::json rows = nlohmann::json::array();
      for (double t : g.value("t", std::vector<double>{0.1, 0.2}))
        for (double s : g.value("s", std::vector<double>{0.1, 0.2}))
          rows.push_back({{"t", t}, {"s", s}, {"residual", group_law_residual(mod, x, t, s)}});
      out["group_law"] = rows;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed symmetry grid: ") + e.what());
  }
  return out;
}

}  // namespace droem::symmetries

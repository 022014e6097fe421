#include "droem/session.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include <spdlog/spdlog.h>

#include "droem/cutoff.hpp"
#include "droem/symmetries.hpp"

namespace droem::session {

using nlohmann::json;

namespace {

double number(const json& j, const char* key) {
  if (!j.is_number()) throw ParseError(std::string("\"") + key + "\" must be a number");
  return j.get<double>();
}

Complex complex_from(const json& j, const char* key) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw ParseError(std::string("\"") + key + "\" must be [re, im]");
  return {j[0].get<double>(), j[1].get<double>()};
}

json complex_json(Complex z) { return json::array({z.real(), z.imag()}); }

json state_json(const dynamics::State& v) {
  json a = json::array();
  for (const auto& z : v) a.push_back(complex_json(z));
  return a;
}

dynamics::State state_from(const json& j, const char* key) {
  if (!j.is_array()) throw ParseError(std::string("\"") + key + "\" must be an array");
  dynamics::State out;
  for (const auto& z : j) out.push_back(complex_from(z, key));
  return out;
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* s) { return k == s; }))
      throw ParseError("unknown key \"" + k + "\" in " + where);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Gaze events

GazeEvent parse_gaze(const json& j) {
  if (!j.is_object()) throw ParseError("gaze message must be an object");
  if (j.contains("type") && j["type"] != "gaze") throw ParseError("not a gaze message");
  if (!j.contains("t") || !j.contains("u")) throw ParseError("gaze message needs \"t\" and \"u\"");
  GazeEvent e;
  e.t = number(j["t"], "t");
  e.u = complex_from(j["u"], "u");
  if (j.contains("du")) e.du = complex_from(j["du"], "du");
  if (j.contains("xi")) {
    if (!j["xi"].is_array()) throw ParseError("\"xi\" must be an array");
    for (const auto& x : j["xi"]) e.xi.push_back(number(x, "xi"));
  }
  if (j.contains("observer")) {
    if (!j["observer"].is_number_integer() || j["observer"].get<int>() < 0)
      throw ParseError("\"observer\" must be a nonnegative integer");
    e.observer = j["observer"].get<int>();
  }
  if (!std::isfinite(e.t) || !std::isfinite(std::abs(e.u)) || !std::isfinite(std::abs(e.du)))
    throw ParseError("gaze values must be finite");
  if (std::abs(e.u) > 1.0) throw DomainError("gaze point outside the unit disk: |u| = " + std::to_string(std::abs(e.u)));
  return e;
}

json to_json(const GazeEvent& e) {
  json j{{"type", "gaze"}, {"t", e.t}, {"u", complex_json(e.u)}, {"du", complex_json(e.du)}, {"xi", e.xi}};
  if (e.observer != 0) j["observer"] = e.observer;
  return j;
}

int validate_events(const std::vector<GazeEvent>& events) {
  std::map<int, const GazeEvent*> last;
  int warnings = 0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (std::abs(e.u) > 1.0) throw DomainError("event " + std::to_string(i) + ": gaze point outside the unit disk");
    auto it = last.find(e.observer);
    if (it != last.end()) {
      const GazeEvent& p = *it->second;
      if (!(e.t > p.t))
        throw ParseError("event " + std::to_string(i) + ": time " + std::to_string(e.t) +
                         " does not increase past " + std::to_string(p.t));
      const Complex v = (e.u - p.u) / (e.t - p.t);
      const Complex du = 0.5 * (e.du + p.du);
      if (std::abs(du - v) > 0.2 * std::abs(v) + 1e-12) {
        ++warnings;
        spdlog::warn("event {}: du = ({:.4g}, {:.4g}) is off from du/dt = ({:.4g}, {:.4g}) by more than 20%", i,
                     du.real(), du.imag(), v.real(), v.imag());
      }
    }
    last[e.observer] = &e;
  }
  return warnings;
}

std::vector<GazeEvent> read_trajectory(std::istream& in) {
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  std::vector<GazeEvent> out;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') {
    json arr;
    try {
      arr = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("trajectory: ") + e.what());
    }
    for (const auto& j : arr) out.push_back(parse_gaze(j));
    return out;
  }
  std::istringstream lines(text);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("trajectory line " + std::to_string(n) + ": " + e.what());
    }
    if (j.contains("type") && j["type"] != "gaze") continue;
    out.push_back(parse_gaze(j));
  }
  return out;
}

std::vector<GazeEvent> read_trajectory_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trajectory " + path);
  return read_trajectory(in);
}

// ---------------------------------------------------------------------------
// Config

Complex Schedule::operator()(double t, const std::vector<double>& xi) const {
  double extra = 0.0;
  for (std::size_t k = 0; k < xi_gain.size() && k < xi.size(); ++k) extra += xi_gain[k] * xi[k];
  Complex m = c;
  if (a != 0.0) m += a * std::sin(omega * t);
  return m + extra;
}

namespace {

Schedule schedule_from(const json& j) {
  if (j.is_number() || j.is_array()) return {complex_from(j, "schedule"), 0.0, 0.0, {}};
  reject_unknown(j, {"c", "a", "omega", "xi_gain"}, "schedule");
  Schedule s;
  if (j.contains("c")) s.c = complex_from(j["c"], "c");
  if (j.contains("a")) s.a = number(j["a"], "a");
  if (j.contains("omega")) s.omega = number(j["omega"], "omega");
  if (j.contains("xi_gain"))
    for (const auto& g : j["xi_gain"]) s.xi_gain.push_back(number(g, "xi_gain"));
  return s;
}

json schedule_json(const Schedule& s) {
  return {{"c", complex_json(s.c)}, {"a", s.a}, {"omega", s.omega}, {"xi_gain", s.xi_gain}};
}

std::vector<Schedule> schedules_from(const json& j) {
  if (!j.is_array()) throw ParseError("\"schedules\" must be an array");
  std::vector<Schedule> out;
  for (const auto& s : j) out.push_back(schedule_from(s));
  return out;
}

json schedules_json(const std::vector<Schedule>& v) {
  json a = json::array();
  for (const auto& s : v) a.push_back(schedule_json(s));
  return a;
}

const std::vector<std::pair<NoiseSpec::Kind, std::string>> kNoiseKinds{
    {NoiseSpec::Kind::Identity, "identity"},
    {NoiseSpec::Kind::VectorField, "vector-field"},
    {NoiseSpec::Kind::AbelianCurrent, "abelian-current"},
    {NoiseSpec::Kind::CutoffCurrent, "cutoff-current"}};

const std::vector<std::pair<render::MaskSpec::Kind, std::string>> kMaskKinds{
    {render::MaskSpec::Kind::Constant, "constant"},
    {render::MaskSpec::Kind::Gaussian, "gaussian"},
    {render::MaskSpec::Kind::RaisedCosine, "raised-cosine"},
    {render::MaskSpec::Kind::Table, "table"}};

template <class E>
E enum_from(const std::vector<std::pair<E, std::string>>& table, const json& j, const char* what) {
  if (j.is_string())
    for (const auto& [k, name] : table)
      if (name == j.get<std::string>()) return k;
  throw ParseError(std::string("unknown ") + what + " " + j.dump());
}

template <class E>
std::string enum_name(const std::vector<std::pair<E, std::string>>& table, E k) {
  for (const auto& [e, name] : table)
    if (e == k) return name;
  return "?";
}

dynamics::ScreeningSpec screening_from(const json& j) {
  reject_unknown(j, {"kind", "lo", "hi"}, "screening");
  const std::string kind = j.value("kind", "identity");
  if (kind == "identity") return dynamics::ScreeningSpec::identity();
  if (kind == "zero") return dynamics::ScreeningSpec::zero();
  if (kind == "band") {
    if (!j.contains("lo") || !j.contains("hi") || !j["lo"].is_number_integer() || !j["hi"].is_number_integer())
      throw ParseError("band screening needs integer \"lo\" and \"hi\"");
    return dynamics::ScreeningSpec::band(j["lo"].get<int>(), j["hi"].get<int>());
  }
  throw ParseError("unknown screening kind \"" + kind + "\"");
}

json screening_json(const dynamics::ScreeningSpec& s) {
  switch (s.kind) {
    case dynamics::ScreeningSpec::Kind::Zero:
      return {{"kind", "zero"}};
    case dynamics::ScreeningSpec::Kind::Band:
      return {{"kind", "band"}, {"lo", s.lo}, {"hi", s.hi}};
    default:
      return {{"kind", "identity"}};
  }
}

int integer(const json& j, const char* key) {
  if (!j.is_number_integer()) throw ParseError(std::string("\"") + key + "\" must be an integer");
  return j.get<int>();
}

}  // namespace

SessionConfig config_from_json(const json& j) {
  reject_unknown(j,
                 {"h", "degree", "cutoff_N", "order", "modes", "schedules", "mode", "dt", "seed", "noise", "memory",
                  "fibers", "palette", "lattice", "frame_every", "duration", "initial", "observers", "clock"},
                 "session config");
  SessionConfig c;
  try {
    if (j.contains("h")) {
      const auto& h = j["h"];
      if (h.is_string()) c.h = parse_rational(h.get<std::string>());
      else if (h.is_number_integer()) c.h = Rational(h.get<long>());
      else throw ParseError("\"h\" must be an integer or a rational string such as \"3/4\"");
    }
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(std::string("\"h\": ") + e.what());
  }
  if (j.contains("degree")) c.degree = integer(j["degree"], "degree");
  if (j.contains("cutoff_N")) c.cutoff_N = integer(j["cutoff_N"], "cutoff_N");
  if (j.contains("order")) c.order = integer(j["order"], "order");
  if (j.contains("modes")) {
    const auto& m = j["modes"];
    if (!m.is_array() || m.size() != 2) throw ParseError("\"modes\" must be [n_min, n_max]");
    c.mode_min = integer(m[0], "modes");
    c.mode_max = integer(m[1], "modes");
  }
  if (j.contains("schedules")) {
    c.schedules = schedules_from(j["schedules"]);
  } else {
    for (int i = 1; i <= c.order; ++i) c.schedules.push_back({Complex(1.0 / i, 0.0), 0.0, 0.0, {}});
  }
  if (j.contains("mode")) {
    const auto m = j["mode"];
    if (m == "deterministic") c.mode = dynamics::Mode::Deterministic;
    else if (m == "stochastic") c.mode = dynamics::Mode::Stochastic;
    else throw ParseError("\"mode\" must be \"deterministic\" or \"stochastic\"");
  }
  if (j.contains("dt")) c.dt = number(j["dt"], "dt");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<std::int64_t>() >= 0))
      throw ParseError("\"seed\" must be a nonnegative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("noise")) {
    for (const auto& n : j["noise"]) {
      reject_unknown(n, {"kind", "index", "amplitude"}, "noise channel");
      NoiseSpec s;
      s.kind = enum_from(kNoiseKinds, n.value("kind", json("identity")), "noise kind");
      if (n.contains("index")) s.index = integer(n["index"], "index");
      if (n.contains("amplitude")) s.amplitude = number(n["amplitude"], "amplitude");
      c.noise.push_back(s);
    }
  }
  if (j.contains("memory") && !j["memory"].is_null()) {
    reject_unknown(j["memory"], {"lambda", "kappa"}, "memory");
    dynamics::MemoryConfig m;
    if (j["memory"].contains("lambda")) m.lambda = number(j["memory"]["lambda"], "lambda");
    if (j["memory"].contains("kappa")) m.kappa = number(j["memory"]["kappa"], "kappa");
    c.memory = m;
  }
  if (j.contains("fibers")) {
    for (const auto& f : j["fibers"]) {
      reject_unknown(f, {"gamma", "mask"}, "fiber");
      render::FiberSpec s;
      if (f.contains("gamma")) s.gamma = number(f["gamma"], "gamma");
      if (f.contains("mask")) {
        const auto& m = f["mask"];
        reject_unknown(m, {"kind", "width", "table"}, "mask");
        s.mask.kind = enum_from(kMaskKinds, m.value("kind", json("constant")), "mask kind");
        if (m.contains("width")) s.mask.width = number(m["width"], "width");
        if (m.contains("table"))
          for (const auto& x : m["table"]) s.mask.table.push_back(number(x, "table"));
      }
      c.fibers.push_back(s);
    }
  } else {
    c.fibers.push_back({});
  }
  if (j.contains("palette")) {
    for (const auto& p : j["palette"]) {
      if (!p.is_array() || p.size() != 3) throw ParseError("palette entries must be [r, g, b]");
      c.palette.push_back({static_cast<float>(number(p[0], "palette")), static_cast<float>(number(p[1], "palette")),
                           static_cast<float>(number(p[2], "palette"))});
    }
  } else {
    c.palette.assign(c.fibers.size(), render::Rgb{1.0f, 1.0f, 1.0f});
  }
  c.lattice = {8.0, 1.0, 128, 128};
  if (j.contains("lattice")) {
    const auto& l = j["lattice"];
    reject_unknown(l, {"width", "height", "delta_I", "delta_O"}, "lattice");
    if (l.contains("width")) c.lattice.width = integer(l["width"], "width");
    if (l.contains("height")) c.lattice.height = integer(l["height"], "height");
    if (l.contains("delta_I")) c.lattice.delta_I = number(l["delta_I"], "delta_I");
    if (l.contains("delta_O")) c.lattice.delta_O = number(l["delta_O"], "delta_O");
  }
  if (j.contains("frame_every")) c.frame_every = integer(j["frame_every"], "frame_every");
  if (j.contains("duration")) c.duration = number(j["duration"], "duration");
  if (j.contains("initial")) c.initial = state_from(j["initial"], "initial");
  else c.initial = {Complex(1.0, 0.0)};
  if (j.contains("observers")) {
    if (!j["observers"].is_array()) throw ParseError("\"observers\" must be an array");
    for (const auto& o : j["observers"]) {
      reject_unknown(o, {"screening", "schedules"}, "observer");
      ObserverSpec s;
      if (o.contains("screening")) s.screening = screening_from(o["screening"]);
      if (o.contains("schedules")) s.schedules = schedules_from(o["schedules"]);
      c.observers.push_back(std::move(s));
    }
  } else {
    c.observers.push_back({});
  }
  if (j.contains("clock")) {
    const auto k = j["clock"];
    if (k == "lockstep") c.clock = Clock::Lockstep;
    else if (k == "realtime") c.clock = Clock::Realtime;
    else throw ParseError("\"clock\" must be \"lockstep\" or \"realtime\"");
  }
  return c;
}

json to_json(const SessionConfig& c) {
  json noise = json::array();
  for (const auto& n : c.noise)
    noise.push_back({{"kind", enum_name(kNoiseKinds, n.kind)}, {"index", n.index}, {"amplitude", n.amplitude}});
  json fibers = json::array();
  for (const auto& f : c.fibers)
    fibers.push_back({{"gamma", f.gamma},
                      {"mask", {{"kind", enum_name(kMaskKinds, f.mask.kind)}, {"width", f.mask.width}, {"table", f.mask.table}}}});
  json palette = json::array();
  for (const auto& p : c.palette) palette.push_back({p.r, p.g, p.b});
  json observers = json::array();
  for (const auto& o : c.observers) {
    json jo{{"screening", screening_json(o.screening)}};
    if (o.schedules) jo["schedules"] = schedules_json(*o.schedules);
    observers.push_back(std::move(jo));
  }
  json j{{"h", droem::to_string(c.h)},
         {"degree", c.degree},
         {"cutoff_N", c.cutoff_N},
         {"order", c.order},
         {"modes", {c.mode_min, c.mode_max}},
         {"schedules", schedules_json(c.schedules)},
         {"mode", c.mode == dynamics::Mode::Deterministic ? "deterministic" : "stochastic"},
         {"dt", c.dt},
         {"seed", c.seed},
         {"noise", noise},
         {"memory", nullptr},
         {"fibers", fibers},
         {"palette", palette},
         {"lattice",
          {{"width", c.lattice.width},
           {"height", c.lattice.height},
           {"delta_I", c.lattice.delta_I},
           {"delta_O", c.lattice.delta_O}}},
         {"frame_every", c.frame_every},
         {"duration", c.duration},
         {"initial", state_json(c.initial)},
         {"observers", observers},
         {"clock", c.clock == Clock::Lockstep ? "lockstep" : "realtime"}};
  if (c.memory) j["memory"] = {{"lambda", c.memory->lambda}, {"kappa", c.memory->kappa}};
  return j;
}

void SessionConfig::validate() const {
  if (sgn(h) <= 0) throw DomainError("session weight h must be positive, got " + droem::to_string(h));
  if (degree < 2 || degree > 64) throw DomainError("truncation degree must lie in [2, 64]");
  if (cutoff_N < 1 || cutoff_N > degree) throw DomainError("cutoff N must lie in [1, D]");
  if (order != 2 && order != 3) throw DomainError("angular order must be 2 or 3, got " + std::to_string(order));
  if (mode_min > mode_max) throw DomainError("mode range is empty");
  auto check_schedules = [&](const std::vector<Schedule>& s, const std::string& who) {
    if (static_cast<int>(s.size()) != order)
      throw ShapeError(who + " needs " + std::to_string(order) + " schedules, got " + std::to_string(s.size()));
    for (const auto& x : s)
      if (!std::isfinite(std::abs(x.c)) || !std::isfinite(x.a) || !std::isfinite(x.omega))
        throw DomainError(who + " has a non-finite schedule");
  };
  check_schedules(schedules, "the session");
  dynamics::EvolutionConfig evo{mode, dt, seed, {}, memory};
  for (const auto& n : noise) evo.noise_amplitudes.push_back(n.amplitude);
  evo.validate();
  if (memory && mode == dynamics::Mode::Stochastic)
    throw DomainError("memory kernels run in deterministic mode only");
  for (const auto& n : noise) {
    if (std::abs(n.index) > degree) throw DomainError("noise generator index exceeds the truncation degree");
    if (n.kind == NoiseSpec::Kind::CutoffCurrent && n.index == 0)
      throw DomainError("cut-off currents are indexed by k != 0");
  }
  if (fibers.empty()) throw DomainError("at least one fiber is required");
  for (const auto& f : fibers) f.validate();
  if (palette.size() != fibers.size())
    throw PaletteSizeError("palette has " + std::to_string(palette.size()) + " colors for " +
                           std::to_string(fibers.size()) + " fibers");
  render::make_lattice(lattice.delta_I, lattice.delta_O, lattice.width, lattice.height);
  if (frame_every < 1) throw DomainError("frame cadence must be at least one step");
  if (!(duration >= 0.0) || !std::isfinite(duration)) throw DomainError("duration must be finite and nonnegative");
  if (static_cast<int>(initial.size()) > degree + 1) throw ShapeError("initial state exceeds the truncation degree");
  for (const auto& z : initial)
    if (!std::isfinite(std::abs(z))) throw DomainError("initial state must be finite");
  if (observers.empty()) throw ObserverCountError("a session needs at least one observer");
  for (std::size_t i = 0; i < observers.size(); ++i)
    if (observers[i].schedules) check_schedules(*observers[i].schedules, "observer " + std::to_string(i));
}

// ---------------------------------------------------------------------------
// Digests

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

void put_le64(std::vector<unsigned char>& out, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>(bits >> (8 * b)));
}

}  // namespace

std::uint64_t state_digest(const dynamics::State& phi) {
  std::vector<unsigned char> bytes;
  bytes.reserve(phi.size() * 16);
  for (const auto& z : phi) {
    put_le64(bytes, z.real());
    put_le64(bytes, z.imag());
  }
  return fnv1a(bytes.data(), bytes.size());
}

std::uint64_t frame_digest(const std::vector<render::Frame>& frames) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& f : frames) {
    const auto bytes = render::float_bytes(f.intensity);
    h = fnv1a(bytes.data(), bytes.size(), h);
  }
  return h;
}

std::string to_hex(std::uint64_t d) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(d));
  return buf;
}

std::uint64_t parse_hex(const std::string& s) {
  if (s.size() != 16 || s.find_first_not_of("0123456789abcdef") != std::string::npos)
    throw ParseError("digest \"" + s + "\" is not 16 lowercase hex digits");
  return std::stoull(s, nullptr, 16);
}

// ---------------------------------------------------------------------------
// Engine

namespace {

// Primary solves are exact and take a while at larger D; sessions with the
// same module share them.
std::vector<qpft::LaurentOpField<Complex>> primaries_for(const SessionConfig& c) {
  static std::mutex mu;
  static std::map<std::string, std::vector<qpft::LaurentOpField<Complex>>> cache;
  const std::string key = droem::to_string(c.h) + "/" + std::to_string(c.degree) + "/" + std::to_string(c.order) +
                          "/" + std::to_string(c.mode_min) + ":" + std::to_string(c.mode_max);
  {
    std::lock_guard lock(mu);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  const auto mod = verma::make_module<Rational>(c.h, c.degree);
  std::vector<qpft::LaurentOpField<Complex>> out;
  for (int s = 1; s <= c.order; ++s)
    out.push_back(qpft::convert<Complex>(
        qpft::solve_primary_field(mod, {Rational(s), c.mode_min, c.mode_max, std::nullopt})));
  std::lock_guard lock(mu);
  cache.emplace(key, out);
  return out;
}

Matrix<Complex> noise_operator(const SessionConfig& c, const NoiseSpec& n) {
  const auto mod = verma::make_module<Rational>(c.h, c.degree);
  switch (n.kind) {
    case NoiseSpec::Kind::Identity:
      return Matrix<Complex>::identity(c.degree + 1);
    case NoiseSpec::Kind::VectorField:
      return droem::convert<Complex>(
          symmetries::extended_generator(mod, n.index, symmetries::Kind::VectorField).op.matrix);
    case NoiseSpec::Kind::AbelianCurrent:
      return droem::convert<Complex>(
          symmetries::extended_generator(mod, n.index, symmetries::Kind::AbelianCurrent).op.matrix);
    case NoiseSpec::Kind::CutoffCurrent:
      return droem::convert<Complex>(
          cutoff::cutoff_current(mod, cutoff::make_cutoff(mod, c.cutoff_N), n.index).matrix);
  }
  throw DomainError("unknown noise kind");
}

}  // namespace

Engine::Engine(SessionConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  primaries_ = primaries_for(cfg_);
  for (const auto& n : cfg_.noise) {
    auto b = std::make_shared<Matrix<Complex>>(noise_operator(cfg_, n));
    noise_.push_back({[b](double) { return *b; }, n.amplitude});
  }
  state_.phi = cfg_.initial;
  state_.phi.resize(cfg_.degree + 1);
  if (cfg_.memory) state_.memory_aux = dynamics::State(cfg_.degree + 1);
  held_.resize(cfg_.observers.size());
  for (std::size_t i = 0; i < held_.size(); ++i) held_[i].observer = static_cast<int>(i);
  has_event_.assign(cfg_.observers.size(), false);
}

void Engine::ingest(const GazeEvent& e) {
  if (e.observer < 0 || e.observer >= observers())
    throw DomainError("event for observer " + std::to_string(e.observer) + " of " + std::to_string(observers()));
  if (std::abs(e.u) > 1.0) throw DomainError("gaze point outside the unit disk");
  if (has_event_[e.observer] && !(e.t > held_[e.observer].t))
    throw ParseError("gaze time " + std::to_string(e.t) + " does not increase past " +
                     std::to_string(held_[e.observer].t));
  held_[e.observer] = e;
  has_event_[e.observer] = true;
}

Matrix<Complex> Engine::operator_at(double t) const {
  const std::size_t n = cfg_.degree + 1;
  Matrix<Complex> a(n, n);
  std::vector<Complex> m(cfg_.order);
  for (std::size_t o = 0; o < held_.size(); ++o) {
    const auto& sched = cfg_.observers[o].schedules ? *cfg_.observers[o].schedules : cfg_.schedules;
    bool any = false;
    for (int i = 0; i < cfg_.order; ++i) {
      m[i] = sched[i](t, held_[o].xi);
      any = any || m[i] != Complex(0.0);
    }
    if (!any) continue;
    a += qpft::angular_field(primaries_, m, held_[o].u, held_[o].du).matrix;
  }
  return a;
}

void Engine::step() {
  const dynamics::OperatorFn a = [this](double t) { return operator_at(t); };
  dynamics::EvolState next;
  if (cfg_.memory) {
    next = dynamics::memory_step(state_, a, *cfg_.memory, cfg_.dt);
  } else if (cfg_.mode == dynamics::Mode::Stochastic) {
    next = dynamics::step_stochastic(state_, a, noise_, cfg_.dt, cfg_.seed);
  } else {
    next = dynamics::step_deterministic(state_, a, cfg_.dt);
  }
  // time is step * dt, never an accumulated sum
  next.t = static_cast<double>(next.step) * cfg_.dt;
  state_ = std::move(next);
}

render::Frame Engine::render_frame(int observer) const {
  const auto psi = dynamics::apply_screening(cfg_.observers.at(observer).screening, state_.phi);
  auto f = render::rasterize_state(psi, cfg_.lattice, time());
  f = render::replicate_fibers(f, static_cast<int>(cfg_.fibers.size()));
  return render::drag_mask(f, held_[observer].u, cfg_.fibers, cfg_.lattice);
}

std::vector<render::Frame> Engine::render_frames() const {
  std::vector<render::Frame> out;
  for (int o = 0; o < observers(); ++o) out.push_back(render_frame(o));
  return out;
}

// ---------------------------------------------------------------------------
// Records

Recorder::Recorder(const Engine& e) {
  rec_.config = e.config();
  rec_.initial_state_digest = state_digest(e.state().phi);
  rec_.initial_frame_digest = frame_digest(e.render_frames());
}

void Recorder::stepped(const Engine& e, const std::vector<render::Frame>* frames) {
  StepRecord s{e.step_index(), e.time(), state_digest(e.state().phi), std::nullopt, std::move(pending_)};
  pending_.clear();
  if (frames) s.frame_digest = frame_digest(*frames);
  rec_.steps.push_back(std::move(s));
}

RunRecord Recorder::finish(const Engine& e, std::string status, std::string error) {
  RunRecord r = rec_;
  r.status = std::move(status);
  r.error = std::move(error);
  r.final_t = e.time();
  r.final_phi = e.state().phi;
  r.final_aux = e.state().memory_aux;
  r.final_state_digest = state_digest(r.final_phi);
  r.pending = pending_;
  return r;
}

namespace {

json events_json(const std::vector<GazeEvent>& v) {
  json a = json::array();
  for (const auto& e : v) a.push_back(to_json(e));
  return a;
}

std::vector<GazeEvent> events_from(const json& j) {
  std::vector<GazeEvent> out;
  if (!j.is_array()) throw ParseError("\"events\" must be an array");
  for (const auto& e : j) out.push_back(parse_gaze(e));
  return out;
}

json header_json(const RunRecord& r) {
  json h = to_json(r.config);
  h["version"] = kRunFormatVersion;
  h["state_digest"] = to_hex(r.initial_state_digest);
  h["frame_digest"] = to_hex(r.initial_frame_digest);
  return h;
}

}  // namespace

void write_run(const RunRecord& r, std::ostream& out) {
  out << json{{"header", header_json(r)}}.dump() << '\n';
  for (const auto& s : r.steps) {
    json line{{"step", s.step},
              {"t", s.t},
              {"state_digest", to_hex(s.state_digest)},
              {"frame_digest", s.frame_digest ? json(to_hex(*s.frame_digest)) : json(nullptr)},
              {"events", events_json(s.events)}};
    out << line.dump() << '\n';
  }
  json fin{{"status", r.status},
           {"error", r.error},
           {"step", r.steps.empty() ? 0 : r.steps.back().step},
           {"t", r.final_t},
           {"phi", state_json(r.final_phi)},
           {"memory_aux", r.final_aux ? state_json(*r.final_aux) : json(nullptr)},
           {"state_digest", to_hex(r.final_state_digest)},
           {"dropped", r.dropped},
           {"pending", events_json(r.pending)}};
  out << json{{"final", fin}}.dump() << '\n';
}

void write_run_file(const RunRecord& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write run file " + path);
  write_run(r, out);
  if (!out) throw ParseError("write failed for run file " + path);
}

RunRecord read_run(std::istream& in) {
  RunRecord r;
  std::string line;
  int n = 0;
  bool have_header = false, have_final = false;
  try {
    while (std::getline(in, line)) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      if (have_final) throw ParseError("content after the final line");
      const json j = json::parse(line);
      if (!have_header) {
        if (!j.contains("header")) throw ParseError("first line must be the header");
        json h = j["header"];
        if (h.value("version", -1) != kRunFormatVersion)
          throw ParseError("unsupported run format version " + h.value("version", json(nullptr)).dump());
        r.initial_state_digest = parse_hex(h.at("state_digest").get<std::string>());
        r.initial_frame_digest = parse_hex(h.at("frame_digest").get<std::string>());
        h.erase("version");
        h.erase("state_digest");
        h.erase("frame_digest");
        r.config = config_from_json(h);
        have_header = true;
      } else if (j.contains("final")) {
        const auto& f = j["final"];
        r.status = f.at("status").get<std::string>();
        r.error = f.at("error").get<std::string>();
        r.final_t = f.at("t").get<double>();
        r.final_phi = state_from(f.at("phi"), "phi");
        if (!f.at("memory_aux").is_null()) r.final_aux = state_from(f["memory_aux"], "memory_aux");
        r.final_state_digest = parse_hex(f.at("state_digest").get<std::string>());
        r.dropped = f.at("dropped").get<std::uint64_t>();
        r.pending = events_from(f.at("pending"));
        have_final = true;
      } else {
        StepRecord s;
        s.step = j.at("step").get<std::uint64_t>();
        s.t = j.at("t").get<double>();
        s.state_digest = parse_hex(j.at("state_digest").get<std::string>());
        if (!j.at("frame_digest").is_null()) s.frame_digest = parse_hex(j["frame_digest"].get<std::string>());
        s.events = events_from(j.at("events"));
        if (s.step != r.steps.size() + 1) throw ParseError("step lines out of sequence");
        r.steps.push_back(std::move(s));
      }
    }
  } catch (const ParseError& e) {
    throw ParseError("run file line " + std::to_string(n) + ": " + e.what());
  } catch (const DomainError& e) {
    throw ParseError("run file line " + std::to_string(n) + ": " + e.what());
  } catch (const json::exception& e) {
    throw ParseError("run file line " + std::to_string(n) + ": " + e.what());
  }
  if (!have_header) throw ParseError("run file has no header");
  if (!have_final) throw ParseError("run file has no final line");
  return r;
}

RunRecord read_run_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open run file " + path);
  return read_run(in);
}

std::uint64_t scripted_steps(const SessionConfig& c, const std::vector<GazeEvent>& events) {
  auto n = static_cast<std::uint64_t>(std::llround(c.duration / c.dt));
  double last = -1.0;
  for (const auto& e : events) last = std::max(last, e.t);
  if (last >= 0.0 || !events.empty()) {
    auto k = static_cast<std::uint64_t>(std::max(0.0, std::ceil(last / c.dt)));
    while (k > 0 && static_cast<double>(k - 1) * c.dt >= last) --k;
    while (static_cast<double>(k) * c.dt < last) ++k;
    n = std::max(n, k + 1);
  }
  return n;
}

namespace {

// Steps once and records; false after a StabilityError.
bool advance(Engine& e, Recorder& rec, std::string& error) {
  try {
    e.step();
  } catch (const StabilityError& err) {
    error = err.what();
    return false;
  }
  if (e.step_index() % static_cast<std::uint64_t>(e.config().frame_every) == 0) {
    const auto frames = e.render_frames();
    rec.stepped(e, &frames);
  } else {
    rec.stepped(e, nullptr);
  }
  return true;
}

}  // namespace

RunRecord run_scripted(const SessionConfig& c, const std::vector<GazeEvent>& events_in) {
  std::vector<GazeEvent> events = events_in;
  std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  validate_events(events);
  Engine e(c);
  for (const auto& ev : events)
    if (ev.observer >= e.observers()) throw DomainError("event for a nonexistent observer");
  Recorder rec(e);
  const std::uint64_t n = scripted_steps(c, events);
  std::size_t next = 0;
  std::string error;
  for (std::uint64_t k = 0; k < n; ++k) {
    while (next < events.size() && e.due(events[next].t)) {
      e.ingest(events[next]);
      rec.applied(events[next++]);
    }
    if (!advance(e, rec, error)) return rec.finish(e, "aborted", error);
  }
  return rec.finish(e);
}

RunRecord replay(const RunRecord& r) {
  Engine e(r.config);
  Recorder rec(e);
  std::string error;
  for (const auto& s : r.steps) {
    for (const auto& ev : s.events) {
      e.ingest(ev);
      rec.applied(ev);
    }
    if (!advance(e, rec, error)) return rec.finish(e, "aborted", error);
  }
  if (r.status == "aborted") {
    // the record ends on the step that failed; retry it
    for (const auto& ev : r.pending) {
      e.ingest(ev);
      rec.applied(ev);
    }
    if (!advance(e, rec, error)) return rec.finish(e, "aborted", error);
  }
  for (const auto& ev : r.pending) rec.applied(ev);
  auto out = rec.finish(e, r.status == "aborted" ? "complete" : r.status, r.error);
  out.dropped = r.dropped;
  return out;
}

std::optional<Mismatch> compare_records(const RunRecord& a, const RunRecord& b) {
  if (a.initial_state_digest != b.initial_state_digest) return Mismatch{0, "initial state digest"};
  if (a.initial_frame_digest != b.initial_frame_digest) return Mismatch{0, "initial frame digest"};
  const std::size_t n = std::min(a.steps.size(), b.steps.size());
  for (std::size_t k = 0; k < n; ++k) {
    const auto& x = a.steps[k];
    const auto& y = b.steps[k];
    if (x.state_digest != y.state_digest) return Mismatch{k + 1, "state digest at step " + std::to_string(x.step)};
    if (x.frame_digest != y.frame_digest) return Mismatch{k + 1, "frame digest at step " + std::to_string(x.step)};
  }
  if (a.steps.size() != b.steps.size())
    return Mismatch{n + 1, "step count " + std::to_string(a.steps.size()) + " vs " + std::to_string(b.steps.size())};
  const std::size_t fin = n + 1;
  if (a.status != b.status) return Mismatch{fin, "status " + a.status + " vs " + b.status};
  if (a.final_state_digest != b.final_state_digest) return Mismatch{fin, "final state digest"};
  if (a.final_phi.size() != b.final_phi.size() || state_digest(a.final_phi) != state_digest(b.final_phi) ||
      !std::equal(a.final_phi.begin(), a.final_phi.end(), b.final_phi.begin()))
    return Mismatch{fin, "final state"};
  if (state_digest(a.final_phi) != a.final_state_digest) return Mismatch{fin, "final state does not match its digest"};
  return std::nullopt;
}

std::optional<Mismatch> verify(const RunRecord& r) { return compare_records(r, replay(r)); }

// ---------------------------------------------------------------------------
// Multiple observers

json CorrelationReport::to_json() const {
  json m = json::array();
  for (const auto& row : correlation) {
    json jr = json::array();
    for (const auto& c : row) jr.push_back(c ? json(*c) : json(nullptr));
    m.push_back(std::move(jr));
  }
  return {{"correlation", m},
          {"joint_component", {{"label", "collective diagnostic"}, {"value", collective ? json(*collective) : json(nullptr)}}}};
}

CorrelationReport correlate(const std::vector<render::Frame>& frames) {
  const std::size_t n = frames.size();
  if (n == 0) throw ObserverCountError("no frames to correlate");
  const std::size_t len = frames.front().intensity.size();
  for (const auto& f : frames)
    if (f.intensity.size() != len) throw ShapeError("frames to correlate differ in size");

  std::vector<double> mean(n, 0.0), var(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (float v : frames[i].intensity) mean[i] += v;
    mean[i] /= static_cast<double>(len);
    for (float v : frames[i].intensity) var[i] += (v - mean[i]) * (v - mean[i]);
  }
  CorrelationReport r;
  r.correlation.assign(n, std::vector<std::optional<double>>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      if (var[i] == 0.0 || var[j] == 0.0) continue;
      double cov = 0.0;
      for (std::size_t k = 0; k < len; ++k)
        cov += (frames[i].intensity[k] - mean[i]) * (frames[j].intensity[k] - mean[j]);
      const double c = i == j ? 1.0 : cov / std::sqrt(var[i] * var[j]);
      r.correlation[i][j] = r.correlation[j][i] = c;
    }

  double grand = 0.0;
  for (double m : mean) grand += m;
  grand /= static_cast<double>(n);
  double total = 0.0, explained = 0.0;
  for (std::size_t k = 0; k < len; ++k) {
    double avg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = frames[i].intensity[k];
      avg += v;
      total += (v - grand) * (v - grand);
    }
    avg /= static_cast<double>(n);
    explained += static_cast<double>(n) * (avg - grand) * (avg - grand);
  }
  if (total > 0.0) r.collective = explained / total;
  return r;
}

MultiObserverResult multi_observer_step(Engine& engine, const std::vector<GazeEvent>& events) {
  if (engine.observers() < 2)
    throw ObserverCountError("correlation needs at least two observers, the session has " +
                             std::to_string(engine.observers()));
  if (static_cast<int>(events.size()) != engine.observers())
    throw ObserverCountError("got " + std::to_string(events.size()) + " events for " +
                             std::to_string(engine.observers()) + " observers");
  for (std::size_t i = 0; i < events.size(); ++i) {
    GazeEvent e = events[i];
    e.observer = static_cast<int>(i);
    engine.ingest(e);
  }
  engine.step();
  MultiObserverResult out;
  out.frames = engine.render_frames();
  out.report = correlate(out.frames);
  return out;
}

// ---------------------------------------------------------------------------
// Relation suite

json algebra_report(const Rational& h, int degree) {
  const auto mod = verma::make_module<Rational>(h, degree);
  json relations = json::array();
  bool all = true;
  auto check = [&](const std::string& family, int i, int j, int upto) {
    const auto li = verma::vector_field_generator(mod, i);
    const auto lj = verma::vector_field_generator(mod, j);
    const auto lhs = verma::commutator(li, lj);
    const auto rhs = Rational(i - j) * verma::vector_field_generator(mod, i + j);
    const bool ok = verma::agree_on(lhs, rhs, upto);
    all = all && ok;
    relations.push_back({{"family", family},
                         {"relation", "[L" + std::to_string(i) + ", L" + std::to_string(j) + "] = (" +
                                          std::to_string(i - j) + ") L" + std::to_string(i + j)},
                         {"checked_degrees", upto},
                         {"verdict", ok ? "exact" : "fails"}});
  };
  for (int i = -1; i <= 1; ++i)
    for (int j = i + 1; j <= 1; ++j) check("sl2", i, j, degree - 2);
  for (int i = 2; i <= 4; ++i)
    for (int j = i + 1; j <= 4; ++j) check("W1", i, j, degree);
  for (int i = -1; i <= 1; ++i)
    for (int j = 2; j <= 4; ++j) check("sl2-W1", i, j, degree - 2);
  return {{"h", droem::to_string(h)}, {"degree", degree}, {"relations", relations}, {"all_exact", all}};
}

}  // namespace droem::session

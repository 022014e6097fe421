#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "droem/dynamics.hpp"
#include "droem/qpft.hpp"
#include "droem/render.hpp"

// Orchestration of the interactive loop dPhi = A(t, u, u', xi) Phi dt.
//
// A session owns one shared state Phi. Each observer holds its latest gaze
// (zero-order hold, default u = 0, du = 0) and contributes its own angular
// field sum_i M_i(t, xi) du^i V_i(u); the fields of all observers add up.
// Every observer sees Psi = J Phi rendered through the lattice and dragged
// to its own sight point.
//
// Timing: step k advances t_k = k dt to t_{k+1}. A gaze event with time t_e
// is applied before the first step k with k dt >= t_e. The run record lists
// events on the line of the step they were applied to, so replays never
// depend on wall-clock arrival.

namespace droem::session {

inline constexpr int kRunFormatVersion = 1;
inline constexpr std::size_t kQueueCapacity = 256;

struct GazeEvent {
  double t = 0.0;
  Complex u;
  Complex du;
  std::vector<double> xi;
  /// Which observer steers with this event; absent on the wire means 0.
  int observer = 0;
};

/// ParseError on a malformed message, DomainError when |u| > 1.
GazeEvent parse_gaze(const nlohmann::json& j);
nlohmann::json to_json(const GazeEvent& e);

/// Rejects |u| > 1 (DomainError) and non-increasing times per observer
/// (ParseError). Returns how many consecutive pairs have du off from
/// du / dt by more than 20%; each is logged as a warning.
int validate_events(const std::vector<GazeEvent>& events);

/// Gaze events as ND-JSON lines or one JSON array. Lines of other message
/// types are skipped. ParseError on malformed input.
std::vector<GazeEvent> read_trajectory(std::istream& in);
std::vector<GazeEvent> read_trajectory_file(const std::string& path);

/// M(t, xi) = c + a sin(omega t) + sum_k gain_k xi_k.
struct Schedule {
  Complex c;
  double a = 0.0;
  double omega = 0.0;
  std::vector<double> xi_gain;

  Complex operator()(double t, const std::vector<double>& xi) const;
};

struct NoiseSpec {
  enum class Kind { Identity, VectorField, AbelianCurrent, CutoffCurrent };
  Kind kind = Kind::Identity;
  int index = 0;
  double amplitude = 0.0;
};

struct ObserverSpec {
  dynamics::ScreeningSpec screening;
  /// Per-observer coefficients; the session schedules when absent.
  std::optional<std::vector<Schedule>> schedules;
};

enum class Clock { Realtime, Lockstep };

struct SessionConfig {
  Rational h{1};
  int degree = 12;
  int cutoff_N = 1;
  /// Angular order n: primaries of spin 1..n.
  int order = 2;
  int mode_min = 0;
  int mode_max = 3;
  std::vector<Schedule> schedules;
  dynamics::Mode mode = dynamics::Mode::Deterministic;
  double dt = 0.01;
  std::uint64_t seed = 0;
  std::vector<NoiseSpec> noise;
  std::optional<dynamics::MemoryConfig> memory;
  std::vector<render::FiberSpec> fibers;
  std::vector<render::Rgb> palette;
  render::Lattice lattice;
  int frame_every = 1;
  double duration = 0.0;
  /// Coefficients in degree order; shorter vectors are zero-padded.
  dynamics::State initial;
  std::vector<ObserverSpec> observers;
  Clock clock = Clock::Lockstep;

  /// Referential validity of every sub-spec. DomainError, ShapeError,
  /// RatioError or PaletteSizeError depending on the field at fault.
  void validate() const;
};

/// Missing keys take the defaults above, plus one identity observer, one
/// plain fiber, a white palette and a 128 x 128 lattice with delta_I = 8,
/// delta_O = 1. ParseError on malformed or unknown keys.
SessionConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SessionConfig& c);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);
/// Over the little-endian f64 (re, im) pairs of phi in degree order.
std::uint64_t state_digest(const dynamics::State& phi);
/// Over the f32le intensity bytes of each observer's frame in turn.
std::uint64_t frame_digest(const std::vector<render::Frame>& frames);
std::string to_hex(std::uint64_t d);
std::uint64_t parse_hex(const std::string& s);

/// The stepper: owns the evolution state of one session.
class Engine {
 public:
  explicit Engine(SessionConfig cfg);

  const SessionConfig& config() const { return cfg_; }
  const dynamics::EvolState& state() const { return state_; }
  std::uint64_t step_index() const { return state_.step; }
  double time() const { return static_cast<double>(state_.step) * cfg_.dt; }
  int observers() const { return static_cast<int>(cfg_.observers.size()); }
  const GazeEvent& gaze(int observer) const { return held_.at(observer); }

  /// Takes effect for the next step. Same validation as validate_events,
  /// against the last event this observer held.
  void ingest(const GazeEvent& e);
  /// True when an event at time t is due before the next step.
  bool due(double t) const { return time() >= t; }

  /// One step of length dt; StabilityError leaves the state untouched.
  void step();

  /// A(t) with the held gazes of all observers summed.
  Matrix<Complex> operator_at(double t) const;

  std::vector<render::Frame> render_frames() const;
  render::Frame render_frame(int observer) const;

 private:
  SessionConfig cfg_;
  std::vector<qpft::LaurentOpField<Complex>> primaries_;
  std::vector<dynamics::NoiseChannel> noise_;
  dynamics::EvolState state_;
  std::vector<GazeEvent> held_;
  std::vector<bool> has_event_;
};

struct StepRecord {
  std::uint64_t step = 0;
  double t = 0.0;
  std::uint64_t state_digest = 0;
  std::optional<std::uint64_t> frame_digest;
  std::vector<GazeEvent> events;
};

struct RunRecord {
  SessionConfig config;
  std::uint64_t initial_state_digest = 0;
  std::uint64_t initial_frame_digest = 0;
  std::vector<StepRecord> steps;
  /// "complete", or "aborted" when the dynamics went non-finite.
  std::string status = "complete";
  std::string error;
  std::uint64_t dropped = 0;
  double final_t = 0.0;
  dynamics::State final_phi;
  std::optional<dynamics::State> final_aux;
  std::uint64_t final_state_digest = 0;
  /// Events received but not yet applied when the run stopped. For an
  /// aborted run these belong to the step that failed.
  std::vector<GazeEvent> pending;
};

/// Header line {"header":{...config, "version":1, "state_digest",
/// "frame_digest"}}, one line per step, then {"final":{...}}.
void write_run(const RunRecord& r, std::ostream& out);
void write_run_file(const RunRecord& r, const std::string& path);
/// ParseError on malformed lines, digests or an unsupported version.
RunRecord read_run(std::istream& in);
RunRecord read_run_file(const std::string& path);

/// Builds a record incrementally while an engine runs, in the order the
/// record lists things.
class Recorder {
 public:
  explicit Recorder(const Engine& e);
  void applied(const GazeEvent& e) { pending_.push_back(e); }
  /// Call after each successful step.
  void stepped(const Engine& e, const std::vector<render::Frame>* frames);
  /// Call when stepping stopped. Events applied since the last step are
  /// kept as the record's pending events.
  RunRecord finish(const Engine& e, std::string status = "complete", std::string error = {});
  const RunRecord& record() const { return rec_; }

 private:
  RunRecord rec_;
  std::vector<GazeEvent> pending_;
};

/// Number of steps a scripted run takes: the duration, extended so the
/// last event is applied to at least one step.
std::uint64_t scripted_steps(const SessionConfig& c, const std::vector<GazeEvent>& events);

/// ParseError or DomainError for invalid events; a StabilityError ends the
/// run with status "aborted" and the last finite state.
RunRecord run_scripted(const SessionConfig& c, const std::vector<GazeEvent>& events);

/// Re-runs a record's config with events applied at their recorded steps.
RunRecord replay(const RunRecord& r);

struct Mismatch {
  /// 0 is the header, k the k-th step line, steps + 1 the final line.
  std::size_t index = 0;
  std::string what;
};

std::optional<Mismatch> compare_records(const RunRecord& expected, const RunRecord& actual);
/// Replays and compares every digest and the final state bit for bit.
std::optional<Mismatch> verify(const RunRecord& r);

struct CorrelationReport {
  /// Pearson correlation of frame intensities; null where a frame has zero
  /// variance.
  std::vector<std::vector<std::optional<double>>> correlation;
  /// Share of total frame variance carried by the all-observer mean frame.
  std::optional<double> collective;

  nlohmann::json to_json() const;
};

CorrelationReport correlate(const std::vector<render::Frame>& frames);

struct MultiObserverResult {
  std::vector<render::Frame> frames;
  CorrelationReport report;
};

/// Applies one event per observer, advances the shared state one step and
/// renders every observer. ObserverCountError unless the engine has at
/// least two observers and one event is given for each.
MultiObserverResult multi_observer_step(Engine& engine, const std::vector<GazeEvent>& events);

/// Verma relation suite for check-algebra: sl2 brackets on degrees <= D-2,
/// W1 brackets for 2 <= i, j <= 4 on the valid range of each bracket.
nlohmann::json algebra_report(const Rational& h, int degree);

}  // namespace droem::session

// droem: command-line front end for the algebra checks, scripted sessions,
// replay verification, frame export and the viewer service.
//
// Exit codes: 0 success, 1 verification failure, 2 usage or input error.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "droem/cutoff.hpp"
#include "droem/serve.hpp"
#include "droem/session.hpp"
#include "droem/symmetries.hpp"

using namespace droem;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kVerifyFailed = 1;
constexpr int kUsage = 2;

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("droem");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* lvl = std::getenv("DROEM_LOG")) {
    const auto level = spdlog::level::from_str(lvl);
    // from_str maps unknown names to off; only "off" itself should do that
    if (level != spdlog::level::off || std::string(lvl) == "off") spdlog::set_level(level);
    else spdlog::warn("DROEM_LOG={} is not a log level; keeping warn", lvl);
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path);
  out << text;
}

Rational parse_h(const std::string& s) {
  try {
    return parse_rational(s);
  } catch (const std::exception& e) {
    throw ParseError("--h " + s + ": " + e.what());
  }
}

int simulate(const std::string& config, const std::string& trajectory, const std::string& out) {
  const auto cfg = session::config_from_json(read_json_file(config));
  const auto events = trajectory.empty() ? std::vector<session::GazeEvent>{} : session::read_trajectory_file(trajectory);
  const auto rec = session::run_scripted(cfg, events);
  session::write_run_file(rec, out);
  std::cout << json{{"steps", rec.steps.size()},
                    {"status", rec.status},
                    {"final_state_digest", session::to_hex(rec.final_state_digest)},
                    {"record", out}}
                   .dump()
            << '\n';
  if (rec.status != "complete") {
    std::cerr << "run aborted: " << rec.error << '\n';
    return kVerifyFailed;
  }
  return kOk;
}

int replay(const std::string& run, bool verify) {
  session::RunRecord rec;
  try {
    rec = session::read_run_file(run);
  } catch (const ParseError& e) {
    // a record that no longer parses has failed verification
    std::cerr << e.what() << '\n';
    return verify ? kVerifyFailed : kUsage;
  }
  const auto again = session::replay(rec);
  if (!verify) {
    std::cout << json{{"steps", again.steps.size()},
                      {"status", again.status},
                      {"final_state_digest", session::to_hex(again.final_state_digest)}}
                     .dump()
              << '\n';
    return kOk;
  }
  if (auto m = session::compare_records(rec, again)) {
    std::cout << json{{"verified", false}, {"index", m->index}, {"mismatch", m->what}}.dump() << '\n';
    return kVerifyFailed;
  }
  std::cout << json{{"verified", true}, {"steps", rec.steps.size()}}.dump() << '\n';
  return kOk;
}

int check_algebra(const std::string& h, int degree, const std::string& report) {
  const auto rep = session::algebra_report(parse_h(h), degree);
  const std::string text = rep.dump(2) + "\n";
  if (report.empty()) std::cout << text;
  else write_text(report, text);
  return rep["all_exact"].get<bool>() ? kOk : kVerifyFailed;
}

int check_cutoff(const std::string& hs, int N, int degree, const std::string& report) {
  const auto mod = verma::make_module<Rational>(parse_h(hs), degree);
  if (N < 1 || N > degree) throw DomainError("--N must lie in [1, trunc]");
  const cutoff::CutoffSpec spec = cutoff::make_cutoff(mod, N);
  const auto probe = cutoff::probe_report(mod, spec, cutoff::nonlinear_sl2_probe(mod, spec));
  if (!report.empty()) write_text(report, probe.dump(2) + "\n");

  json summary{{"h", hs}, {"N", N}, {"D", degree}, {"P", spec.P.to_string()}};
  bool ok = true;
  try {
    const auto dil = cutoff::solve_cutoff_dilatation(mod, spec);
    json checks = json::array();
    for (const auto& c : dil.checks)
      checks.push_back({{"operator", c.op}, {"relation", c.relation}, {"convention", c.convention}, {"verdict", c.verdict()}});
    summary["dilatation"] = {{"solved", true}, {"checks", checks}};
  } catch (const DegenerateDifferenceError& e) {
    summary["dilatation"] = {{"solved", false}, {"reason", e.what()}};
    ok = false;
  }
  if (report.empty()) summary["probe"] = probe;
  else summary["report"] = report;
  std::cout << summary.dump(2) << '\n';
  return ok ? kOk : kVerifyFailed;
}

int check_symmetries(const std::string& grid, const std::string& report) {
  const auto out = symmetries::run_grid(read_json_file(grid));
  const std::string text = out.dump(2) + "\n";
  if (report.empty()) std::cout << text;
  else write_text(report, text);
  return kOk;
}

void write_ppm(const std::string& path, const render::Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path);
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::string bytes(img.rgb.size(), '\0');
  for (std::size_t i = 0; i < img.rgb.size(); ++i)
    bytes[i] = static_cast<char>(std::lround(std::clamp(img.rgb[i], 0.0f, 1.0f) * 255.0f));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Re-simulates the run and writes one PPM per observer per frame step,
// checking each frame against the recorded digest on the way.
int render_frames(const std::string& run, const std::string& dir) {
  const auto rec = session::read_run_file(run);
  std::filesystem::create_directories(dir);
  session::Engine e(rec.config);
  int written = 0;
  auto dump = [&](std::uint64_t step, std::optional<std::uint64_t> expect) {
    const auto frames = e.render_frames();
    if (expect && session::frame_digest(frames) != *expect) {
      std::cerr << "frame digest mismatch at step " << step << '\n';
      return false;
    }
    for (std::size_t o = 0; o < frames.size(); ++o) {
      char name[64];
      if (frames.size() == 1) std::snprintf(name, sizeof name, "frame_%06llu.ppm", static_cast<unsigned long long>(step));
      else std::snprintf(name, sizeof name, "frame_%06llu_o%zu.ppm", static_cast<unsigned long long>(step), o);
      write_ppm((std::filesystem::path(dir) / name).string(), render::compose_fibers(frames[o], rec.config.palette));
      ++written;
    }
    return true;
  };
  if (!dump(0, rec.initial_frame_digest)) return kVerifyFailed;
  for (const auto& s : rec.steps) {
    for (const auto& ev : s.events) e.ingest(ev);
    e.step();
    if (s.frame_digest && !dump(s.step, s.frame_digest)) return kVerifyFailed;
  }
  std::cout << json{{"frames", written}, {"dir", dir}}.dump() << '\n';
  return kOk;
}

serve::Server* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

int serve_cmd(const std::string& config, int port, const std::string& bind, const std::string& records,
              const std::string& clock, int sessions) {
  json j = config.empty() ? json::object() : read_json_file(config);
  if (!clock.empty()) j["clock"] = clock;
  auto cfg = session::config_from_json(j);
  serve::ServeOptions opts;
  opts.port = port;
  opts.bind_address = bind;
  opts.record_dir = records;
  opts.max_sessions = sessions;
  serve::Server server(cfg, opts);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << json{{"listening", bind}, {"port", server.port()}}.dump() << std::endl;
  server.run();
  g_server = nullptr;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"droem: Verma-module algebra checks and gaze-steered image sessions"};
  app.require_subcommand(1);
  // -h would clash with the weight option --h
  app.set_help_flag("--help", "Print this help message and exit");

  std::string config, trajectory, out, run, h, report, grid, frames, bind = "127.0.0.1", records = "runs", clock;
  int trunc = 16, N = 1, port = 8765, sessions = 0;
  bool verify = false;

  auto* sim = app.add_subcommand("simulate", "Run a scripted session and write its run record");
  sim->add_option("--config", config, "Session config (JSON)")->required()->check(CLI::ExistingFile);
  sim->add_option("--trajectory", trajectory, "Gaze events (ND-JSON or JSON array)")->check(CLI::ExistingFile);
  sim->add_option("--out", out, "Run record to write")->required();

  auto* alg = app.add_subcommand("check-algebra", "Check the sl2 and W1 relations exactly");
  alg->add_option("--h", h, "Weight, e.g. 3/4")->required();
  alg->add_option("--trunc", trunc, "Truncation degree D")->check(CLI::Range(2, 200));
  alg->add_option("--report", report, "Write the JSON report here instead of stdout");

  auto* cut = app.add_subcommand("check-cutoff", "Solve the cut-off dilatation and run the nonlinear sl2 probe");
  cut->add_option("--h", h, "Weight, e.g. 1/2")->required();
  cut->add_option("--N", N, "Cut-off order")->required();
  cut->add_option("--trunc", trunc, "Truncation degree D")->check(CLI::Range(2, 200));
  cut->add_option("--report", report, "Write the probe report here");

  auto* sym = app.add_subcommand("check-symmetries", "Run a symmetry defect / scan / group-law grid");
  sym->add_option("--grid", grid, "Grid description (JSON)")->required()->check(CLI::ExistingFile);
  sym->add_option("--report", report, "Write the JSON result here instead of stdout");

  auto* ren = app.add_subcommand("render", "Re-simulate a run and export its frames as PPM images");
  ren->add_option("--run", run, "Run record")->required()->check(CLI::ExistingFile);
  ren->add_option("--frames", frames, "Output directory")->required();

  auto* srv = app.add_subcommand("serve", "Serve sessions to the viewer");
  srv->add_option("--config", config, "Session config (JSON)")->check(CLI::ExistingFile);
  srv->add_option("--port", port, "TCP port, 0 for any free port")->check(CLI::Range(0, 65535));
  srv->add_option("--bind", bind, "Bind address");
  srv->add_option("--records", records, "Directory for run records, empty to disable");
  srv->add_option("--clock", clock, "Override the config clock")->check(CLI::IsMember({"realtime", "lockstep"}));
  srv->add_option("--sessions", sessions, "Exit after this many sessions (0: run until interrupted)");

  auto* rep = app.add_subcommand("replay", "Re-run a run record");
  rep->add_option("--run", run, "Run record")->required()->check(CLI::ExistingFile);
  rep->add_flag("--verify", verify, "Compare every digest and the final state; exit 1 on mismatch");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*sim) return simulate(config, trajectory, out);
    if (*alg) return check_algebra(h, trunc, report);
    if (*cut) return check_cutoff(h, N, trunc, report);
    if (*sym) return check_symmetries(grid, report);
    if (*ren) return render_frames(run, frames);
    if (*srv) return serve_cmd(config, port, bind, records, clock, sessions);
    if (*rep) return replay(run, verify);
  } catch (const std::exception& e) {
    std::cerr << "droem: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

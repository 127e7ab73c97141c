#pragma once

// simulate / observe / check / sweep. CSV content depends only on the configuration.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "deadbeat/app/config.hpp"
#include "deadbeat/app/output.hpp"
#include "deadbeat/estimator.hpp"
#include "deadbeat/harness.hpp"
#include "deadbeat/observer.hpp"

namespace deadbeat::app {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitDivergence = 3,
  kExitObservability = 4,
  kExitIo = 5,
};

struct RunFlags {
  std::optional<std::string> output_dir;
  bool plot = false;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

struct CommandResult {
  int exit_code = kExitOk;
  std::vector<std::string> files;
};

namespace detail {

inline std::string output_path(const ExperimentConfig& cfg, const std::string& command, const std::string& suffix) {
  std::filesystem::path dir(cfg.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + cfg.output_dir + "': " + ec.message());
  const std::string base = cfg.output_name.empty() ? command : cfg.output_name;
  return (dir / (base + suffix)).string();
}

inline std::vector<std::string> indexed(const std::string& prefix, int count) {
  std::vector<std::string> out;
  for (int i = 1; i <= count; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

inline void append(std::vector<double>& row, const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) row.push_back(v(i));
}

inline void finish(std::ofstream& f, const std::string& path) {
  f.flush();
  if (!f) throw IoError("failed writing '" + path + "'");
}

inline Signal measured_output(const ExperimentConfig& cfg, const Trajectory& truth) {
  const Signal e = make_noise(cfg.noise, truth.y.grid(), cfg.model.k);
  return Signal(truth.y.grid(), Mat(truth.y.values() + e.values()));
}

}  // namespace detail

inline void apply_flags(ExperimentConfig& cfg, const RunFlags& flags) {
  if (flags.output_dir) cfg.output_dir = *flags.output_dir;
  if (flags.seed) {
    cfg.noise.seed = *flags.seed;
    if (cfg.sweep && !cfg.sweep->seeds.empty()) cfg.sweep->seeds = {*flags.seed};
  }
}

/// Plant-only run: t, x1..xn, y1..yk. A divergence truncates the table and appends a marker line.
inline CommandResult cmd_simulate(const ExperimentConfig& cfg, const RunFlags& flags, std::ostream& log) {
  CommandResult res;
  const Signal u = make_input(cfg);
  const Trajectory traj = integrate_plant(cfg.model, cfg.x0, cfg.y0, u);

  const std::string path = detail::output_path(cfg, "simulate", ".csv");
  auto f = open_output(path);
  CsvWriter csv(f);
  auto cols = std::vector<std::string>{"t"};
  for (const auto& c : detail::indexed("x", cfg.model.n)) cols.push_back(c);
  for (const auto& c : detail::indexed("y", cfg.model.k)) cols.push_back(c);
  csv.header(cols);
  const SampleGrid& grid = u.grid();
  for (std::size_t j = 0; j < grid.count; ++j) {
    const Vec x = traj.x.node(j);
    const Vec y = traj.y.node(j);
    if (!x.allFinite() || !y.allFinite()) break;
    std::vector<double> row{grid.time(j)};
    detail::append(row, x);
    detail::append(row, y);
    csv.row(row);
  }
  if (traj.diverged_at) {
    csv.comment("diverged_at," + format_real(*traj.diverged_at));
    res.exit_code = kExitDivergence;
    if (!flags.quiet) log << "plant diverged at t = " << format_real(*traj.diverged_at) << "\n";
  }
  detail::finish(f, path);
  res.files.push_back(path);

  if (flags.plot) {
    std::vector<Series> series;
    for (int i = 0; i < cfg.model.n; ++i) {
      Series s{"x" + std::to_string(i + 1), {}, {}};
      for (std::size_t j = 0; j < grid.count; ++j) {
        s.x.push_back(grid.time(j));
        s.y.push_back(traj.x.values()(i, static_cast<Eigen::Index>(j)));
      }
      series.push_back(std::move(s));
    }
    const std::string svg = detail::output_path(cfg, "simulate", ".svg");
    auto g = open_output(svg);
    write_line_chart(g, series, {"plant state", "t", "x", false, false});
    detail::finish(g, svg);
    res.files.push_back(svg);
  }
  if (!flags.quiet && !traj.diverged_at) log << "wrote " << path << "\n";
  return res;
}

/**
 * Plant plus observer on one grid: t, x1..xn, z1..zn[, y1..yk, w1..wk], err_norm, is_reset.
 * err_norm is |z - x| (plus |w - y| for the full-order observer).
 */
inline CommandResult cmd_observe(const ExperimentConfig& cfg, const RunFlags& flags, std::ostream& log) {
  CommandResult res;
  const ExperimentSetup setup = make_setup(cfg);
  const Trajectory truth = simulate_truth(setup);
  const Signal y_meas = detail::measured_output(cfg, truth);
  const SampleGrid& grid = truth.y.grid();
  const bool full = cfg.mode == ObserverMode::full_order;

  const ObserverRun run = full ? run_full_order(cfg.model, y_meas, setup.u, cfg.z0, cfg.w0, cfg.r, setup.options)
                               : run_reduced_order(cfg.model, y_meas, setup.u, cfg.z0, cfg.r, setup.options);
  const auto err = error_norms(run, truth, full);

  const std::string path = detail::output_path(cfg, "observe", ".csv");
  auto f = open_output(path);
  CsvWriter csv(f);
  std::vector<std::string> cols{"t"};
  for (const auto& c : detail::indexed("x", cfg.model.n)) cols.push_back(c);
  for (const auto& c : detail::indexed("z", cfg.model.n)) cols.push_back(c);
  if (full) {
    for (const auto& c : detail::indexed("y", cfg.model.k)) cols.push_back(c);
    for (const auto& c : detail::indexed("w", cfg.model.k)) cols.push_back(c);
  }
  cols.push_back("err_norm");
  cols.push_back("is_reset");
  csv.header(cols);

  std::vector<bool> reset_node(grid.count, false);
  for (auto idx : run.reset_indices) reset_node[idx] = true;
  for (std::size_t j = 0; j < grid.count; ++j) {
    std::vector<double> row{grid.time(j)};
    detail::append(row, truth.x.node(j));
    detail::append(row, run.z.node(j));
    if (full) {
      detail::append(row, truth.y.node(j));
      detail::append(row, run.w->node(j));
    }
    row.push_back(err[j]);
    row.push_back(reset_node[j] ? 1.0 : 0.0);
    csv.row(row);
  }
  detail::finish(f, path);
  res.files.push_back(path);

  if (flags.plot) {
    Series s{"err_norm", {}, {}};
    for (std::size_t j = 0; j < grid.count; ++j) {
      s.x.push_back(grid.time(j));
      s.y.push_back(err[j]);
    }
    const std::string svg = detail::output_path(cfg, "observe", ".svg");
    auto g = open_output(svg);
    write_line_chart(g, {s}, {"observer error", "t", "|z - x|", false, true});
    detail::finish(g, svg);
    res.files.push_back(svg);
  }

  if (!flags.quiet) {
    log << "wrote " << path << "\n";
    log << "max error for t >= r: " << format_real(max_error_from(run, truth, cfg.r, full)) << "\n";
    if (!run.observability_failures.empty())
      log << run.observability_failures.size() << " reset(s) held: Gramian not positive definite\n";
  }
  return res;
}

/**
 * Observability report for the window [window_start, window_start + r] of the
 * (possibly noisy) measured output. Exit code 4 when the window does not
 * distinguish the state.
 */
inline CommandResult cmd_check(const ExperimentConfig& cfg, const RunFlags& flags, std::ostream& log) {
  CommandResult res;
  const ExperimentSetup setup = make_setup(cfg);
  const Trajectory truth = simulate_truth(setup);
  const Signal y_meas = detail::measured_output(cfg, truth);
  const WindowData window = make_window(y_meas, setup.u, cfg.check_window_start, cfg.r);
  const EstimatorBundle bundle = propagate_window(cfg.model, window, false);
  const GramianReport report = gramian_report(bundle, cfg.tol);

  std::optional<DetCertificate> cert;
  std::string notice;
  try {
    cert = det_condition_search(cfg.model, window);
  } catch (const DomainError& e) {
    notice = std::string("determinant search skipped: ") + e.what();
  }

  const std::string path = detail::output_path(cfg, "check", ".csv");
  auto f = open_output(path);
  CsvWriter csv(f);
  csv.header({"window_start", "r", "det_Q", "min_eig", "distinguishable", "tolerance", "det_condition", "det_times"});
  std::string times;
  if (cert)
    for (std::size_t i = 0; i < cert->times.size(); ++i) times += (i ? ";" : "") + format_real(cert->times[i]);
  csv.line({format_real(cfg.check_window_start), format_real(cfg.r), format_real(report.det_Q), format_real(report.min_eig),
            report.distinguishable ? "1" : "0", format_real(report.tolerance_used), cert ? format_real(cert->det) : "",
            times});
  detail::finish(f, path);
  res.files.push_back(path);

  if (!flags.quiet) {
    log << "window [" << format_real(cfg.check_window_start) << ", " << format_real(cfg.check_window_start + cfg.r)
        << "]\n";
    log << "det_Q           = " << format_real(report.det_Q) << "\n";
    log << "min_eig         = " << format_real(report.min_eig) << "\n";
    log << "distinguishable = " << (report.distinguishable ? "true" : "false") << "\n";
    if (cert)
      log << "det_condition   = " << format_real(cert->det) << " at t = {" << times << "}\n";
    else
      log << notice << "\n";
  }
  if (!report.distinguishable) res.exit_code = kExitObservability;
  return res;
}

/// Robustness experiments. Rows flag their own failures; only configuration problems change the exit code.
inline CommandResult cmd_sweep(const ExperimentConfig& cfg, const RunFlags& flags, std::ostream& log) {
  if (!cfg.sweep) throw ConfigError("sweep", 0, "the sweep command needs a 'sweep' section");
  CommandResult res;
  const SweepSpec& sw = *cfg.sweep;
  const ExperimentSetup setup = make_setup(cfg);

  auto write_records = [&](const std::vector<ExperimentRecord>& records) {
    const std::string path = detail::output_path(cfg, "sweep", ".csv");
    auto f = open_output(path);
    CsvWriter csv(f);
    csv.header({"delta", "sup_err", "final_window_err", "last_reset_err", "diverged", "observability_failed"});
    for (const auto& r : records)
      csv.row({r.delta, r.sup_err, r.final_window_err, r.last_reset_err, r.diverged ? 1.0 : 0.0,
               r.observability_failed ? 1.0 : 0.0});
    detail::finish(f, path);
    res.files.push_back(path);
    if (!flags.quiet) log << "wrote " << path << "\n";
  };

  switch (sw.kind) {
    case SweepKind::bibo: {
      const ExperimentResult result = bibo_sweep(setup, sw.amplitudes, cfg.noise, sw.seeds);
      write_records(result.records);
      if (flags.plot) {
        Series s{"sup_{t>=r} |z - x|", {}, {}};
        for (const auto& r : result.records) {
          s.x.push_back(r.delta);
          s.y.push_back(r.sup_err);
        }
        const std::string svg = detail::output_path(cfg, "sweep", ".svg");
        auto g = open_output(svg);
        write_line_chart(g, {s}, {"bounded noise sweep", "delta", "sup error", true, true});
        detail::finish(g, svg);
        res.files.push_back(svg);
      }
      if (!flags.quiet)
        for (const auto& r : result.records)
          log << "delta = " << format_real(r.delta) << "  sup_err = " << format_real(r.sup_err)
              << (r.diverged ? "  [diverged]" : "") << (r.observability_failed ? "  [observability]" : "") << "\n";
      break;
    }
    case SweepKind::cico: {
      const CicoResult main = cico_run(setup, cfg.noise, sw.tail_factor);
      std::vector<ExperimentRecord> records = main.result.records;
      std::optional<CicoResult> control;
      if (sw.negative_control) {
        NoiseSpec flat = cfg.noise;
        flat.decay = 0.0;
        control = cico_run(setup, flat, sw.tail_factor);
        records.push_back(control->result.records.front());
      }
      write_records(records);

      const std::string trace_path = detail::output_path(cfg, "sweep", "_resets.csv");
      auto f = open_output(trace_path);
      CsvWriter csv(f);
      csv.header({"tau", "reset_err"});
      for (const auto& e : main.result.records.front().reset_trace) csv.row({e.time, e.error});
      detail::finish(f, trace_path);
      res.files.push_back(trace_path);

      if (flags.plot) {
        Series s{"decaying noise", {}, {}};
        for (const auto& e : main.result.records.front().reset_trace) {
          s.x.push_back(e.time);
          s.y.push_back(e.error);
        }
        std::vector<Series> all{s};
        if (control) {
          Series c{"lambda = 0 control", {}, {}};
          for (const auto& e : control->result.records.front().reset_trace) {
            c.x.push_back(e.time);
            c.y.push_back(e.error);
          }
          all.push_back(std::move(c));
        }
        const std::string svg = detail::output_path(cfg, "sweep", ".svg");
        auto g = open_output(svg);
        write_line_chart(g, all, {"reset error under converging noise", "tau", "|z - x| at reset", false, true});
        detail::finish(g, svg);
        res.files.push_back(svg);
      }
      if (!flags.quiet) {
        log << "last reset error " << format_real(main.result.records.front().last_reset_err) << " vs threshold "
            << format_real(main.threshold()) << (main.tail_ok ? "  [tail ok]" : "  [tail FAILED]") << "\n";
        if (control)
          log << "control (lambda = 0) last reset error "
              << format_real(control->result.records.front().last_reset_err)
              << (control->result.records.front().last_reset_err > main.threshold() ? "  [does not converge]"
                                                                                    : "  [unexpectedly converged]")
              << "\n";
      }
      break;
    }
    case SweepKind::margin: {
      std::vector<NoiseSpec> family;
      if (sw.seeds.empty()) {
        family.push_back(cfg.noise);
      } else {
        for (auto seed : sw.seeds) {
          NoiseSpec s = cfg.noise;
          s.seed = seed;
          family.push_back(s);
        }
      }
      const MarginResult margin =
          small_error_margin(setup, sw.epsilon, family, {sw.ceiling, sw.floor_ratio, sw.bisection_steps});
      const std::string path = detail::output_path(cfg, "sweep", ".csv");
      auto f = open_output(path);
      CsvWriter csv(f);
      csv.header({"epsilon", "delta", "evaluations"});
      csv.row({sw.epsilon, margin.delta, static_cast<double>(margin.evaluations)});
      detail::finish(f, path);
      res.files.push_back(path);
      if (!flags.quiet) {
        log << "epsilon = " << format_real(sw.epsilon) << "  empirical margin delta = " << format_real(margin.delta)
            << "\n";
        if (!margin.diagnostic.empty()) log << margin.diagnostic << "\n";
      }
      break;
    }
  }
  return res;
}

/**
 * Reads, validates and runs one command, translating errors into exit codes:
 * 2 config, 3 divergence, 4 observability failure, 5 I/O.
 */
inline int run_command(const std::string& command, const std::string& config_path, const RunFlags& flags, std::ostream& log,
                       std::ostream& err) {
  std::string text;
  {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) {
      err << "error: cannot read config file '" << config_path << "'\n";
      return kExitIo;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }

  try {
    ExperimentConfig cfg = parse_config(text);
    apply_flags(cfg, flags);
    CommandResult res;
    if (command == "simulate")
      res = cmd_simulate(cfg, flags, log);
    else if (command == "observe")
      res = cmd_observe(cfg, flags, log);
    else if (command == "check")
      res = cmd_check(cfg, flags, log);
    else if (command == "sweep")
      res = cmd_sweep(cfg, flags, log);
    else {
      err << "error: unknown command '" << command << "'\n";
      return kExitConfig;
    }
    return res.exit_code;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const GridError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "DivergenceError: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const ObservabilityError& e) {
    err << "ObservabilityError: " << e.what() << "\n";
    return kExitObservability;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace deadbeat::app

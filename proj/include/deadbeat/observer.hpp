#pragma once

/**
 * @file observer.hpp
 * @brief Hybrid dead-beat observers with grid-aligned resets every r seconds.
 *
 * Between resets the estimate flows with the model driven by the measured
 * output; at each reset instant tau_{i+1} = tau_i + r it jumps to
 * P(window of the last r seconds). Reset instants are grid indices, so
 * tau_i = i * r holds with no accumulated drift.
 */

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "deadbeat/errors.hpp"
#include "deadbeat/estimator.hpp"
#include "deadbeat/model.hpp"
#include "deadbeat/numerics.hpp"

namespace deadbeat {

enum class ObserverMode { reduced_order, full_order };

/// What to do at a reset whose window Gramian is not positive definite.
enum class FailurePolicy { abort, hold };

struct ObserverOptions {
  double tol = kDefaultGramianTol;
  FailurePolicy on_failure = FailurePolicy::abort;
};

struct ObserverRun {
  ObserverMode mode = ObserverMode::reduced_order;
  double r = 0.0;
  Signal z;
  std::optional<Signal> w;
  std::vector<double> reset_times;
  std::vector<std::size_t> reset_indices;
  /// |z(tau_i) - x(tau_i)| per reset, filled by attach_truth().
  std::vector<double> reset_errors;
  /// Start times of windows on which P was undefined.
  std::vector<double> observability_failures;

  bool is_reset_node(std::size_t j) const {
    for (auto idx : reset_indices)
      if (idx == j) return true;
    return false;
  }
};

namespace detail {

inline std::size_t window_steps(const SampleGrid& grid, double r) {
  const std::size_t steps = grid.steps_in(r);
  if (steps < 2 || steps % 2 != 0) throw GridError("observer horizon r must be a positive whole number of macro steps");
  if (steps > grid.count - 1) throw GridError("observer horizon r exceeds the measurement span");
  return steps;
}

inline void check_inputs(const SystemModel& model, const Signal& y_meas, const Signal& u, const Vec& z0) {
  if (y_meas.dim() != model.k) throw ModelError("measured output has the wrong dimension");
  if (u.dim() != model.m) throw ModelError("input signal has the wrong dimension");
  if (z0.size() != model.n) throw ModelError("initial estimate has the wrong dimension");
  if (!(y_meas.grid() == u.grid())) throw GridError("measured output and input must share a grid");
  if ((y_meas.grid().count - 1) % 2 != 0) throw GridError("grid length must be a whole number of macro steps");
}

/**
 * Shared reset loop. `flow` advances the observer state by one macro step
 * from node j; `reset` rewrites the state at a reset node given P (or
 * nothing when P was undefined and the policy is hold).
 */
template <class Flow, class Store, class Reset>
void run_hybrid(const SystemModel& model, const Signal& y_meas, const Signal& u, double r, const ObserverOptions& opts,
                Vec state, ObserverRun& run, Flow&& flow, Store&& store, Reset&& reset) {
  const SampleGrid& grid = y_meas.grid();
  const std::size_t steps = window_steps(grid, r);
  store(0, state);
  for (std::size_t j = 0; j + 2 <= grid.count - 1; j += 2) {
    MacroStep step = flow(j, state);
    if (!state_ok(step.mid)) throw DivergenceError(grid.time(j + 1), "observer state diverged");
    if (!state_ok(step.end)) throw DivergenceError(grid.time(j + 2), "observer state diverged");
    store(j + 1, step.mid);
    state = std::move(step.end);

    const std::size_t node = j + 2;
    if (node % steps == 0) {
      const double window_start = grid.time(node - steps);
      const WindowData window = make_window(y_meas, u, window_start, r);
      std::optional<Vec> estimate;
      try {
        estimate = operator_P(model, window, opts.tol);
      } catch (const ObservabilityError& e) {
        if (opts.on_failure == FailurePolicy::abort)
          throw ObservabilityError(window_start, e.min_pivot(),
                                   "observability Gramian not positive definite on window starting at t = " +
                                       std::to_string(window_start) + " (reset at t = " +
                                       std::to_string(grid.time(node)) + ")");
        run.observability_failures.push_back(window_start);
      }
      reset(node, state, estimate);
      run.reset_times.push_back(grid.time(node));
      run.reset_indices.push_back(node);
    }
    store(node, state);
  }
}

}  // namespace detail

/**
 * Reduced-order observer: z' = A(y, u) z + b(y, u) with the measured output
 * y_meas (possibly noise-corrupted) fed into A and b, and z <- P(window) at
 * every reset.
 */
inline ObserverRun run_reduced_order(const SystemModel& model, const Signal& y_meas, const Signal& u, const Vec& z0,
                                     double r, const ObserverOptions& opts = {}) {
  detail::check_inputs(model, y_meas, u, z0);
  const SampleGrid& grid = y_meas.grid();
  ObserverRun run;
  run.mode = ObserverMode::reduced_order;
  run.r = r;
  run.z = Signal(grid, model.n);

  auto field = [&](double t, const Vec& z) {
    const std::size_t j = grid.index_of(t);
    const Vec y = y_meas.node(j);
    const Vec uu = u.node(j);
    return (model.eval_A(y, uu) * z + model.eval_b(y, uu)).eval();
  };
  auto flow = [&](std::size_t j, const Vec& z) { return rk4_macro_step(field, z, grid.time(j), grid.macro_step()); };
  auto store = [&](std::size_t j, const Vec& z) { run.z.set_node(j, z); };
  auto reset = [&](std::size_t, Vec& z, const std::optional<Vec>& estimate) {
    if (estimate) z = *estimate;
  };

  detail::run_hybrid(model, y_meas, u, r, opts, z0, run, flow, store, reset);
  return run;
}

/**
 * Full-order observer on (z, w):
 *   z' = A(w, u) z + b(w, u),  w' = f(w, u) + C'(w) z,
 * with z <- P(window) and w <- y_meas(tau) at every reset.
 */
inline ObserverRun run_full_order(const SystemModel& model, const Signal& y_meas, const Signal& u, const Vec& z0,
                                  const Vec& w0, double r, const ObserverOptions& opts = {}) {
  detail::check_inputs(model, y_meas, u, z0);
  if (w0.size() != model.k) throw ModelError("initial output estimate has the wrong dimension");
  const SampleGrid& grid = y_meas.grid();
  const int n = model.n;
  const int k = model.k;
  ObserverRun run;
  run.mode = ObserverMode::full_order;
  run.r = r;
  run.z = Signal(grid, n);
  run.w = Signal(grid, k);

  auto field = [&](double t, const Vec& s) {
    const Vec uu = u.at(t);
    const Vec z = s.head(n);
    const Vec w = s.tail(k);
    Vec ds(n + k);
    ds.head(n) = model.eval_A(w, uu) * z + model.eval_b(w, uu);
    ds.tail(k) = model.eval_f(w, uu) + model.eval_Ct(w) * z;
    return ds;
  };
  auto flow = [&](std::size_t j, const Vec& s) { return rk4_macro_step(field, s, grid.time(j), grid.macro_step()); };
  auto store = [&](std::size_t j, const Vec& s) {
    run.z.set_node(j, s.head(n));
    run.w->set_node(j, s.tail(k));
  };
  auto reset = [&](std::size_t node, Vec& s, const std::optional<Vec>& estimate) {
    if (estimate) s.head(n) = *estimate;
    s.tail(k) = y_meas.node(node);
  };

  Vec s0(n + k);
  s0 << z0, w0;
  detail::run_hybrid(model, y_meas, u, r, opts, s0, run, flow, store, reset);
  return run;
}

struct ResetError {
  double time;
  double error;
};

/// Post-reset estimation error |z(tau_i) - x(tau_i)| at each reset instant.
inline std::vector<ResetError> reset_error_trace(const ObserverRun& run, const Trajectory& truth) {
  if (!(run.z.grid() == truth.x.grid())) throw GridError("observer run and truth must share a grid");
  std::vector<ResetError> trace;
  trace.reserve(run.reset_indices.size());
  for (std::size_t i = 0; i < run.reset_indices.size(); ++i) {
    const std::size_t j = run.reset_indices[i];
    trace.push_back({run.reset_times[i], (run.z.node(j) - truth.x.node(j)).norm()});
  }
  return trace;
}

/// Fills run.reset_errors from the truth trajectory.
inline void attach_truth(ObserverRun& run, const Trajectory& truth) {
  run.reset_errors.clear();
  for (const auto& e : reset_error_trace(run, truth)) run.reset_errors.push_back(e.error);
}

/// Estimation error norm |z - x| at every node (plus |w - y| for full-order runs when requested).
inline std::vector<double> error_norms(const ObserverRun& run, const Trajectory& truth, bool include_output = false) {
  if (!(run.z.grid() == truth.x.grid())) throw GridError("observer run and truth must share a grid");
  std::vector<double> err(run.z.size());
  for (std::size_t j = 0; j < err.size(); ++j) {
    double e = (run.z.node(j) - truth.x.node(j)).norm();
    if (include_output && run.w) e += (run.w->node(j) - truth.y.node(j)).norm();
    err[j] = e;
  }
  return err;
}

/// Maximum of |z - x| (plus |w - y| if requested) over nodes with t >= t_from.
inline double max_error_from(const ObserverRun& run, const Trajectory& truth, double t_from,
                             bool include_output = false) {
  const auto err = error_norms(run, truth, include_output);
  const SampleGrid& grid = run.z.grid();
  double worst = 0.0;
  for (std::size_t j = 0; j < err.size(); ++j)
    if (grid.time(j) >= t_from - kGridSnapTolerance * grid.h_s) worst = std::max(worst, err[j]);
  return worst;
}

}  // namespace deadbeat

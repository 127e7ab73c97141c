#pragma once

// Sample grids, sampled signals and fixed-step RK4.
// Integrators advance by the macro step h = 2 h_s, so RK4 stage times land on storage nodes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "deadbeat/errors.hpp"
#include "deadbeat/model.hpp"

namespace deadbeat {

/// Magnitude above which a state component counts as diverged.
inline constexpr double kDivergenceThreshold = 1e12;

/// Relative slack (in units of h_s) when snapping a time onto the grid.
inline constexpr double kGridSnapTolerance = 1e-6;

struct SampleGrid {
  double t0 = 0.0;
  double h_s = 0.0;
  std::size_t count = 0;

  SampleGrid() = default;
  SampleGrid(double start, double step, std::size_t nodes) : t0(start), h_s(step), count(nodes) {
    if (!(h_s > 0.0) || !std::isfinite(h_s)) throw GridError("storage step must be positive and finite");
    if (count < 2) throw GridError("a grid needs at least two nodes");
  }

  /// Grid covering [t0, t0 + duration]; the duration must be a whole number of storage steps.
  static SampleGrid covering(double start, double step, double duration) {
    if (!(step > 0.0)) throw GridError("storage step must be positive");
    const double steps = duration / step;
    const double rounded = std::round(steps);
    if (rounded < 1.0 || std::abs(steps - rounded) > kGridSnapTolerance)
      throw GridError("duration is not a whole number of storage steps");
    return SampleGrid(start, step, static_cast<std::size_t>(rounded) + 1);
  }

  double macro_step() const { return 2.0 * h_s; }
  double time(std::size_t j) const { return t0 + static_cast<double>(j) * h_s; }
  double end() const { return time(count - 1); }
  double span() const { return static_cast<double>(count - 1) * h_s; }

  /// Index of the node at time t. Throws GridError when t is not a node.
  std::size_t index_of(double t) const {
    const double s = (t - t0) / h_s;
    const double j = std::round(s);
    if (std::abs(s - j) > kGridSnapTolerance || j < 0.0 || j > static_cast<double>(count - 1))
      throw GridError("time " + std::to_string(t) + " is not a node of the grid");
    return static_cast<std::size_t>(j);
  }

  /// Number of storage steps in a duration. Throws GridError when not whole.
  std::size_t steps_in(double duration) const {
    const double s = duration / h_s;
    const double j = std::round(s);
    if (std::abs(s - j) > kGridSnapTolerance || j < 0.0)
      throw GridError("duration " + std::to_string(duration) + " is not a whole number of storage steps");
    return static_cast<std::size_t>(j);
  }

  bool operator==(const SampleGrid& o) const { return t0 == o.t0 && h_s == o.h_s && count == o.count; }
};

/// A vector-valued time series: one column of `values` per grid node.
class Signal {
 public:
  Signal() = default;
  Signal(SampleGrid grid, int dim) : grid_(grid), values_(Mat::Zero(dim, static_cast<Eigen::Index>(grid.count))) {}
  Signal(SampleGrid grid, Mat values) : grid_(grid), values_(std::move(values)) {
    if (values_.cols() != static_cast<Eigen::Index>(grid_.count))
      throw GridError("signal values do not match the grid length");
  }

  const SampleGrid& grid() const { return grid_; }
  int dim() const { return static_cast<int>(values_.rows()); }
  std::size_t size() const { return grid_.count; }

  const Mat& values() const { return values_; }
  Mat& values() { return values_; }

  Vec node(std::size_t j) const { return values_.col(static_cast<Eigen::Index>(j)); }
  void set_node(std::size_t j, const Vec& v) { values_.col(static_cast<Eigen::Index>(j)) = v; }

  /// Value at a grid node addressed by time.
  Vec at(double t) const { return node(grid_.index_of(t)); }

  /**
   * Value at an arbitrary time inside the grid span. Nodes are returned
   * exactly; between nodes a four-point Lagrange interpolant is used
   * (fourth-order accurate for smooth signals).
   */
  Vec interpolate(double t) const {
    const double s = (t - grid_.t0) / grid_.h_s;
    const double last = static_cast<double>(grid_.count - 1);
    if (s < -kGridSnapTolerance || s > last + kGridSnapTolerance)
      throw GridError("time " + std::to_string(t) + " is outside the signal span");
    const double r = std::round(s);
    if (std::abs(s - r) <= kGridSnapTolerance) return node(static_cast<std::size_t>(r));
    if (grid_.count < 4) {
      const auto j = static_cast<std::size_t>(std::floor(s));
      const double w = s - std::floor(s);
      return (1.0 - w) * node(j) + w * node(j + 1);
    }
    auto base = static_cast<std::ptrdiff_t>(std::floor(s)) - 1;
    base = std::clamp<std::ptrdiff_t>(base, 0, static_cast<std::ptrdiff_t>(grid_.count) - 4);
    Vec out = Vec::Zero(dim());
    for (int a = 0; a < 4; ++a) {
      double w = 1.0;
      for (int b = 0; b < 4; ++b)
        if (b != a) w *= (s - static_cast<double>(base + b)) / static_cast<double>(a - b);
      out += w * node(static_cast<std::size_t>(base + a));
    }
    return out;
  }

  bool all_finite() const { return values_.allFinite(); }

 private:
  SampleGrid grid_;
  Mat values_;
};

/// Sampled plant solution. Nodes after `diverged_at` are not meaningful.
struct Trajectory {
  Signal x;
  Signal y;
  std::optional<double> diverged_at;
};

/// Output and input restricted to a window and shifted to start at zero.
struct WindowData {
  Signal y;
  Signal u;

  double length() const { return y.grid().span(); }
  /// Number of RK4 macro steps across the window.
  std::size_t macro_steps() const { return (y.size() - 1) / 2; }
};

namespace detail {

inline bool state_ok(const Vec& x) {
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (!std::isfinite(x(i)) || std::abs(x(i)) > kDivergenceThreshold) return false;
  return true;
}

}  // namespace detail

/**
 * One classic Runge-Kutta step of size h for x' = field(t, x).
 * Throws DivergenceError carrying t if any stage is non-finite.
 */
template <class Field>
Vec rk4_step(Field&& field, const Vec& state, double t, double h) {
  if (!state.allFinite()) throw DivergenceError(t, "non-finite state entering RK4 step");
  const Vec k1 = field(t, state);
  const Vec k2 = field(t + 0.5 * h, (state + 0.5 * h * k1).eval());
  const Vec k3 = field(t + 0.5 * h, (state + 0.5 * h * k2).eval());
  const Vec k4 = field(t + h, (state + h * k3).eval());
  Vec next = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!k1.allFinite() || !k2.allFinite() || !k3.allFinite() || !k4.allFinite() || !next.allFinite())
    throw DivergenceError(t, "non-finite value inside RK4 step");
  return next;
}

/// Result of one macro step: the end state and the state at the step midpoint.
struct MacroStep {
  Vec end;
  Vec mid;
};

/**
 * Advances by one macro step h and reconstructs the midpoint with the cubic
 * Hermite interpolant through the two end states and their derivatives. The
 * interpolation error is O(h^4) and does not accumulate.
 */
template <class Field>
MacroStep rk4_macro_step(Field&& field, const Vec& state, double t, double h) {
  const Vec f0 = field(t, state);
  Vec end = rk4_step(field, state, t, h);
  const Vec f1 = field(t + h, end);
  Vec mid = 0.5 * (state + end) + (h / 8.0) * (f0 - f1);
  return {std::move(end), std::move(mid)};
}

/**
 * Integrates the plant from (x0, y0) across the whole grid of `u`, stopping
 * at the first macro node whose state is non-finite or exceeds the
 * divergence threshold. The returned trajectory then has `diverged_at` set
 * and all later nodes hold NaN.
 */
inline Trajectory integrate_plant(const SystemModel& model, const Vec& x0, const Vec& y0, const Signal& u) {
  if (x0.size() != model.n || y0.size() != model.k) throw ModelError("initial condition has the wrong dimension");
  if (u.dim() != model.m) throw ModelError("input signal has the wrong dimension");
  const SampleGrid& grid = u.grid();
  if ((grid.count - 1) % 2 != 0) throw GridError("grid length must be a whole number of macro steps");

  const int n = model.n;
  const int k = model.k;
  Trajectory traj{Signal(grid, n), Signal(grid, k), std::nullopt};

  auto field = [&](double t, const Vec& s) {
    const Vec x = s.head(n);
    const Vec y = s.tail(k);
    const Vec uu = u.at(t);
    Vec ds(n + k);
    ds.head(n) = model.eval_A(y, uu) * x + model.eval_b(y, uu);
    ds.tail(k) = model.eval_f(y, uu) + model.eval_Ct(y) * x;
    return ds;
  };

  Vec s(n + k);
  s << x0, y0;
  if (!detail::state_ok(s)) throw DivergenceError(grid.t0, "initial condition is not finite");
  traj.x.set_node(0, x0);
  traj.y.set_node(0, y0);

  auto mark_diverged = [&](std::size_t from, double t) {
    traj.diverged_at = t;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t j = from; j < grid.count; ++j) {
      traj.x.set_node(j, Vec::Constant(n, nan));
      traj.y.set_node(j, Vec::Constant(k, nan));
    }
  };

  const double h = grid.macro_step();
  for (std::size_t j = 0; j + 2 <= grid.count - 1; j += 2) {
    const double t = grid.time(j);
    MacroStep step;
    try {
      step = rk4_macro_step(field, s, t, h);
    } catch (const DivergenceError&) {
      mark_diverged(j + 1, t);
      return traj;
    }
    if (!detail::state_ok(step.mid)) {
      mark_diverged(j + 1, grid.time(j + 1));
      return traj;
    }
    traj.x.set_node(j + 1, step.mid.head(n));
    traj.y.set_node(j + 1, step.mid.tail(k));
    if (!detail::state_ok(step.end)) {
      mark_diverged(j + 2, grid.time(j + 2));
      return traj;
    }
    s = std::move(step.end);
    traj.x.set_node(j + 2, s.head(n));
    traj.y.set_node(j + 2, s.tail(k));
  }
  return traj;
}

/**
 * Plant simulation over [0, T]. The input must be sampled on a grid that
 * starts at 0 and spans at least T; the trajectory shares that grid
 * truncated to [0, T]. Throws DivergenceError at the first bad time.
 */
inline Trajectory simulate_plant(const SystemModel& model, const Vec& x0, const Vec& y0, const Signal& u, double T) {
  const SampleGrid& g = u.grid();
  const std::size_t steps = g.steps_in(T - g.t0);
  if (steps + 1 > g.count) throw GridError("input signal does not cover [0, T]");
  if (steps % 2 != 0) throw GridError("T must be a whole number of macro steps");
  Signal u_cut(SampleGrid(g.t0, g.h_s, steps + 1), Mat(u.values().leftCols(static_cast<Eigen::Index>(steps + 1))));
  Trajectory traj = integrate_plant(model, x0, y0, u_cut);
  if (traj.diverged_at) throw DivergenceError(*traj.diverged_at, "plant trajectory diverged");
  return traj;
}

/**
 * Restriction of a signal to [t_start, t_start + r], re-based so the result
 * starts at time zero. Both bounds must be storage nodes inside the signal.
 */
inline Signal window_shift(const Signal& signal, double t_start, double r) {
  const SampleGrid& g = signal.grid();
  if (!(r > 0.0)) throw GridError("window length must be positive");
  const std::size_t first = g.index_of(t_start);
  const std::size_t len = g.steps_in(r);
  if (first + len > g.count - 1) throw GridError("window exceeds the signal domain");
  return Signal(SampleGrid(0.0, g.h_s, len + 1),
                Mat(signal.values().middleCols(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(len + 1))));
}

/// Output and input windows over [t_start, t_start + r]. r must span at least one macro step.
inline WindowData make_window(const Signal& y, const Signal& u, double t_start, double r) {
  if (!(y.grid().h_s == u.grid().h_s && y.grid().t0 == u.grid().t0))
    throw GridError("output and input signals must share a grid");
  WindowData w{window_shift(y, t_start, r), window_shift(u, t_start, r)};
  const std::size_t steps = w.y.size() - 1;
  if (steps < 2 || steps % 2 != 0) throw GridError("window must be a positive whole number of macro steps");
  return w;
}

/// Constant input sampled on a grid.
inline Signal constant_signal(const SampleGrid& grid, const Vec& value) {
  Signal s(grid, static_cast<int>(value.size()));
  for (std::size_t j = 0; j < grid.count; ++j) s.set_node(j, value);
  return s;
}

}  // namespace deadbeat

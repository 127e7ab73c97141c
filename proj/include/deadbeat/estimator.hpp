#pragma once

/**
 * @file estimator.hpp
 * @brief Window quantities, observability Gramian and the dead-beat operator P.
 *
 * Given an output window y and input window u over [0, r], the estimator
 * integrates, as one augmented ODE under the same RK4 scheme,
 *
 *   Phi'   = A(y, u) Phi,           Phi(0)   = I
 *   theta' = A(y, u) theta + b,     theta(0) = 0
 *   q'     = Phi^T C,               q(0)     = 0      (C = (C')^T, n x k)
 *   xi'    = f(y, u) + C' theta,    xi(0)    = 0
 *   Q'     = q q^T,                 Q(0)     = 0
 *   g'     = q p,                   g(0)     = 0
 *
 * with p(tau) = y(tau) - y(0) - xi(tau). On noiseless data the initial state
 * satisfies p(tau) = q(tau)^T x0, so x0 = Q^{-1} g(r) whenever Q is positive
 * definite, and the state at the right end of the window is
 * P(y, u) = Phi(r) Q^{-1} g(r) + theta(r).
 */

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "deadbeat/errors.hpp"
#include "deadbeat/model.hpp"
#include "deadbeat/numerics.hpp"

namespace deadbeat {

/// Default positive-definiteness tolerance on the normalized Cholesky pivot.
inline constexpr double kDefaultGramianTol = 1e-10;

struct EstimatorBundle {
  int n = 0;
  int k = 0;
  double window_len = 0.0;

  Mat Phi_end;
  Vec theta_end;
  Mat Q;
  Vec qp_int;

  /// Macro-node times of the samples below (window-relative).
  std::vector<double> times;
  std::vector<Mat> Phi_samples;    // n x n
  std::vector<Vec> theta_samples;  // n
  std::vector<Mat> q_samples;      // n x k
  std::vector<Vec> p_samples;      // k
};

struct GramianReport {
  double det_Q = 0.0;
  /// Smallest Cholesky pivot of Q divided by the largest diagonal entry of Q.
  double min_eig = 0.0;
  bool distinguishable = false;
  double tolerance_used = 0.0;
};

namespace detail {

/// Offsets of the blocks packed into the augmented estimator state.
struct AugmentedLayout {
  int n, k;
  int phi() const { return 0; }
  int theta() const { return n * n; }
  int q() const { return theta() + n; }
  int xi() const { return q() + n * k; }
  int gram() const { return xi() + k; }
  int qp() const { return gram() + n * n; }
  int size() const { return qp() + n; }
};

struct CholeskyResult {
  Mat L;
  /// Diagonal pivots before the square root, in elimination order.
  Vec pivots;
  bool complete = false;
};

/// Unpivoted Cholesky that stops at the first non-positive pivot.
inline CholeskyResult cholesky_with_pivots(const Mat& A) {
  const Eigen::Index n = A.rows();
  CholeskyResult out{Mat::Zero(n, n), Vec::Zero(n), false};
  for (Eigen::Index j = 0; j < n; ++j) {
    const double d = A(j, j) - out.L.row(j).head(j).squaredNorm();
    out.pivots(j) = d;
    if (!(d > 0.0)) {
      for (Eigen::Index r = j + 1; r < n; ++r) out.pivots(r) = 0.0;
      return out;
    }
    const double ljj = std::sqrt(d);
    out.L(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i)
      out.L(i, j) = (A(i, j) - out.L.row(i).head(j).dot(out.L.row(j).head(j))) / ljj;
  }
  out.complete = true;
  return out;
}

inline double normalized_min_pivot(const Mat& Q, const CholeskyResult& chol) {
  const double scale = Q.diagonal().maxCoeff();
  if (!(scale > 0.0)) return 0.0;
  return chol.pivots.minCoeff() / scale;
}

}  // namespace detail

/**
 * Integrates the augmented window system. With `keep_samples` the per-node
 * Phi, theta, q and p are recorded at every macro node (including tau = 0).
 */
inline EstimatorBundle propagate_window(const SystemModel& model, const WindowData& window, bool keep_samples = true) {
  const int n = model.n;
  const int k = model.k;
  if (window.y.dim() != k || window.u.dim() != model.m) throw ModelError("window dimensions do not match the model");
  if (!(window.y.grid() == window.u.grid())) throw GridError("output and input windows must share a grid");
  const SampleGrid& grid = window.y.grid();
  if (grid.count < 3 || (grid.count - 1) % 2 != 0)
    throw GridError("window must span a positive whole number of macro steps");

  const detail::AugmentedLayout L{n, k};
  const Vec y0 = window.y.node(0);

  auto field = [&](double t, const Vec& s) {
    const std::size_t j = grid.index_of(t);
    const Vec y = window.y.node(j);
    const Vec u = window.u.node(j);
    const Mat A = model.eval_A(y, u);
    const Mat Ct = model.eval_Ct(y);

    Eigen::Map<const Mat> Phi(s.data() + L.phi(), n, n);
    Eigen::Map<const Vec> theta(s.data() + L.theta(), n);
    Eigen::Map<const Mat> q(s.data() + L.q(), n, k);
    Eigen::Map<const Vec> xi(s.data() + L.xi(), k);

    Vec ds(L.size());
    Eigen::Map<Mat>(ds.data() + L.phi(), n, n) = A * Phi;
    Eigen::Map<Vec>(ds.data() + L.theta(), n) = A * theta + model.eval_b(y, u);
    Eigen::Map<Mat>(ds.data() + L.q(), n, k) = Phi.transpose() * Ct.transpose();
    Eigen::Map<Vec>(ds.data() + L.xi(), k) = model.eval_f(y, u) + Ct * theta;
    Eigen::Map<Mat>(ds.data() + L.gram(), n, n) = q * q.transpose();
    const Vec p = y - y0 - xi;
    Eigen::Map<Vec>(ds.data() + L.qp(), n) = q * p;
    return ds;
  };

  Vec s = Vec::Zero(L.size());
  Eigen::Map<Mat>(s.data() + L.phi(), n, n) = Mat::Identity(n, n);

  EstimatorBundle bundle;
  bundle.n = n;
  bundle.k = k;
  bundle.window_len = grid.span();

  auto record = [&](std::size_t j) {
    if (!keep_samples) return;
    bundle.times.push_back(grid.time(j));
    bundle.Phi_samples.emplace_back(Eigen::Map<const Mat>(s.data() + L.phi(), n, n));
    bundle.theta_samples.emplace_back(Eigen::Map<const Vec>(s.data() + L.theta(), n));
    bundle.q_samples.emplace_back(Eigen::Map<const Mat>(s.data() + L.q(), n, k));
    bundle.p_samples.emplace_back(window.y.node(j) - y0 - Eigen::Map<const Vec>(s.data() + L.xi(), k));
  };

  record(0);
  const double h = grid.macro_step();
  for (std::size_t j = 0; j + 2 <= grid.count - 1; j += 2) {
    s = rk4_step(field, s, grid.time(j), h);
    if (!detail::state_ok(s)) throw DivergenceError(grid.time(j + 2), "window quantities left the finite range");
    record(j + 2);
  }

  bundle.Phi_end = Eigen::Map<const Mat>(s.data() + L.phi(), n, n);
  bundle.theta_end = Eigen::Map<const Vec>(s.data() + L.theta(), n);
  Mat Q = Eigen::Map<const Mat>(s.data() + L.gram(), n, n);
  // The integrand q q^T is symmetric node by node; symmetrize the last bits of roundoff.
  bundle.Q = 0.5 * (Q + Q.transpose());
  bundle.qp_int = Eigen::Map<const Vec>(s.data() + L.qp(), n);
  return bundle;
}

inline GramianReport gramian_report(const EstimatorBundle& bundle, double tol = kDefaultGramianTol) {
  if (!(tol > 0.0)) throw std::invalid_argument("Gramian tolerance must be positive");
  GramianReport report;
  report.tolerance_used = tol;
  report.det_Q = bundle.Q.determinant();
  const auto chol = detail::cholesky_with_pivots(bundle.Q);
  report.min_eig = detail::normalized_min_pivot(bundle.Q, chol);
  report.distinguishable = report.min_eig > tol;
  return report;
}

/**
 * Least-squares reconstruction of the window's initial state,
 * x0 = Q^{-1} \int q p, through a Cholesky factorization of Q.
 * Throws ObservabilityError when the normalized pivot does not exceed tol.
 */
inline Vec solve_estimate(const EstimatorBundle& bundle, double tol = kDefaultGramianTol) {
  const auto chol = detail::cholesky_with_pivots(bundle.Q);
  const double pivot = detail::normalized_min_pivot(bundle.Q, chol);
  if (!chol.complete || !(pivot > tol))
    throw ObservabilityError(0.0, pivot, "observability Gramian is not positive definite on this window (normalized pivot " +
                                             std::to_string(pivot) + ")");
  const auto lower = chol.L.triangularView<Eigen::Lower>();
  Vec w = lower.solve(bundle.qp_int);
  return lower.transpose().solve(w);
}

/// State at the right end of the window reconstructed from the window alone.
inline Vec operator_P(const SystemModel& model, const WindowData& window, double tol = kDefaultGramianTol) {
  const EstimatorBundle bundle = propagate_window(model, window, false);
  return bundle.Phi_end * solve_estimate(bundle, tol) + bundle.theta_end;
}

/**
 * Sampled least-squares cost \int_0^r |p - q^T xi|^2 by the trapezoid rule
 * over the macro-node samples of the bundle.
 */
inline double window_cost(const EstimatorBundle& bundle, const Vec& xi) {
  if (bundle.times.size() < 2) throw std::invalid_argument("window_cost needs a bundle with samples");
  double total = 0.0;
  double prev = (bundle.p_samples[0] - bundle.q_samples[0].transpose() * xi).squaredNorm();
  for (std::size_t j = 1; j < bundle.times.size(); ++j) {
    const double cur = (bundle.p_samples[j] - bundle.q_samples[j].transpose() * xi).squaredNorm();
    total += 0.5 * (bundle.times[j] - bundle.times[j - 1]) * (prev + cur);
    prev = cur;
  }
  return total;
}

/**
 * Explicit formula of P for scalar systems x' = a(y,u) x, y' = f(y,u) + c(y) x:
 *
 *   P = exp(\int_0^r a) * \int_0^r (y(t) - y(0) - \int_0^t f) beta(t) dt / \int_0^r beta(t)^2 dt,
 *   beta(t) = \int_0^t c(y(s)) exp(\int_0^s a) ds.
 *
 * The inner integrals are carried as auxiliary ODE states under the same RK4
 * scheme as propagate_window. Requires n = k = 1 and b = 0 on the window.
 */
inline double closed_form_P_scalar(const SystemModel& model, const WindowData& window) {
  if (model.n != 1 || model.k != 1) throw DomainError("closed-form operator needs n = 1 and k = 1");
  const SampleGrid& grid = window.y.grid();
  if (grid.count < 3 || (grid.count - 1) % 2 != 0)
    throw GridError("window must span a positive whole number of macro steps");
  for (std::size_t j = 0; j < grid.count; ++j)
    if (model.eval_b(window.y.node(j), window.u.node(j))(0) != 0.0)
      throw DomainError("closed-form operator assumes b = 0");

  const double y0 = window.y.node(0)(0);
  // State: alpha = \int a, beta, F = \int f, num, den.
  auto field = [&](double t, const Vec& s) {
    const std::size_t j = grid.index_of(t);
    const Vec y = window.y.node(j);
    const Vec u = window.u.node(j);
    Vec ds(5);
    ds(0) = model.eval_A(y, u)(0, 0);
    ds(1) = model.eval_Ct(y)(0, 0) * std::exp(s(0));
    ds(2) = model.eval_f(y, u)(0);
    ds(3) = (y(0) - y0 - s(2)) * s(1);
    ds(4) = s(1) * s(1);
    return ds;
  };

  Vec s = Vec::Zero(5);
  const double h = grid.macro_step();
  for (std::size_t j = 0; j + 2 <= grid.count - 1; j += 2) s = rk4_step(field, s, grid.time(j), h);
  return std::exp(s(0)) * s(3) / s(4);
}

namespace detail {

/// Phi at an arbitrary window time: macro steps up to the last node, then one partial step.
inline Mat transition_at(const SystemModel& model, const WindowData& window, double t) {
  const SampleGrid& grid = window.y.grid();
  const int n = model.n;
  if (t < -kGridSnapTolerance * grid.h_s || t > grid.span() + kGridSnapTolerance * grid.h_s)
    throw GridError("time " + std::to_string(t) + " lies outside the window");

  auto field = [&](double tt, const Vec& s) {
    const Vec y = window.y.interpolate(tt);
    const Vec u = window.u.interpolate(tt);
    const Vec d = (model.eval_A(y, u) * Eigen::Map<const Mat>(s.data(), n, n)).reshaped();
    return d;
  };

  Vec s = Mat::Identity(n, n).reshaped();
  const double h = grid.macro_step();
  double cur = 0.0;
  std::size_t j = 0;
  while (j + 2 <= grid.count - 1 && grid.time(j + 2) <= t + kGridSnapTolerance * grid.h_s) {
    s = rk4_step(field, s, grid.time(j), h);
    j += 2;
    cur = grid.time(j);
  }
  const double rest = t - cur;
  if (rest > kGridSnapTolerance * grid.h_s) s = rk4_step(field, s, cur, rest);
  return Eigen::Map<const Mat>(s.data(), n, n);
}

}  // namespace detail

/**
 * Determinant of the n x n matrix whose rows are C'(t_j) Phi(t_j), k = 1.
 * Times need not be grid nodes: off-grid times take a final partial RK4 step
 * with interpolated output and input.
 */
inline double det_condition(const SystemModel& model, const WindowData& window, const std::vector<double>& times) {
  if (model.k != 1) throw DomainError("determinant condition needs a scalar output (k = 1)");
  if (static_cast<int>(times.size()) != model.n) throw DomainError("determinant condition needs exactly n times");
  Mat rows(model.n, model.n);
  for (int i = 0; i < model.n; ++i) {
    const double t = times[static_cast<std::size_t>(i)];
    rows.row(i) = model.eval_Ct(window.y.interpolate(t)) * detail::transition_at(model, window, t);
  }
  return rows.determinant();
}

struct DetCertificate {
  std::vector<double> times;
  double det = 0.0;
};

/**
 * Greedy search for a well-conditioned time tuple: the first row is the
 * macro-node row C'(t) Phi(t) of largest norm, each further row maximizes the
 * norm of its component orthogonal to the rows already chosen.
 */
inline DetCertificate det_condition_search(const SystemModel& model, const WindowData& window) {
  if (model.k != 1) throw DomainError("determinant search needs a scalar output (k = 1)");
  const EstimatorBundle bundle = propagate_window(model, window, true);
  const int n = model.n;
  const std::size_t nodes = bundle.times.size();

  std::vector<Eigen::RowVectorXd> rows;
  rows.reserve(nodes);
  const SampleGrid& grid = window.y.grid();
  for (std::size_t j = 0; j < nodes; ++j)
    rows.emplace_back(model.eval_Ct(window.y.node(grid.index_of(bundle.times[j]))) * bundle.Phi_samples[j]);

  std::vector<std::size_t> chosen;
  std::vector<Eigen::RowVectorXd> basis;
  std::vector<bool> used(nodes, false);
  for (int pick = 0; pick < n; ++pick) {
    std::size_t best = nodes;
    double best_norm = -1.0;
    for (std::size_t j = 0; j < nodes; ++j) {
      if (used[j]) continue;
      Eigen::RowVectorXd r = rows[j];
      for (const auto& e : basis) r -= r.dot(e) * e;
      const double nr = r.norm();
      if (nr > best_norm) {
        best_norm = nr;
        best = j;
      }
    }
    used[best] = true;
    chosen.push_back(best);
    Eigen::RowVectorXd r = rows[best];
    for (const auto& e : basis) r -= r.dot(e) * e;
    basis.push_back(best_norm > 0.0 ? Eigen::RowVectorXd(r / best_norm) : Eigen::RowVectorXd::Zero(n));
  }

  DetCertificate cert;
  Mat stacked(n, n);
  for (int i = 0; i < n; ++i) {
    stacked.row(i) = rows[chosen[static_cast<std::size_t>(i)]];
    cert.times.push_back(bundle.times[chosen[static_cast<std::size_t>(i)]]);
  }
  cert.det = stacked.determinant();
  return cert;
}

}  // namespace deadbeat

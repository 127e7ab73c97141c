#pragma once

/**
 * @file model.hpp
 * @brief Systems that are linear in the unmeasured state.
 *
 * The class covered here is
 *
 *   x' = A(y, u) x + b(y, u)
 *   y' = f(y, u) + C'(y) x
 *
 * with unmeasured state x in R^n, measured output y in R^k and input u in R^m.
 * A model is a bundle of pure evaluators; it carries no state and may be
 * shared read-only between threads.
 */

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "deadbeat/errors.hpp"

namespace deadbeat {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct SystemModel {
  std::string name;
  /// Which standing hypotheses the model is believed to satisfy (free text).
  std::string notes;
  int n = 1;
  int k = 1;
  int m = 0;

  std::function<Mat(const Vec& y, const Vec& u)> eval_A;
  std::function<Vec(const Vec& y, const Vec& u)> eval_b;
  /// Output-injection matrix C'(y), shape k x n.
  std::function<Mat(const Vec& y)> eval_Ct;
  std::function<Vec(const Vec& y, const Vec& u)> eval_f;
};

/// Scalar parameters of a catalog model, keyed by name.
using ModelParams = std::map<std::string, double>;

namespace detail {

inline double take_param(ModelParams& rest, const std::string& key, double fallback) {
  auto it = rest.find(key);
  if (it == rest.end()) return fallback;
  double v = it->second;
  rest.erase(it);
  if (!std::isfinite(v)) throw ModelError("parameter '" + key + "' must be finite");
  return v;
}

inline void reject_leftovers(const ModelParams& rest, const std::string& model) {
  if (!rest.empty())
    throw ModelError("unknown parameter '" + rest.begin()->first + "' for model " + model);
}

}  // namespace detail

/**
 * Built-in models.
 *
 *  - pure-integrator:      n=k=1, m=0.  x' = 0, y' = x.
 *  - harmonic-oscillator:  n=2, k=1, m=0.  x1' = w x2, x2' = -w x1, y' = x1.
 *                          Parameter omega (default 1, must be > 0).
 *  - scalar-nonlinear:     n=k=m=1.  x' = a x, y' = -y + u + c(y) x with
 *                          c(y) = c0 + c2 y^2. Parameters a (default -1),
 *                          c0 (default 1, > 0), c2 (default 1, >= 0).
 */
inline SystemModel build_catalog_model(const std::string& name, const ModelParams& params = {}) {
  ModelParams rest = params;
  SystemModel model;
  model.name = name;

  if (name == "pure-integrator") {
    detail::reject_leftovers(rest, name);
    model.n = 1;
    model.k = 1;
    model.m = 0;
    model.notes = "Observable on every window r > 0. x is constant; y grows linearly unless x0 = 0.";
    model.eval_A = [](const Vec&, const Vec&) { return Mat::Zero(1, 1).eval(); };
    model.eval_b = [](const Vec&, const Vec&) { return Vec::Zero(1).eval(); };
    model.eval_Ct = [](const Vec&) { return Mat::Ones(1, 1).eval(); };
    model.eval_f = [](const Vec&, const Vec&) { return Vec::Zero(1).eval(); };
    return model;
  }

  if (name == "harmonic-oscillator") {
    const double omega = detail::take_param(rest, "omega", 1.0);
    detail::reject_leftovers(rest, name);
    if (!(omega > 0.0)) throw ModelError("harmonic-oscillator requires omega > 0");
    model.n = 2;
    model.k = 1;
    model.m = 0;
    model.notes = "Observable on every window r > 0. x and y stay bounded.";
    model.eval_A = [omega](const Vec&, const Vec&) {
      Mat A(2, 2);
      A << 0.0, omega, -omega, 0.0;
      return A;
    };
    model.eval_b = [](const Vec&, const Vec&) { return Vec::Zero(2).eval(); };
    model.eval_Ct = [](const Vec&) {
      Mat Ct(1, 2);
      Ct << 1.0, 0.0;
      return Ct;
    };
    model.eval_f = [](const Vec&, const Vec&) { return Vec::Zero(1).eval(); };
    return model;
  }

  if (name == "scalar-nonlinear") {
    const double a = detail::take_param(rest, "a", -1.0);
    const double c0 = detail::take_param(rest, "c0", 1.0);
    const double c2 = detail::take_param(rest, "c2", 1.0);
    detail::reject_leftovers(rest, name);
    if (!(c0 > 0.0)) throw ModelError("scalar-nonlinear requires c0 > 0 so that c(y) > 0");
    if (!(c2 >= 0.0)) throw ModelError("scalar-nonlinear requires c2 >= 0 so that c(y) > 0");
    model.n = 1;
    model.k = 1;
    model.m = 1;
    model.notes = "c(y) > 0 everywhere, so every window r > 0 is observable. With a < 0, x decays; "
                  "y can still escape in finite time when |x0| is large.";
    model.eval_A = [a](const Vec&, const Vec&) { return Mat::Constant(1, 1, a).eval(); };
    model.eval_b = [](const Vec&, const Vec&) { return Vec::Zero(1).eval(); };
    model.eval_Ct = [c0, c2](const Vec& y) { return Mat::Constant(1, 1, c0 + c2 * y(0) * y(0)).eval(); };
    model.eval_f = [](const Vec& y, const Vec& u) { return Vec::Constant(1, -y(0) + u(0)).eval(); };
    return model;
  }

  throw CatalogError("unknown catalog model '" + name + "'");
}

/// Coefficients of a constant-coefficient member of the class: f(y, u) = Fy y + Fu u.
struct LinearCoefficients {
  Mat A;   // n x n
  Vec b;   // n
  Mat Ct;  // k x n
  Mat Fy;  // k x k
  Mat Fu;  // k x m
};

inline SystemModel make_linear_model(const LinearCoefficients& c, std::string name = "linear") {
  const auto n = c.A.rows();
  const auto k = c.Ct.rows();
  const auto m = c.Fu.cols();
  if (n < 1 || c.A.cols() != n) throw ModelError("A must be square with n >= 1");
  if (c.b.size() != n) throw ModelError("b must have length n");
  if (k < 1 || c.Ct.cols() != n) throw ModelError("C' must be k x n with k >= 1");
  if (c.Fy.rows() != k || c.Fy.cols() != k) throw ModelError("Fy must be k x k");
  if (c.Fu.rows() != k) throw ModelError("Fu must be k x m");

  SystemModel model;
  model.name = std::move(name);
  model.notes = "constant coefficients";
  model.n = static_cast<int>(n);
  model.k = static_cast<int>(k);
  model.m = static_cast<int>(m);
  model.eval_A = [A = c.A](const Vec&, const Vec&) { return A; };
  model.eval_b = [b = c.b](const Vec&, const Vec&) { return b; };
  model.eval_Ct = [Ct = c.Ct](const Vec&) { return Ct; };
  model.eval_f = [Fy = c.Fy, Fu = c.Fu](const Vec& y, const Vec& u) { return (Fy * y + Fu * u).eval(); };
  return model;
}

struct ValidationFailure {
  std::string evaluator;  // "A", "b", "Ct" or "f"
  std::string kind;       // "shape" or "non-finite"
  Vec y;
  Vec u;
};

struct ValidationReport {
  int probes = 0;
  std::vector<ValidationFailure> failures;

  bool ok() const { return failures.empty(); }
};

/**
 * Evaluates every callback at `probes` pseudo-random (y, u) points drawn
 * uniformly from [-10, 10] and records shape mismatches and non-finite
 * outputs. Each probe contributes at most one failure per evaluator.
 */
inline ValidationReport validate_model(const SystemModel& model, int probes, std::uint64_t seed) {
  if (probes < 1) throw std::invalid_argument("validate_model needs at least one probe");
  if (model.n < 1 || model.k < 1 || model.m < 0) throw ModelError("model dimensions must satisfy n, k >= 1, m >= 0");

  ValidationReport report;
  report.probes = probes;
  std::mt19937_64 rng(seed);
  auto draw = [&rng] { return -10.0 + 20.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53); };

  auto check = [&](const std::string& which, const Mat& out, Eigen::Index rows, Eigen::Index cols, const Vec& y,
                   const Vec& u) {
    if (out.rows() != rows || out.cols() != cols) {
      report.failures.push_back({which, "shape", y, u});
    } else if (!out.allFinite()) {
      report.failures.push_back({which, "non-finite", y, u});
    }
  };

  for (int p = 0; p < probes; ++p) {
    Vec y(model.k), u(model.m);
    for (int i = 0; i < model.k; ++i) y(i) = draw();
    for (int i = 0; i < model.m; ++i) u(i) = draw();
    check("A", model.eval_A(y, u), model.n, model.n, y, u);
    check("b", model.eval_b(y, u), model.n, 1, y, u);
    check("Ct", model.eval_Ct(y), model.k, model.n, y, u);
    check("f", model.eval_f(y, u), model.k, 1, y, u);
  }
  return report;
}

}  // namespace deadbeat

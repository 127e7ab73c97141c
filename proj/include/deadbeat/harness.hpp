#pragma once

// Measurement noise and robustness experiments. The observer only sees y~ = y + e.

#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "deadbeat/errors.hpp"
#include "deadbeat/model.hpp"
#include "deadbeat/numerics.hpp"
#include "deadbeat/observer.hpp"

namespace deadbeat {

enum class NoiseKind { none, uniform, sinusoid, decaying_sinusoid };

inline const char* to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::none: return "none";
    case NoiseKind::uniform: return "uniform";
    case NoiseKind::sinusoid: return "sinusoid";
    case NoiseKind::decaying_sinusoid: return "decaying-sinusoid";
  }
  return "?";
}

struct NoiseSpec {
  NoiseKind kind = NoiseKind::none;
  double amplitude = 0.0;  // delta
  double frequency = 0.0;  // omega, rad/s
  double decay = 0.0;      // lambda, 1/s
  std::uint64_t seed = 0;

  void validate() const {
    if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) throw std::invalid_argument("noise amplitude must be >= 0");
    if (!std::isfinite(frequency)) throw std::invalid_argument("noise frequency must be finite");
    if (!(decay >= 0.0) || !std::isfinite(decay)) throw std::invalid_argument("noise decay must be >= 0");
  }
};

/**
 * Samples the noise on a grid, identically in every output component except
 * for the uniform kind, which draws each component independently.
 *
 * The uniform kind uses std::mt19937_64 (whose output sequence is fixed by
 * the standard) and maps the top 53 bits to U in [0, 1), e = delta (2U - 1),
 * so the samples are reproducible across platforms and |e| <= delta exactly.
 */
inline Signal make_noise(const NoiseSpec& spec, const SampleGrid& grid, int k) {
  spec.validate();
  Signal e(grid, k);
  switch (spec.kind) {
    case NoiseKind::none:
      break;
    case NoiseKind::uniform: {
      std::mt19937_64 rng(spec.seed);
      for (std::size_t j = 0; j < grid.count; ++j)
        for (int i = 0; i < k; ++i) {
          const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
          e.values()(i, static_cast<Eigen::Index>(j)) = spec.amplitude * (2.0 * unit - 1.0);
        }
      break;
    }
    case NoiseKind::sinusoid:
      for (std::size_t j = 0; j < grid.count; ++j)
        e.values().col(static_cast<Eigen::Index>(j)).setConstant(spec.amplitude * std::sin(spec.frequency * grid.time(j)));
      break;
    case NoiseKind::decaying_sinusoid:
      for (std::size_t j = 0; j < grid.count; ++j) {
        const double t = grid.time(j);
        const double envelope = spec.amplitude * std::exp(-spec.decay * t);
        e.values().col(static_cast<Eigen::Index>(j)).setConstant(envelope * std::sin(spec.frequency * t));
      }
      break;
  }
  return e;
}

/// Everything a robustness experiment needs besides the noise.
struct ExperimentSetup {
  SystemModel model;
  Vec x0;
  Vec y0;
  Signal u;  // sampled on [0, T]
  double r = 1.0;
  double T = 1.0;
  ObserverOptions options;
};

struct ExperimentRecord {
  double delta = 0.0;
  std::uint64_t seed = 0;
  double sup_err = std::numeric_limits<double>::quiet_NaN();           // sup over t >= r
  double final_window_err = std::numeric_limits<double>::quiet_NaN();  // sup over [T - r, T]
  double last_reset_err = std::numeric_limits<double>::quiet_NaN();
  bool diverged = false;
  bool observability_failed = false;
  std::string diagnostic;
  std::vector<ResetError> reset_trace;
};

struct ExperimentResult {
  std::string model_name;
  double r = 0.0;
  double h_s = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<ExperimentRecord> records;
};

/// Noise-free plant trajectory over [0, T]. Throws DivergenceError when the plant is unbounded.
inline Trajectory simulate_truth(const ExperimentSetup& setup) {
  return simulate_plant(setup.model, setup.x0, setup.y0, setup.u, setup.T);
}

/// Runs the noisy reduced-order observer against a known truth and summarizes the errors.
inline ExperimentRecord noisy_run(const ExperimentSetup& setup, const Trajectory& truth, const NoiseSpec& spec) {
  ExperimentRecord rec;
  rec.delta = spec.amplitude;
  rec.seed = spec.seed;
  const SampleGrid& grid = truth.y.grid();
  const Signal e = make_noise(spec, grid, setup.model.k);
  Signal y_meas(grid, Mat(truth.y.values() + e.values()));
  Signal u_cut(grid, Mat(setup.u.values().leftCols(static_cast<Eigen::Index>(grid.count))));
  try {
    const ObserverRun run = run_reduced_order(setup.model, y_meas, u_cut, Vec::Zero(setup.model.n), setup.r, setup.options);
    const auto err = error_norms(run, truth);
    rec.sup_err = 0.0;
    rec.final_window_err = 0.0;
    const double final_start = setup.T - setup.r;
    for (std::size_t j = 0; j < err.size(); ++j) {
      const double t = grid.time(j);
      if (t >= setup.r - kGridSnapTolerance * grid.h_s) rec.sup_err = std::max(rec.sup_err, err[j]);
      if (t >= final_start - kGridSnapTolerance * grid.h_s) rec.final_window_err = std::max(rec.final_window_err, err[j]);
    }
    rec.reset_trace = reset_error_trace(run, truth);
    if (!rec.reset_trace.empty()) rec.last_reset_err = rec.reset_trace.back().error;
    if (!run.observability_failures.empty()) {
      rec.observability_failed = true;
      rec.diagnostic = std::to_string(run.observability_failures.size()) + " window(s) failed the Gramian test";
    }
  } catch (const ObservabilityError& ex) {
    rec.observability_failed = true;
    rec.diagnostic = ex.what();
  } catch (const DivergenceError& ex) {
    rec.diverged = true;
    rec.diagnostic = ex.what();
  }
  return rec;
}

namespace detail {

/// Evaluates independent rows concurrently; results keep row order.
template <class Fn>
std::vector<ExperimentRecord> run_rows(std::size_t rows, Fn&& fn) {
  std::vector<std::future<ExperimentRecord>> futures;
  futures.reserve(rows);
  for (std::size_t i = 0; i < rows; ++i) futures.push_back(std::async(std::launch::async, fn, i));
  std::vector<ExperimentRecord> out;
  out.reserve(rows);
  for (auto& f : futures) out.push_back(f.get());
  return out;
}

inline ExperimentResult result_header(const ExperimentSetup& setup) {
  ExperimentResult res;
  res.model_name = setup.model.name;
  res.r = setup.r;
  res.h_s = setup.u.grid().h_s;
  return res;
}

}  // namespace detail

/**
 * Bounded-noise sweep: one noisy observer run per (amplitude, seed), the
 * amplitude overriding the template's. Rows are ordered amplitude-major.
 * Per-row divergence or observability failures are flagged, not thrown.
 */
inline ExperimentResult bibo_sweep(const ExperimentSetup& setup, const std::vector<double>& amplitudes,
                                   const NoiseSpec& noise_template, const std::vector<std::uint64_t>& seeds = {}) {
  if (amplitudes.empty()) throw std::invalid_argument("bibo_sweep needs at least one amplitude");
  const std::vector<std::uint64_t> seed_list = seeds.empty() ? std::vector<std::uint64_t>{noise_template.seed} : seeds;
  const Trajectory truth = simulate_truth(setup);

  ExperimentResult res = detail::result_header(setup);
  res.seeds = seed_list;
  res.records = detail::run_rows(amplitudes.size() * seed_list.size(), [&](std::size_t i) {
    NoiseSpec spec = noise_template;
    spec.amplitude = amplitudes[i / seed_list.size()];
    spec.seed = seed_list[i % seed_list.size()];
    return noisy_run(setup, truth, spec);
  });
  return res;
}

struct MarginResult {
  /// Largest tested amplitude for which every family member kept sup_{t>=r}|z - x| < epsilon.
  double delta = 0.0;
  int evaluations = 0;
  std::string diagnostic;
};

struct MarginOptions {
  double ceiling = 1.0;
  /// Smallest amplitude probed, as a fraction of the ceiling.
  double floor_ratio = 1e-6;
  int bisection_steps = 12;
};

/**
 * Empirical noise margin for a target accuracy epsilon: geometric bisection
 * over the amplitude, taking the worst case over the noise family. The
 * returned amplitude is evidence of a margin, not a certificate.
 */
inline MarginResult small_error_margin(const ExperimentSetup& setup, double epsilon, const std::vector<NoiseSpec>& family,
                                       const MarginOptions& opts = {}) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("small_error_margin needs epsilon > 0");
  if (family.empty()) throw std::invalid_argument("small_error_margin needs a non-empty noise family");
  if (!(opts.ceiling > 0.0) || !(opts.floor_ratio > 0.0 && opts.floor_ratio < 1.0))
    throw std::invalid_argument("small_error_margin needs ceiling > 0 and 0 < floor_ratio < 1");

  const Trajectory truth = simulate_truth(setup);
  MarginResult out;
  auto passes = [&](double delta) {
    ++out.evaluations;
    for (NoiseSpec spec : family) {
      spec.amplitude = delta;
      const ExperimentRecord rec = noisy_run(setup, truth, spec);
      if (rec.diverged || rec.observability_failed || !(rec.sup_err < epsilon)) return false;
    }
    return true;
  };

  if (passes(opts.ceiling)) {
    out.delta = opts.ceiling;
    return out;
  }
  double lo = opts.ceiling * opts.floor_ratio;
  if (!passes(lo)) {
    out.delta = 0.0;
    out.diagnostic = "even the smallest probed amplitude " + std::to_string(lo) + " violates epsilon";
    return out;
  }
  double hi = opts.ceiling;
  for (int i = 0; i < opts.bisection_steps; ++i) {
    const double mid = std::sqrt(lo * hi);
    if (passes(mid))
      lo = mid;
    else
      hi = mid;
  }
  out.delta = lo;
  return out;
}

/// Tail check for converging noise: last reset error against the noise over the window feeding it.
struct CicoResult {
  ExperimentResult result;
  /// sup |e| over the window that produced the last reset.
  double final_noise_sup = 0.0;
  /// Multiple of final_noise_sup allowed for the last reset error.
  double tail_factor = 10.0;
  bool tail_ok = false;

  double threshold() const { return tail_factor * final_noise_sup; }
};

/**
 * Converging-noise run with a decaying sinusoid e(t) = delta e^{-lambda t} sin(omega t).
 * lambda = 0 is accepted so the same routine serves as the non-converging control.
 */
inline CicoResult cico_run(const ExperimentSetup& setup, const NoiseSpec& spec, double tail_factor = 10.0) {
  if (spec.kind != NoiseKind::decaying_sinusoid) throw std::invalid_argument("cico_run expects decaying-sinusoid noise");
  spec.validate();
  const Trajectory truth = simulate_truth(setup);

  CicoResult out;
  out.tail_factor = tail_factor;
  out.result = detail::result_header(setup);
  out.result.seeds = {spec.seed};
  out.result.records.push_back(noisy_run(setup, truth, spec));
  const ExperimentRecord& rec = out.result.records.back();
  if (rec.reset_trace.empty() || rec.diverged || rec.observability_failed) return out;

  const SampleGrid& grid = truth.y.grid();
  const Signal e = make_noise(spec, grid, setup.model.k);
  const double last_reset = rec.reset_trace.back().time;
  const std::size_t hi = grid.index_of(last_reset);
  const std::size_t lo = grid.index_of(last_reset - setup.r);
  for (std::size_t j = lo; j <= hi; ++j) out.final_noise_sup = std::max(out.final_noise_sup, e.node(j).norm());
  out.tail_ok = rec.last_reset_err <= out.threshold();
  return out;
}

}  // namespace deadbeat

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "deadbeat/harness.hpp"
#include "deadbeat/observer.hpp"

namespace deadbeat {
namespace {

constexpr double kHs = 5e-4;

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

struct Plant {
  SystemModel model;
  Signal u;
  Trajectory truth;
};

Plant plant(const std::string& name, double T, const Vec& x0, const Vec& y0) {
  Plant p{build_catalog_model(name), {}, {}};
  p.u = Signal(SampleGrid::covering(0.0, kHs, T), p.model.m);
  p.truth = simulate_plant(p.model, x0, y0, p.u, T);
  return p;
}

Plant default_plant(const std::string& name, double T) {
  if (name == "pure-integrator") return plant(name, T, vec({2.0}), vec({0.0}));
  if (name == "harmonic-oscillator") return plant(name, T, vec({1.0, 0.0}), vec({0.0}));
  return plant(name, T, vec({1.0}), vec({0.0}));
}

Signal add_noise(const Signal& y, const NoiseSpec& spec) {
  const Signal e = make_noise(spec, y.grid(), y.dim());
  return Signal(y.grid(), Mat(y.values() + e.values()));
}

TEST(ReducedOrder, PureIntegratorDeadBeat) {
  const auto p = default_plant("pure-integrator", 3.0);
  const auto run = run_reduced_order(p.model, p.truth.y, p.u, vec({-5.0}), 1.0);
  const SampleGrid& g = run.z.grid();
  for (std::size_t j = g.index_of(1.0); j < g.count; ++j) EXPECT_NEAR(run.z.node(j)(0), 2.0, 1e-7);
  // Before the first reset the estimate flows freely from z0.
  EXPECT_EQ(run.z.node(0)(0), -5.0);
  ASSERT_EQ(run.reset_times.size(), 3u);
}

TEST(ReducedOrder, OscillatorDeadBeat) {
  const auto p = default_plant("harmonic-oscillator", 5.0);
  const auto run = run_reduced_order(p.model, p.truth.y, p.u, vec({0.0, 0.0}), 1.0);
  EXPECT_LE(max_error_from(run, p.truth, 1.0), 1e-6);
  EXPECT_GT(max_error_from(run, p.truth, 0.0), 0.5);
}

TEST(ReducedOrder, DeadBeatForSeededInitialEstimates) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> dist(-10.0, 10.0);
  for (const char* name : {"pure-integrator", "harmonic-oscillator", "scalar-nonlinear"}) {
    const auto p = default_plant(name, 4.0);
    for (int i = 0; i < 10; ++i) {
      Vec z0(p.model.n);
      for (int r = 0; r < p.model.n; ++r) z0(r) = dist(rng);
      const auto run = run_reduced_order(p.model, p.truth.y, p.u, z0, 1.0);
      EXPECT_LE(max_error_from(run, p.truth, 1.0), 1e-6) << name << " run " << i;
    }
  }
}

TEST(ReducedOrder, NoisyScalarNonlinearStaysBounded) {
  const auto p = default_plant("scalar-nonlinear", 20.0);
  const Signal y = add_noise(p.truth.y, {NoiseKind::sinusoid, 0.01, 100.0, 0.0, 0});
  const auto run = run_reduced_order(p.model, y, p.u, vec({0.0}), 1.0);
  const double sup = max_error_from(run, p.truth, 1.0);
  EXPECT_TRUE(std::isfinite(sup));
  EXPECT_LT(sup, 1.0);
  EXPECT_GT(sup, 0.0);
}

TEST(ReducedOrder, ResetTimesAreExactGridMultiples) {
  const auto p = default_plant("harmonic-oscillator", 5.0);
  const auto run = run_reduced_order(p.model, p.truth.y, p.u, vec({0.0, 0.0}), 0.5);
  const SampleGrid& g = run.z.grid();
  ASSERT_EQ(run.reset_indices.size(), 10u);
  const std::size_t steps = g.steps_in(0.5);
  for (std::size_t i = 0; i < run.reset_indices.size(); ++i) {
    EXPECT_EQ(run.reset_indices[i], (i + 1) * steps);
    EXPECT_EQ(run.reset_times[i], g.time((i + 1) * steps));
    if (i) {
      EXPECT_GT(run.reset_times[i], run.reset_times[i - 1]);
    }
  }
  EXPECT_EQ(run.reset_times.back(), 5.0);
}

TEST(ReducedOrder, InitialEstimateForgottenAfterFirstWindow) {
  const auto p = default_plant("scalar-nonlinear", 4.0);
  const auto a = run_reduced_order(p.model, p.truth.y, p.u, vec({3.0}), 1.0);
  const auto b = run_reduced_order(p.model, p.truth.y, p.u, vec({-8.0}), 1.0);
  const SampleGrid& g = a.z.grid();
  for (std::size_t j = g.index_of(1.0); j < g.count; ++j) ASSERT_EQ(a.z.node(j)(0), b.z.node(j)(0)) << j;
}

TEST(ReducedOrder, ZeroNoiseChannelIsTransparent) {
  const auto p = default_plant("harmonic-oscillator", 3.0);
  const Signal y_tilde = add_noise(p.truth.y, {NoiseKind::none, 0.0, 0.0, 0.0, 0});
  const auto clean = run_reduced_order(p.model, p.truth.y, p.u, vec({1.0, 1.0}), 1.0);
  const auto noisy = run_reduced_order(p.model, y_tilde, p.u, vec({1.0, 1.0}), 1.0);
  EXPECT_TRUE(clean.z.values() == noisy.z.values());
}

TEST(ReducedOrder, BoundedNoiseLongHorizon) {
  for (const char* name : {"scalar-nonlinear", "harmonic-oscillator"}) {
    const auto p = default_plant(name, 100.0);
    const Signal y = add_noise(p.truth.y, {NoiseKind::uniform, 0.01, 0.0, 0.0, 5});
    const auto run = run_reduced_order(p.model, y, p.u, Vec::Zero(p.model.n), 1.0);
    EXPECT_TRUE(run.z.all_finite()) << name;
    EXPECT_LT(max_error_from(run, p.truth, 1.0), 1.0) << name;
  }
}

TEST(ReducedOrder, ConvergingNoiseTail) {
  const auto p = default_plant("scalar-nonlinear", 40.0);
  const NoiseSpec spec{NoiseKind::decaying_sinusoid, 0.1, 50.0, 0.2, 0};
  const auto run = run_reduced_order(p.model, add_noise(p.truth.y, spec), p.u, vec({0.0}), 1.0);
  const auto trace = reset_error_trace(run, p.truth);
  const Signal e = make_noise(spec, p.truth.y.grid(), 1);
  double final_sup = 0.0;
  for (double t = 39.0; t <= 40.0; t += kHs) final_sup = std::max(final_sup, std::abs(e.interpolate(std::min(t, 40.0))(0)));
  EXPECT_LE(trace.back().error, 10.0 * final_sup);
  EXPECT_LT(trace.back().error, trace.front().error);
  EXPECT_LE(trace.back().error, 1e-4);
}

TEST(ReducedOrder, SingularGramianAborts) {
  const auto m =
      make_linear_model({Mat::Zero(1, 1), Vec::Ones(1), Mat::Zero(1, 1), Mat::Zero(1, 1), Mat::Zero(1, 0)}, "c-zero");
  const auto g = SampleGrid::covering(0.0, kHs, 3.0);
  const auto truth = simulate_plant(m, vec({1.0}), vec({0.0}), Signal(g, 0), 3.0);
  try {
    run_reduced_order(m, truth.y, Signal(g, 0), vec({0.0}), 1.0);
    FAIL() << "expected ObservabilityError";
  } catch (const ObservabilityError& e) {
    EXPECT_EQ(e.window_start(), 0.0);
  }

  const auto held = run_reduced_order(m, truth.y, Signal(g, 0), vec({0.0}), 1.0, {kDefaultGramianTol, FailurePolicy::hold});
  EXPECT_EQ(held.observability_failures.size(), 3u);
  // z keeps flowing (z' = 1) across the held resets.
  EXPECT_NEAR(held.z.at(3.0)(0), 3.0, 1e-12);
}

TEST(ReducedOrder, RejectsMisalignedHorizon) {
  const auto p = default_plant("pure-integrator", 2.0);
  EXPECT_THROW(run_reduced_order(p.model, p.truth.y, p.u, vec({0.0}), 0.0005), GridError);
  EXPECT_THROW(run_reduced_order(p.model, p.truth.y, p.u, vec({0.0}), 0.3333), GridError);
  EXPECT_THROW(run_reduced_order(p.model, p.truth.y, p.u, vec({0.0}), 3.0), GridError);
}

TEST(FullOrder, PureIntegrator) {
  const auto p = default_plant("pure-integrator", 3.0);
  const auto run = run_full_order(p.model, p.truth.y, p.u, vec({0.0}), vec({7.0}), 1.0);
  ASSERT_TRUE(run.w);
  const SampleGrid& g = run.z.grid();
  for (std::size_t j = g.index_of(1.0); j < g.count; ++j) {
    EXPECT_NEAR(run.z.node(j)(0), 2.0, 1e-6);
    EXPECT_NEAR(run.w->node(j)(0), p.truth.y.node(j)(0), 1e-6);
  }
}

TEST(FullOrder, OscillatorArbitraryInitialConditions) {
  const auto p = default_plant("harmonic-oscillator", 5.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-5.0, 5.0);
  for (int i = 0; i < 5; ++i) {
    const auto run = run_full_order(p.model, p.truth.y, p.u, vec({dist(rng), dist(rng)}), vec({dist(rng)}), 1.0);
    EXPECT_LE(max_error_from(run, p.truth, 1.0, true), 1e-6);
  }
}

TEST(FullOrder, SingularGramianAbortsAtFirstReset) {
  const auto m =
      make_linear_model({Mat::Zero(1, 1), Vec::Ones(1), Mat::Zero(1, 1), Mat::Zero(1, 1), Mat::Zero(1, 0)}, "c-zero");
  const auto g = SampleGrid::covering(0.0, kHs, 2.0);
  const auto truth = simulate_plant(m, vec({1.0}), vec({0.0}), Signal(g, 0), 2.0);
  EXPECT_THROW(run_full_order(m, truth.y, Signal(g, 0), vec({0.0}), vec({0.0}), 1.0), ObservabilityError);
}

TEST(ResetErrorTrace, NoiselessAndConstantOffset) {
  const auto p = default_plant("scalar-nonlinear", 10.0);
  const auto clean = reset_error_trace(run_reduced_order(p.model, p.truth.y, p.u, vec({0.0}), 1.0), p.truth);
  ASSERT_EQ(clean.size(), 10u);
  for (const auto& e : clean) EXPECT_LE(e.error, 1e-6);

  // A constant measurement offset: every reset error is finite and bounded by a common constant.
  Signal biased(p.truth.y.grid(), Mat(p.truth.y.values().array() + 0.05));
  const auto biased_trace = reset_error_trace(run_reduced_order(p.model, biased, p.u, vec({0.0}), 1.0), p.truth);
  double worst = 0.0;
  for (const auto& e : biased_trace) {
    EXPECT_TRUE(std::isfinite(e.error));
    worst = std::max(worst, e.error);
  }
  EXPECT_LT(worst, 1.0);
}

}  // namespace
}  // namespace deadbeat

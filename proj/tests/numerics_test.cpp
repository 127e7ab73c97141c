#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "deadbeat/numerics.hpp"
#include "oracles.hpp"

namespace deadbeat {
namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

TEST(Rk4Step, ConstantField) {
  auto zero = [](double, const Vec& x) { return Vec::Zero(x.size()).eval(); };
  for (double h : {1e-3, 0.1, 2.0}) EXPECT_EQ(rk4_step(zero, vec({3.0}), 0.0, h)(0), 3.0);
}

TEST(Rk4Step, ExponentialGrowth) {
  auto grow = [](double, const Vec& x) { return x; };
  EXPECT_NEAR(rk4_step(grow, vec({1.0}), 0.0, 0.1)(0), std::exp(0.1), 1e-7);
  EXPECT_NEAR(rk4_step(grow, vec({1.0}), 0.0, 0.1)(0), 1.105170918, 1e-7);
}

TEST(Rk4Step, NonFiniteStateThrowsWithTime) {
  auto decay = [](double, const Vec& x) { return (-x).eval(); };
  try {
    rk4_step(decay, vec({std::numeric_limits<double>::quiet_NaN()}), 1.5, 0.1);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.time(), 1.5);
  }
}

TEST(Rk4MacroStep, HermiteMidpointIsFourthOrder) {
  auto grow = [](double, const Vec& x) { return x; };
  const double e1 = std::abs(rk4_macro_step(grow, vec({1.0}), 0.0, 0.2).mid(0) - std::exp(0.1));
  const double e2 = std::abs(rk4_macro_step(grow, vec({1.0}), 0.0, 0.1).mid(0) - std::exp(0.05));
  EXPECT_LT(e1, 1e-5);
  // Local midpoint error O(h^4): halving h divides it by about 16.
  EXPECT_GT(e1 / e2, 12.0);
  EXPECT_LT(e1 / e2, 20.0);
}

TEST(SampleGrid, AlignmentChecks) {
  const auto g = SampleGrid::covering(0.0, 0.25, 2.0);
  EXPECT_EQ(g.count, 9u);
  EXPECT_EQ(g.index_of(1.5), 6u);
  EXPECT_THROW(g.index_of(1.3), GridError);
  EXPECT_THROW(g.index_of(2.25), GridError);
  EXPECT_THROW(SampleGrid::covering(0.0, 0.3, 1.0), GridError);
  EXPECT_THROW(SampleGrid(0.0, 0.0, 5), GridError);
}

TEST(Signal, InterpolationReproducesCubics) {
  const auto g = SampleGrid::covering(0.0, 0.1, 1.0);
  Signal s(g, 1);
  auto cubic = [](double t) { return 1.0 - 2.0 * t + 0.5 * t * t * t; };
  for (std::size_t j = 0; j < g.count; ++j) s.set_node(j, vec({cubic(g.time(j))}));
  for (double t : {0.0, 0.03, 0.37, 0.5, 0.91, 1.0}) EXPECT_NEAR(s.interpolate(t)(0), cubic(t), 1e-13) << t;
  EXPECT_THROW(s.interpolate(1.2), GridError);
}

TEST(SimulatePlant, PureIntegrator) {
  const auto m = build_catalog_model("pure-integrator");
  const auto g = SampleGrid::covering(0.0, 5e-4, 1.0);
  const auto traj = simulate_plant(m, vec({2.0}), vec({0.0}), Signal(g, 0), 1.0);
  for (std::size_t j = 0; j < g.count; ++j) EXPECT_EQ(traj.x.node(j)(0), 2.0);
  EXPECT_NEAR(traj.y.at(1.0)(0), 2.0, 1e-9);
  EXPECT_FALSE(traj.diverged_at);
}

TEST(SimulatePlant, HarmonicOscillatorHalfTurn) {
  // T = pi must be a whole number of macro steps: h_s = pi / 6284 ~ 5.0e-4.
  const double T = std::numbers::pi;
  const double h_s = T / 6284.0;
  const auto m = build_catalog_model("harmonic-oscillator");
  const auto g = SampleGrid::covering(0.0, h_s, T);
  const auto traj = simulate_plant(m, vec({1.0, 0.0}), vec({0.0}), Signal(g, 0), T);
  const Vec xT = traj.x.node(g.count - 1);
  EXPECT_NEAR(xT(0), -1.0, 1e-8);
  EXPECT_NEAR(xT(1), 0.0, 1e-8);
  EXPECT_NEAR(traj.y.node(g.count - 1)(0), oracle::oscillator_y(vec({1.0, 0.0}), 0.0, T), 1e-8);
}

TEST(SimulatePlant, HarmonicOscillatorMatchesClosedFormAtEveryNode) {
  const auto m = build_catalog_model("harmonic-oscillator");
  const auto g = SampleGrid::covering(0.0, 5e-4, 5.0);
  const Vec x0 = vec({0.3, -1.2});
  const auto traj = simulate_plant(m, x0, vec({0.5}), Signal(g, 0), 5.0);
  double worst = 0.0;
  for (std::size_t j = 0; j < g.count; ++j) {
    worst = std::max(worst, (traj.x.node(j) - oracle::oscillator_x(x0, g.time(j))).norm());
    worst = std::max(worst, std::abs(traj.y.node(j)(0) - oracle::oscillator_y(x0, 0.5, g.time(j))));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(SimulatePlant, ScalarNonlinearStaysBoundedAndMatchesReference) {
  const auto m = build_catalog_model("scalar-nonlinear");
  const auto g = SampleGrid::covering(0.0, 5e-4, 10.0);
  const auto traj = simulate_plant(m, vec({1.0}), vec({0.0}), Signal(g, 1), 10.0);
  EXPECT_TRUE(traj.x.all_finite());
  EXPECT_TRUE(traj.y.all_finite());
  EXPECT_LT(traj.y.values().cwiseAbs().maxCoeff(), 10.0);

  std::vector<double> times;
  for (std::size_t j = 0; j < g.count; j += 500) times.push_back(g.time(j));
  const auto ref = oracle::scalar_nonlinear_reference(1.0, 0.0, 0.0, times);
  for (std::size_t i = 0; i < times.size(); ++i) {
    EXPECT_NEAR(traj.x.at(times[i])(0), ref[i][0], 1e-10) << times[i];
    EXPECT_NEAR(traj.y.at(times[i])(0), ref[i][1], 1e-10) << times[i];
  }
}

double oscillator_error(double h_s) {
  const auto m = build_catalog_model("harmonic-oscillator");
  const auto g = SampleGrid::covering(0.0, h_s, 4.0);
  const Vec x0 = vec({1.0, 0.5});
  const auto traj = simulate_plant(m, x0, vec({0.0}), Signal(g, 0), 4.0);
  double worst = 0.0;
  for (std::size_t j = 0; j < g.count; ++j)
    worst = std::max(worst, (traj.x.node(j) - oracle::oscillator_x(x0, g.time(j))).norm());
  return worst;
}

TEST(SimulatePlant, RefinementRatioIsFourthOrder) {
  const double ratio = oscillator_error(0.01) / oscillator_error(0.005);
  EXPECT_GE(ratio, 8.0);
  EXPECT_LE(ratio, 32.0);
}

TEST(SimulatePlant, DeterministicBitForBit) {
  const auto m = build_catalog_model("scalar-nonlinear");
  const auto g = SampleGrid::covering(0.0, 1e-3, 3.0);
  Signal u(g, 1);
  for (std::size_t j = 0; j < g.count; ++j) u.set_node(j, vec({std::sin(3.0 * g.time(j))}));
  const auto a = simulate_plant(m, vec({0.7}), vec({-0.2}), u, 3.0);
  const auto b = simulate_plant(m, vec({0.7}), vec({-0.2}), u, 3.0);
  EXPECT_TRUE(a.x.values() == b.x.values());
  EXPECT_TRUE(a.y.values() == b.y.values());
}

TEST(SimulatePlant, DivergenceIsReportedWithTime) {
  LinearCoefficients c{Mat::Constant(1, 1, 60.0), Vec::Zero(1), Mat::Ones(1, 1), Mat::Zero(1, 1), Mat::Zero(1, 0)};
  const auto m = make_linear_model(c);
  const auto g = SampleGrid::covering(0.0, 1e-3, 2.0);
  const auto partial = integrate_plant(m, vec({1.0}), vec({0.0}), Signal(g, 0));
  ASSERT_TRUE(partial.diverged_at);
  // exp(60 t) passes 1e12 near t = 0.46.
  EXPECT_NEAR(*partial.diverged_at, std::log(1e12) / 60.0, 0.01);
  EXPECT_THROW(simulate_plant(m, vec({1.0}), vec({0.0}), Signal(g, 0), 2.0), DivergenceError);
}

TEST(WindowShift, IdentityAndAffineShift) {
  const auto g = SampleGrid::covering(0.0, 0.05, 2.0);
  Signal y(g, 1);
  for (std::size_t j = 0; j < g.count; ++j) y.set_node(j, vec({g.time(j)}));

  const Signal same = window_shift(y, 0.0, 2.0);
  EXPECT_TRUE(same.values() == y.values());
  EXPECT_EQ(same.grid().t0, 0.0);

  const Signal tail = window_shift(y, 1.0, 1.0);
  EXPECT_EQ(tail.grid().t0, 0.0);
  EXPECT_NEAR(tail.grid().span(), 1.0, 1e-12);
  for (std::size_t j = 0; j < tail.size(); ++j) EXPECT_NEAR(tail.node(j)(0), 1.0 + tail.grid().time(j), 1e-12);
}

TEST(WindowShift, OutOfDomainOrMisaligned) {
  const auto g = SampleGrid::covering(0.0, 0.05, 2.0);
  Signal y(g, 1);
  EXPECT_THROW(window_shift(y, 1.5, 1.0), GridError);
  EXPECT_THROW(window_shift(y, 0.01, 1.0), GridError);
  EXPECT_THROW(window_shift(y, 0.0, 0.33), GridError);
  // A window shorter than one macro step.
  EXPECT_THROW(make_window(y, Signal(g, 0), 0.0, 0.05), GridError);
}

}  // namespace
}  // namespace deadbeat

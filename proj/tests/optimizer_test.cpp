#include "shortcut/optimizer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"

namespace shortcut {
namespace {

// Root of sigma(-x) = x, by long-double bisection.
long double sigmoid_fixed_point() {
  return oracle::bisect([](long double x) { return x - 1.0L / (1.0L + std::exp(x)); }, 0.0L,
                        1.0L, 1e-18L);
}

TEST(ScalarChannel, LinearRoot) {
  RidgeConfig c;
  EXPECT_NEAR(solve_scalar_channel([](double x) { return x - 1.0; }, c), 1.0, c.tol);
  EXPECT_NEAR(solve_scalar_channel([](double x) { return x + 37.25; }, c), -37.25, c.tol);
  EXPECT_EQ(solve_scalar_channel([](double x) { return 3.0 * x; }, c), 0.0);
}

TEST(ScalarChannel, SigmoidFixedPoint) {
  const double root = solve_scalar_channel(
      [](double x) { return -0.5 * sigmoid(-x) + 0.5 * x; }, RidgeConfig{});
  EXPECT_NEAR(root, 0.4010, 1e-3);
  EXPECT_NEAR(root, static_cast<double>(sigmoid_fixed_point()), 1e-11);
}

TEST(ScalarChannel, RootBoundedByWeightOverLambda) {
  for (double lambda : {1.0, 10.0, 1e3, 1e6}) {
    for (double k : {0.1, 0.5, 1.0}) {
      const ChannelObjective phi{k, 0.0, lambda};
      RidgeConfig c;
      c.lambda = lambda;
      const double x = solve_scalar_channel([&](double t) { return phi.derivative(t); }, c);
      EXPECT_LE(std::abs(x), 2.0 * k / lambda);
      EXPECT_LE(std::abs(phi.derivative(x)), c.tol);
    }
  }
}

TEST(ScalarChannel, NoBracketForBoundedFunction) {
  try {
    solve_scalar_channel([](double x) { return -1.0 + 0.0 * x; }, RidgeConfig{});
    FAIL() << "expected NoBracket";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.kind(), SolverError::Kind::NoBracket);
  }
}

TEST(ScalarChannel, MaxIterWhenToleranceUnreachable) {
  RidgeConfig c;
  c.tol = 1e-30;
  c.max_iter = 3;
  try {
    solve_scalar_channel([](double x) { return std::exp(x) - 2.0; }, c);
    FAIL() << "expected MaxIter";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.kind(), SolverError::Kind::MaxIter);
  }
}

TEST(ScalarChannel, Deterministic) {
  auto f = [](double x) { return -0.7 * sigmoid(-x) + 0.1 + 0.05 * x; };
  EXPECT_EQ(solve_scalar_channel(f, RidgeConfig{}), solve_scalar_channel(f, RidgeConfig{}));
}

TEST(SolveDeterministic, InvariantConeExample) {
  RidgeConfig c;
  c.lambda = 0.1;
  const ChannelSolution s = solve_deterministic(0.5, c);
  EXPECT_GT(s.w.w_s, 0.0);
  EXPECT_LT(s.w.w_s, s.w.w_z);
  EXPECT_LE(s.residual_u, c.tol);
  EXPECT_LE(s.residual_v, c.tol);
  EXPECT_EQ(classify_cone(s.w), Cone::Invariant);
  EXPECT_EQ(deterministic_risk(s.w, 0.5), 0.0);
}

TEST(SolveDeterministic, ZeroCorrelationIsSymmetric) {
  RidgeConfig c;
  c.lambda = 1.0;
  const ChannelSolution s = solve_deterministic(0.0, c);
  EXPECT_LE(std::abs(s.w.w_s), 1e-8);
  // u* = v* solves sigma(-x) = x, so w_z = u*.
  EXPECT_NEAR(s.w.w_z, static_cast<double>(sigmoid_fixed_point()), 1e-11);
  EXPECT_NEAR(s.w.w_z, 0.4010, 1e-3);
}

TEST(SolveDeterministic, StrongRidgeShrinksWeights) {
  RidgeConfig c;
  c.lambda = 1e6;
  const ChannelSolution s = solve_deterministic(0.5, c);
  EXPECT_LE(std::abs(s.w.w_z), 2e-6);
  EXPECT_LE(std::abs(s.w.w_s), 2e-6);
  EXPECT_GT(s.w.w_s, 0.0);
}

TEST(SolveDeterministic, ChannelOrderingAndCertificate) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> r(0.001, 0.999);
  std::uniform_real_distribution<double> loglam(-3.0, 2.0);
  for (int i = 0; i < 300; ++i) {
    RidgeConfig c;
    c.lambda = std::pow(10.0, loglam(rng));
    const double rb = r(rng);
    const ChannelSolution s = solve_deterministic(rb, c);
    EXPECT_GT(s.u_star, s.v_star);
    EXPECT_GT(s.v_star, 0.0);
    const Gradient g = det_ridge_gradient(s.w, rb, c.lambda);
    EXPECT_LE(std::hypot(g.d_wz, g.d_ws), 2.0 * c.tol);
  }
}

TEST(SolveDeterministic, RejectsOutOfRange) {
  EXPECT_THROW(solve_deterministic(1.0, RidgeConfig{}), std::invalid_argument);
  RidgeConfig bad;
  bad.lambda = 0.0;
  EXPECT_THROW(solve_deterministic(0.5, bad), std::invalid_argument);
}

TEST(SolveNoisy, PaperSettingGoesShortcut) {
  RidgeConfig c;
  const ChannelSolution s = solve_noisy(0.55, 0.80, c);
  EXPECT_GT(s.u_star, 0.0);
  EXPECT_LT(s.v_star, 0.0);
  EXPECT_TRUE(is_rule(induced_rule(s, c.tol_sign), RulePair::ShortcutRule));
}

TEST(SolveNoisy, BoundaryAtEqualParameters) {
  RidgeConfig c;
  for (double g : {0.1, 0.3, 0.55, 0.8, 0.95}) {
    for (double lambda : {1e-3, 0.1, 10.0}) {
      c.lambda = lambda;
      EXPECT_LE(std::abs(solve_noisy(g, g, c).v_star), c.tol_sign);
    }
  }
}

TEST(SolveNoisy, InvariantSideExample) {
  const ChannelSolution s = solve_noisy(0.9, 0.2, RidgeConfig{});
  EXPECT_GT(s.v_star, 0.0);
  EXPECT_TRUE(is_rule(induced_rule(s, 1e-8), RulePair::InvariantRule));
}

TEST(SolveNoisy, DerivativeAtZeroIdentities) {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> r(-1.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const double gamma = g(rng), rb = r(rng);
    const ChannelPair ch = noisy_channels(gamma, rb, 0.1);
    EXPECT_NEAR(ch.u.derivative(0.0), -(gamma + rb) / 4.0, 1e-12);
    EXPECT_NEAR(ch.v.derivative(0.0), (rb - gamma) / 4.0, 1e-12);
  }
}

TEST(SolveNoisy, ChannelSumEqualsRidgeObjective) {
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> w(-3.0, 3.0);
  std::uniform_real_distribution<double> g(0.01, 1.0);
  std::uniform_real_distribution<double> r(-1.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const Weights x{w(rng), w(rng)};
    const double gamma = g(rng), rb = r(rng), lambda = 0.3;
    const ChannelPair ch = noisy_channels(gamma, rb, lambda);
    const ChannelCoords c = x.channels();
    EXPECT_NEAR(ch.u.value(c.u) + ch.v.value(c.v),
                noisy_ridge_objective(x, population_states(gamma, rb), lambda), 1e-12);
    const ChannelPair st = state_channels(population_states(gamma, rb), lambda);
    EXPECT_NEAR(st.u.value(c.u) + st.v.value(c.v), ch.u.value(c.u) + ch.v.value(c.v), 1e-12);
  }
}

TEST(SolveNoisy, SignBoundaryContinuousAcrossDiagonal) {
  RidgeConfig c;
  const double gamma = 0.6;
  double prev = solve_noisy(gamma, 0.0, c).v_star;
  for (int i = 1; i <= 1000; ++i) {
    const double rb = i / 1000.0;
    const double v = solve_noisy(gamma, rb, c).v_star;
    EXPECT_LT(v, prev);  // strictly decreasing in rho_bar
    EXPECT_LT(std::abs(v - prev), 1e-2);
    if (rb < gamma - 1e-9) { EXPECT_GT(v, 0.0); }
    if (rb > gamma + 1e-9) { EXPECT_LT(v, 0.0); }
    prev = v;
  }
  EXPECT_LE(std::abs(solve_noisy(gamma, gamma, c).v_star), 10.0 * c.tol);
}

TEST(SolveNoisy, DescentCheck) {
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> w(-5.0, 5.0);
  RidgeConfig c;
  for (auto [gamma, rb] : {std::pair{0.55, 0.80}, {0.9, 0.2}, {0.3, 0.3}}) {
    const ChannelSolution s = solve_noisy(gamma, rb, c);
    const StateDistribution st = population_states(gamma, rb);
    const double best = noisy_ridge_objective(s.w, st, c.lambda);
    for (int i = 0; i < 10000; ++i) {
      ASSERT_LE(best, noisy_ridge_objective({w(rng), w(rng)}, st, c.lambda));
    }
    const Gradient gr = noisy_ridge_gradient(s.w, st, c.lambda);
    EXPECT_LE(std::hypot(gr.d_wz, gr.d_ws), 2.0 * c.tol);
  }
}

TEST(SolveNoisy, MatchesGridMinimizerOracle) {
  const double gamma = 0.55, rb = 0.80, lambda = 0.1;
  const ChannelSolution s = solve_noisy(gamma, rb, RidgeConfig{});
  const auto [wz, ws] = oracle::grid_minimize(
      [&](double a, double b) -> long double {
        return oracle::noisy_surrogate_four_terms({a, b}, gamma, rb) +
               lambda / 2.0L * (static_cast<long double>(a) * a + static_cast<long double>(b) * b);
      },
      -10.0, 10.0, 101, 12);
  EXPECT_NEAR(s.w.w_z, wz, 1e-6);
  EXPECT_NEAR(s.w.w_s, ws, 1e-6);
}

TEST(InducedRule, Examples) {
  ChannelSolution s;
  s.u_star = 0.5;
  s.v_star = -0.2;
  EXPECT_TRUE(is_rule(induced_rule(s, 1e-8), RulePair::ShortcutRule));
  s.v_star = 0.2;
  EXPECT_TRUE(is_rule(induced_rule(s, 1e-8), RulePair::InvariantRule));
  s.v_star = 0.0;
  const InducedRule r = induced_rule(s, 1e-8);
  ASSERT_TRUE(std::holds_alternative<Degenerate>(r));
  EXPECT_EQ(std::get<Degenerate>(r).reason, "tie on z=-s inputs");
  s.u_star = -0.5;
  s.v_star = 0.2;
  EXPECT_TRUE(std::holds_alternative<Degenerate>(induced_rule(s, 1e-8)));
}

TEST(InducedRule, AgreesWithRuleOnAllFourInputs) {
  std::mt19937_64 rng(59);
  std::uniform_real_distribution<double> c(-2.0, 2.0);
  for (int i = 0; i < 5000; ++i) {
    ChannelSolution s;
    s.u_star = c(rng);
    s.v_star = c(rng);
    s.w = Weights::from_channels({s.u_star, s.v_star});
    const InducedRule r = induced_rule(s, 1e-8);
    const auto* rule = std::get_if<RulePair>(&r);
    if (rule == nullptr) continue;
    for (int z : {-1, 1}) {
      for (int sv : {-1, 1}) {
        const double score = s.w.w_z * z + s.w.w_s * sv;
        const int expected = *rule == RulePair::InvariantRule ? z : sv;
        EXPECT_EQ(score > 0 ? 1 : -1, expected);
      }
    }
  }
}

TEST(PhaseGrid, LabelsBySideOfDiagonal) {
  const std::vector<double> axis = {0.2, 0.5, 0.8};
  const PhaseGrid grid = phase_grid(axis, axis, RidgeConfig{});
  ASSERT_EQ(grid.cells.size(), 9u);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      const PhaseCell& cell = grid.at(i, j);
      EXPECT_EQ(cell.gamma, axis[i]);
      EXPECT_EQ(cell.rho_bar, axis[j]);
      if (j > i) { EXPECT_EQ(cell.phase, Phase::ShortcutSide); }
      if (j < i) { EXPECT_EQ(cell.phase, Phase::InvariantSide); }
      if (j == i) { EXPECT_EQ(cell.phase, Phase::BoundaryLine); }
    }
  }
}

TEST(PhaseGrid, ThreadedMatchesSerial) {
  const auto axis = linspace(0.05, 0.95, 19);
  const PhaseGrid a = phase_grid(axis, axis, RidgeConfig{}, 1);
  const PhaseGrid b = phase_grid(axis, axis, RidgeConfig{}, 4);
  ASSERT_EQ(a.cells.size(), b.cells.size());
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    EXPECT_EQ(a.cells[i].solution.v_star, b.cells[i].solution.v_star);
    EXPECT_EQ(a.cells[i].phase, b.cells[i].phase);
  }
}

TEST(PhaseGrid, DefaultAxis) {
  const auto axis = default_phase_axis();
  ASSERT_EQ(axis.size(), 101u);
  EXPECT_DOUBLE_EQ(axis.front(), 0.01);
  EXPECT_DOUBLE_EQ(axis.back(), 0.99);
  EXPECT_THROW(phase_grid({}, axis, RidgeConfig{}), std::invalid_argument);
}

}  // namespace
}  // namespace shortcut

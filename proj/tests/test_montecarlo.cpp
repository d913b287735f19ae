#include "mm/montecarlo.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace mm;

namespace {

ModelSpec constant_model(double mu = 0.25, double sigma = 0.5, double eps = 0.01) {
  ModelConfig c;
  c.catalog = "constant";
  c.correlations = {-0.4, 0.3, 0.2};
  c.eps = eps;
  c.params = {{"mu", mu}, {"sigma", sigma}};
  return instantiate_model(c);
}

ModelSpec ou_model(double eps, double delta = 0.0, double lambda_z = 0.0) {
  ModelConfig c;
  c.catalog = "ou_tanh";
  c.correlations = {-0.4, 0.3, 0.2};
  c.eps = eps;
  c.delta = delta;
  c.params = {{"lambda0", 0.3}, {"lambda_y", 0.2}, {"lambda_z", lambda_z}};
  return instantiate_model(c);
}

UtilitySpec power(double gamma) { return make_utility({"power", gamma, {}, {}}); }

// Closed-form Merton value for power utility and constant Sharpe ratio.
double power_merton(double gamma, double lambda, double tau, double x) {
  return std::pow(x, 1 - gamma) / (1 - gamma) * std::exp((1 - gamma) * lambda * lambda * tau / (2 * gamma));
}

}  // namespace

TEST(Correlation, FactorReproducesMatrix) {
  const CorrelationTriple r{-0.5, 0.3, 0.2};
  const Eigen::Matrix3d L = correlation_factor(r);
  const Eigen::Matrix3d C = L * L.transpose();
  EXPECT_NEAR(C(0, 1), -0.5, 1e-15);
  EXPECT_NEAR(C(0, 2), 0.3, 1e-15);
  EXPECT_NEAR(C(1, 2), 0.2, 1e-15);
  EXPECT_NEAR(C(2, 2), 1.0, 1e-15);
  EXPECT_THROW(correlation_factor({0.9, 0.9, 0.0}), ConfigError);
}

TEST(Correlation, SampledIncrementsMatch) {
  const Eigen::Matrix3d L = correlation_factor({-0.4, 0.3, 0.2});
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n;
  double sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < 1000000; ++i) {
    const Eigen::Vector3d w = L * Eigen::Vector3d(n(rng), n(rng), n(rng));
    sxy += w(0) * w(1);
    sxx += w(0) * w(0);
    syy += w(1) * w(1);
  }
  EXPECT_NEAR(sxy / std::sqrt(sxx * syy), -0.4, 0.01);
}

TEST(Simulation, ZeroSharpeKeepsWealth) {
  const ModelSpec spec = constant_model(0.0);
  Expansion e(spec, power(2.0));
  SimConfig cfg;
  cfg.paths = 200;
  cfg.steps = 50;
  cfg.x0 = 1.7;
  const PathStats s = simulate_paths(spec, pi0_strategy(e), cfg);
  for (double x : s.terminal_wealth) EXPECT_EQ(x, 1.7);
  const ValueEstimate v = estimate_value(s, e.utility());
  EXPECT_EQ(v.mean, e.utility().U(1.7));
  EXPECT_EQ(v.half_width, 0.0);
}

TEST(Simulation, SameSeedIsBitIdentical) {
  const ModelSpec spec = ou_model(0.05, 0.02, 0.1);
  Expansion e(spec, power(2.0));
  auto m = std::make_shared<MertonEvaluator>(e);
  SimConfig cfg;
  cfg.paths = 3000;
  cfg.steps = 40;
  cfg.seed = 99;
  const PathStats a = simulate_paths(spec, pi0_strategy(e, m), cfg, m.get());
  const PathStats b = simulate_paths(spec, pi0_strategy(e, m), cfg, m.get());
  EXPECT_EQ(a.terminal_wealth, b.terminal_wealth);
  EXPECT_EQ(a.max_second_moment, b.max_second_moment);
  EXPECT_EQ(a.proxy_d1v0, b.proxy_d1v0);
  cfg.seed = 100;
  const PathStats c = simulate_paths(spec, pi0_strategy(e, m), cfg);
  EXPECT_NE(a.terminal_wealth, c.terminal_wealth);
}

TEST(Simulation, PathsDependOnlyOnTheirOwnStream) {
  const ModelSpec spec = ou_model(0.05);
  Expansion e(spec, power(2.0));
  SimConfig cfg;
  cfg.paths = 5000;
  cfg.steps = 20;
  const PathStats big = simulate_paths(spec, pi0_strategy(e), cfg);
  cfg.paths = 10;
  const PathStats small = simulate_paths(spec, pi0_strategy(e), cfg);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(big.terminal_wealth[i], small.terminal_wealth[i]);
}

TEST(Simulation, ConstantSharpeMatchesMerton) {
  const ModelSpec spec = constant_model();
  Expansion e(spec, power(2.0));
  SimConfig cfg;
  cfg.paths = 100000;
  cfg.steps = 200;
  const ValueEstimate v = estimate_value(simulate_paths(spec, pi0_strategy(e), cfg), e.utility());
  const double exact = power_merton(2.0, 0.5, 1.0, 1.0);
  EXPECT_NEAR(e.v0(0.0, 1.0, 0.0), exact, 1e-13);
  EXPECT_LT(std::abs(v.mean - exact), 3.0 * v.std_error);
}

TEST(Simulation, CoverageOverSeeds) {
  const ModelSpec spec = constant_model();
  Expansion e(spec, power(2.0));
  auto m = std::make_shared<MertonEvaluator>(e);
  const StrategyField pi = pi0_strategy(e, m);
  const double exact = power_merton(2.0, 0.5, 1.0, 1.0);
  int covered = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    SimConfig cfg;
    cfg.paths = 2000;
    cfg.steps = 20;
    cfg.seed = seed;
    const ValueEstimate v = estimate_value(simulate_paths(spec, pi, cfg), e.utility());
    if (std::abs(v.mean - exact) <= v.half_width) ++covered;
  }
  EXPECT_GE(covered, 93);
}

TEST(Simulation, AntitheticAgreesWithPlain) {
  const ModelSpec spec = ou_model(0.1);
  Expansion e(spec, power(2.0));
  auto m = std::make_shared<MertonEvaluator>(e);
  SimConfig cfg;
  cfg.paths = 20000;
  cfg.steps = 50;
  const ValueEstimate plain = estimate_value(simulate_paths(spec, pi0_strategy(e, m), cfg), e.utility());
  cfg.antithetic = true;
  const ValueEstimate anti = estimate_value(simulate_paths(spec, pi0_strategy(e, m), cfg), e.utility());
  EXPECT_EQ(anti.samples, 10000u);
  EXPECT_LT(std::abs(plain.mean - anti.mean), plain.half_width + anti.half_width);
}

TEST(Simulation, StepRefinementIsStable) {
  const ModelSpec spec = constant_model();
  Expansion e(spec, power(3.0));
  SimConfig cfg;
  cfg.paths = 100000;
  cfg.steps = 50;
  const PathStats coarse = simulate_paths(spec, pi0_strategy(e), cfg);
  cfg.steps = 100;
  const PathStats fine = simulate_paths(spec, pi0_strategy(e), cfg);
  const ValueEstimate a = estimate_value(coarse, e.utility()), b = estimate_value(fine, e.utility());
  EXPECT_LT(std::abs(a.mean - b.mean), b.half_width);
  EXPECT_TRUE(std::isfinite(fine.max_second_moment));
  EXPECT_NEAR(coarse.max_second_moment / fine.max_second_moment, 1.0, 0.05);
}

TEST(Simulation, StiffFastFactorUsesImplicitStep) {
  const ModelSpec spec = ou_model(1e-5);
  Expansion e(spec, power(2.0));
  SimConfig cfg;
  cfg.paths = 500;
  cfg.steps = 100;
  const PathStats s = simulate_paths(spec, pi0_strategy(e), cfg);
  EXPECT_TRUE(s.implicit_fast);
  for (double x : s.terminal_wealth) EXPECT_TRUE(std::isfinite(x) && x > 0);
  EXPECT_FALSE(simulate_paths(ou_model(0.5), pi0_strategy(e), cfg).implicit_fast);
}

TEST(Simulation, PositivityFlagging) {
  const ModelSpec spec = constant_model();
  Expansion e(spec, power(2.0));
  SimConfig cfg;
  cfg.paths = 2000;
  cfg.steps = 50;
  StrategyField reckless;
  reckless.pi = [](double, double, double, double) { return 20.0; };
  reckless.order = "fixed";
  EXPECT_GT(simulate_paths(spec, reckless, cfg).positivity_violations, 0u);
  EXPECT_EQ(simulate_paths(spec, pi0_strategy(e), cfg).positivity_violations, 0u);
}

TEST(Simulation, AdmissibilityProxies) {
  const ModelSpec spec = constant_model();
  Expansion e(spec, power(2.0));
  auto m = std::make_shared<MertonEvaluator>(e);
  SimConfig cfg;
  cfg.paths = 1000;
  cfg.steps = 50;
  cfg.proxy_paths = 100;
  const PathStats s = simulate_paths(spec, pi0_strategy(e, m), cfg, m.get());
  EXPECT_EQ(s.proxy_samples, 100u);
  // Constant Sharpe ratio: pi0 sigma = lambda R, so the two integrands differ by lambda^2.
  EXPECT_NEAR(s.proxy_wealth_vol, 0.25 * s.proxy_d1v0, 1e-12 * s.proxy_d1v0);
  EXPECT_GT(s.proxy_d1v0, 0.0);
}

TEST(Estimate, RefusesSmallSamples) {
  const ModelSpec spec = constant_model();
  Expansion e(spec, power(2.0));
  SimConfig cfg;
  cfg.paths = 29;
  cfg.steps = 5;
  const PathStats s = simulate_paths(spec, pi0_strategy(e), cfg);
  EXPECT_THROW(estimate_value(s, e.utility()), std::invalid_argument);
  cfg.paths = 40;
  cfg.antithetic = true;
  EXPECT_THROW(estimate_value(simulate_paths(spec, pi0_strategy(e), cfg), e.utility()), std::invalid_argument);
  cfg.paths = 41;
  EXPECT_THROW(simulate_paths(spec, pi0_strategy(e), cfg), std::invalid_argument);
}

TEST(MertonEvaluator, MatchesField) {
  const ModelSpec spec = ou_model(0.05, 0.02, 0.15);
  Expansion e(spec, make_utility({"mixture", 0, {1.0, 0.5}, {1.5, 4.0}}));
  const MertonEvaluator m(e);
  for (double z : {-1.0, 0.0, 0.8}) {
    const MertonField f = e.merton(z);
    EXPECT_NEAR(m.lambda_bar(z), f.lambda_bar(), 1e-9);
    for (double t : {0.0, 0.5}) {
      for (double x : {0.3, 1.0, 5.0}) {
        EXPECT_NEAR(m.R(t, x, z), f.R(t, x), 1e-6 * f.R(t, x));
        EXPECT_NEAR(m.v0_x(t, x, z), f.M_x(t, x), 1e-6 * f.M_x(t, x));
      }
    }
  }
}

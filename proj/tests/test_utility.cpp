#include "mm/utility.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mm;

namespace {

UtilitySpec power(double g) {
  UtilityConfig c;
  c.family = "power";
  c.gamma = g;
  return make_utility(c);
}

UtilitySpec log_utility() {
  UtilityConfig c;
  c.family = "log";
  return make_utility(c);
}

UtilitySpec mixture() {
  UtilityConfig c;
  c.family = "mixture";
  c.weights = {0.5, 0.5};
  c.gammas = {1.5, 3.0};
  return make_utility(c);
}

UtilitySpec inverse_sum() {
  UtilityConfig c;
  c.family = "inverse_marginal_sum";
  c.weights = {0.6, 0.4};
  c.gammas = {1.0, 3.0};
  return make_utility(c);
}

}  // namespace

TEST(Utility, PowerGammaTwoValues) {
  const auto v = eval_utility(power(2.0), 1.0);
  EXPECT_DOUBLE_EQ(v.U, -1.0);
  EXPECT_DOUBLE_EQ(v.Up, 1.0);
  EXPECT_DOUBLE_EQ(v.Upp, -2.0);
  EXPECT_DOUBLE_EQ(v.R, 0.5);
  EXPECT_NEAR(v.Rp, 0.5, 1e-15);
  EXPECT_NEAR(power(2.0).I(1.0), 1.0, 1e-15);
  EXPECT_NEAR(power(2.0).I(4.0), 0.5, 1e-15);
}

TEST(Utility, LogValues) {
  const auto u = log_utility();
  const auto v = eval_utility(u, std::exp(1.0));
  EXPECT_NEAR(v.U, 1.0, 1e-15);
  EXPECT_NEAR(v.R, std::exp(1.0), 1e-15);
  EXPECT_NEAR(u.I(0.25), 4.0, 1e-15);
}

TEST(Utility, RiskToleranceClosedForms) {
  for (double x : {0.01, 0.7, 3.0, 250.0}) {
    EXPECT_DOUBLE_EQ(power(3.0).R(x), x / 3.0);
    EXPECT_DOUBLE_EQ(log_utility().R(x), x);
  }
}

TEST(Utility, InvalidParameters) {
  UtilityConfig c;
  c.family = "power";
  c.gamma = 1.0;
  EXPECT_THROW(make_utility(c), std::invalid_argument);
  c.gamma = -1.0;
  EXPECT_THROW(make_utility(c), std::invalid_argument);
  c.family = "mixture";
  c.weights = {0.5, -0.5};
  c.gammas = {1.5, 3.0};
  EXPECT_THROW(make_utility(c), std::invalid_argument);
  c.family = "exponential";
  EXPECT_THROW(make_utility(c), std::invalid_argument);
  EXPECT_THROW(power(2.0).eval(0.0), std::domain_error);
}

TEST(Utility, RoundTripAllFamilies) {
  for (const auto& u : {power(2.0), power(0.5), log_utility(), mixture(), inverse_sum()}) {
    for (double e = -6; e <= 3; e += 0.25) {
      const double x = std::pow(10.0, e);
      EXPECT_NEAR(u.I(u.Up(x)) / x, 1.0, 1e-10) << u.name() << " x=" << x;
    }
  }
}

TEST(Utility, MixtureIsConcaveWithVaryingRiskAversion) {
  const auto u = mixture();
  double lo = 1e300, hi = -1e300;
  for (double x : default_probe_grid()) {
    EXPECT_LT(u.Upp(x), 0.0);
    lo = std::min(lo, u.Rp(x));
    hi = std::max(hi, u.Rp(x));
  }
  EXPECT_GT(hi - lo, 0.1);
}

TEST(Utility, InverseSumConsistentDerivatives) {
  // U' and U'' of the inverse-marginal family against differences of U.
  const auto u = inverse_sum();
  for (double x : {0.05, 1.0, 20.0}) {
    const double h = 1e-4 * x;
    const double d1 = (u.U(x + h) - u.U(x - h)) / (2 * h);
    const double d2 = (u.Up(x + h) - u.Up(x - h)) / (2 * h);
    EXPECT_NEAR(d1 / u.Up(x), 1.0, 1e-7);
    EXPECT_NEAR(d2 / u.Upp(x), 1.0, 1e-7);
  }
}

TEST(Utility, PowerRiskTolerancePowers) {
  // R = x/2, so d^i/dx^i (x/2)^i = i!/2^i.
  const auto u = power(2.0);
  double fact = 1.0;
  for (int i = 1; i <= 7; ++i) {
    fact *= i;
    for (double x : {0.1, 1.0, 7.0}) EXPECT_NEAR(u.d_R_power(x, i), fact / std::pow(2.0, i), 1e-11 * fact) << i;
  }
}

TEST(Utility, MixtureRiskTolerancePowersMatchFiniteDifferences) {
  const auto u = mixture();
  auto Rsq = [&](double x) { return std::pow(-u.Up(x) / u.Upp(x), 2); };
  auto Rcube = [&](double x) { return std::pow(-u.Up(x) / u.Upp(x), 3); };
  for (double x : {0.3, 1.0, 4.0}) {
    const double h = 1e-3 * x;
    const double d2 = (-Rsq(x + 2 * h) + 16 * Rsq(x + h) - 30 * Rsq(x) + 16 * Rsq(x - h) - Rsq(x - 2 * h)) / (12 * h * h);
    EXPECT_NEAR(u.d_R_power(x, 2), d2, 1e-6 * std::abs(d2));
    const double d3 = (Rcube(x + 2 * h) - 2 * Rcube(x + h) + 2 * Rcube(x - h) - Rcube(x - 2 * h)) / (2 * h * h * h);
    EXPECT_NEAR(u.d_R_power(x, 3), d3, 1e-4 * std::abs(d3));
  }
}

TEST(Utility, JetMatchesInverseMarginal) {
  const auto u = mixture();
  for (double uu : {-2.0, 0.0, 1.5}) {
    const JetD J = u.J_jet(uu, 6);
    EXPECT_NEAR(J.value(), u.I(std::exp(-uu)), 1e-13 * J.value());
    const double h = 1e-4;
    const double fd = (u.I(std::exp(-uu - h)) - u.I(std::exp(-uu + h))) / (2 * h);
    EXPECT_NEAR(J.derivative(1), fd, 1e-7 * std::abs(fd));
  }
}

TEST(Assumption, PowerReport) {
  const auto r = check_assumption_u(power(2.0), default_probe_grid());
  EXPECT_TRUE(r.pass());
  ASSERT_EQ(r.dr_sups.size(), 6u);
  EXPECT_NEAR(r.dr_sups[0], 0.5, 1e-12);
  EXPECT_NEAR(r.growth_exponent, 0.5, 1e-10);
}

TEST(Assumption, LogElasticityProxy) {
  const auto r = check_assumption_u(log_utility(), default_probe_grid());
  EXPECT_TRUE(r.pass());
  EXPECT_NEAR(r.ae_proxy, 1.0 / std::log(1e6), 1e-12);
  EXPECT_NEAR(r.growth_exponent, 1.0, 1e-10);
}

TEST(Assumption, MixtureReport) {
  const auto r = check_assumption_u(mixture(), default_probe_grid());
  EXPECT_TRUE(r.pass());
  EXPECT_LE(r.max_roundtrip_error, 1e-10);
  EXPECT_NEAR(r.growth_exponent, 1.0 / 1.5, 1e-3);
}

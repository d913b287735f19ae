#include "mm/averaging.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mm;

namespace {

ModelSpec ou_model(double lambda_z = 0.0, double m_y = 0.0) {
  ModelConfig c;
  c.catalog = "ou_tanh";
  c.params = {{"kappa_y", 1.0}, {"nu_y", std::sqrt(2.0)}, {"m_y", m_y},
              {"lambda0", 0.3}, {"lambda_y", 0.2},        {"lambda_z", lambda_z}};
  return instantiate_model(c);
}

ModelSpec constant_model() {
  ModelConfig c;
  c.catalog = "constant";
  c.params = {{"mu", 0.25}, {"sigma", 0.5}};
  return instantiate_model(c);
}

// Composite Simpson against the standard normal density on [-12, 12].
double normal_expectation(const std::function<double(double)>& f, int n = 24000) {
  const double lo = -12.0, h = 24.0 / n;
  double s = 0;
  for (int i = 0; i <= n; ++i) {
    const double y = lo + i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += w * f(y) * std::exp(-0.5 * y * y);
  }
  return s * h / 3.0 / std::sqrt(2.0 * M_PI);
}

// L_y f - rhs with sixth-order central differences, L_y = b d/dy + a^2/2 d^2/dy^2.
double fd_residual(const PoissonSolution& th, const ModelSpec& spec, double y, double h) {
  const double c1[] = {-1.0 / 60, 3.0 / 20, -3.0 / 4, 0.0, 3.0 / 4, -3.0 / 20, 1.0 / 60};
  const double c2[] = {1.0 / 90, -3.0 / 20, 3.0 / 2, -49.0 / 18, 3.0 / 2, -3.0 / 20, 1.0 / 90};
  double d1 = 0, d2 = 0;
  for (int k = -3; k <= 3; ++k) {
    const double v = th.value(y + k * h);
    d1 += c1[k + 3] * v;
    d2 += c2[k + 3] * v;
  }
  d1 /= h;
  d2 /= h * h;
  const double a = spec.a(y);
  return spec.b(y) * d1 + 0.5 * a * a * d2 - (th.rhs(y) - th.rhs_mean());
}

}  // namespace

TEST(InvariantDensity, StandardNormalForUnitOu) {
  const ModelSpec spec = ou_model();
  const InvariantDensity d = invariant_density(spec);
  EXPECT_TRUE(d.gaussian());
  EXPECT_DOUBLE_EQ(d.mean(), 0.0);
  EXPECT_NEAR(d.sd(), 1.0, 1e-15);
  for (double y : {-3.0, -0.5, 0.0, 1.0, 2.5})
    EXPECT_NEAR(d.density(y), std::exp(-0.5 * y * y) / std::sqrt(2 * M_PI), 1e-15);
  EXPECT_NEAR(d.mass(), 1.0, 1e-12);
}

TEST(InvariantDensity, MeanFollowsLongRunLevel) {
  const ModelSpec spec = ou_model(0.0, 0.5);
  const InvariantDensity d = invariant_density(spec);
  EXPECT_DOUBLE_EQ(d.mean(), 0.5);
  EXPECT_NEAR(average([](double y) { return y; }, d).value, 0.5, 1e-12);
}

TEST(Average, ElementaryMoments) {
  const ModelSpec spec = ou_model();
  const InvariantDensity d = invariant_density(spec);
  EXPECT_NEAR(average([](double) { return 1.0; }, d).value, 1.0, 1e-14);
  EXPECT_NEAR(average([](double y) { return std::tanh(y); }, d).value, 0.0, 1e-14);
  EXPECT_NEAR(average([](double y) { return y * y; }, d).value, 1.0, 1e-12);
  const double t2 = normal_expectation([](double y) { return std::tanh(y) * std::tanh(y); });
  EXPECT_NEAR(average([](double y) { return std::tanh(y) * std::tanh(y); }, d).value, t2, 1e-10);
  EXPECT_NEAR(d.average_panels([](double y) { return std::tanh(y) * std::tanh(y); }), t2, 1e-10);
}

TEST(Poisson, LinearRhs) {
  const ModelSpec spec = ou_model();
  const InvariantDensity d = invariant_density(spec);
  const PoissonSolution th = solve_poisson([](double y) { return y; }, d, spec);
  EXPECT_NEAR(th.rhs_mean(), 0.0, 1e-14);
  for (double y : {-4.0, -1.3, 0.0, 0.7, 4.0}) {
    EXPECT_NEAR(th.value(y), -y, 1e-9) << y;
    EXPECT_NEAR(th.dy(y), -1.0, 1e-9) << y;
    EXPECT_NEAR(th.dyy(y), 0.0, 1e-9) << y;
  }
}

TEST(Poisson, QuadraticRhs) {
  const ModelSpec spec = ou_model();
  const InvariantDensity d = invariant_density(spec);
  const PoissonSolution th = solve_poisson([](double y) { return y * y - 1.0; }, d, spec);
  for (double y : {-4.0, -2.2, 0.0, 0.4, 3.1, 4.0}) {
    EXPECT_NEAR(th.value(y), 0.5 - 0.5 * y * y, 1e-9) << y;
    EXPECT_NEAR(th.dy(y), -y, 1e-9) << y;
  }
}

TEST(Poisson, ConstantRhsIsZero) {
  const ModelSpec spec = ou_model();
  const InvariantDensity d = invariant_density(spec);
  const PoissonSolution th = solve_poisson([](double) { return 0.7; }, d, spec);
  EXPECT_TRUE(th.zero());
  EXPECT_DOUBLE_EQ(th.rhs_mean(), 0.7);
  EXPECT_EQ(th.value(1.0), 0.0);
  EXPECT_EQ(th.dy(-2.0), 0.0);
}

TEST(Poisson, SolutionsAreCentered) {
  const ModelSpec spec = ou_model();
  const InvariantDensity d = invariant_density(spec);
  const PoissonSolution th = solve_poisson([](double y) { return std::exp(0.3 * y) * std::tanh(y); }, d, spec);
  EXPECT_NEAR(d.average_panels([&](double y) { return th.value(y); }), 0.0, 1e-12);
}

TEST(ThetaFamily, ConstantSharpeRatioCollapses) {
  const ModelSpec spec = constant_model();
  const ThetaBundle b = theta_family(spec, 0.0);
  EXPECT_NEAR(b.lambda_bar, 0.5, 1e-14);
  EXPECT_NEAR(b.lambda_hat, 0.5, 1e-14);
  EXPECT_EQ(b.B, 0.0);
  EXPECT_EQ(b.B1, 0.0);
  for (int i = 0; i < 12; ++i) {
    EXPECT_TRUE(b.th(i).zero()) << i;
    EXPECT_EQ(b.th(i).value(0.3), 0.0) << i;
  }
}

TEST(ThetaFamily, SharpeAverages) {
  const ModelSpec spec = ou_model();
  const ThetaBundle b = theta_family(spec, 0.0);
  const double t2 = normal_expectation([](double y) { return std::tanh(y) * std::tanh(y); });
  EXPECT_NEAR(b.lambda_hat, 0.3, 1e-12);
  EXPECT_NEAR(b.lambda_bar * b.lambda_bar, 0.09 + 0.04 * t2, 1e-12);
  EXPECT_GE(b.lambda_bar, b.lambda_hat);
}

TEST(ThetaFamily, SolvabilityConstantTwoWays) {
  const ModelSpec spec = ou_model();
  const ThetaBundle b = theta_family(spec, 0.0);
  EXPECT_NEAR(b.th(1).rhs_mean(), b.B, 1e-12);

  // B = <lambda a theta'> with theta' = 2 G / (a^2 Phi), G the cumulative
  // centered source, by a direct sweep.
  const double lb2 = b.lambda_bar * b.lambda_bar;
  const double a = spec.a(0.0);
  const int n = 40000;
  const double lo = -10.0, h = 20.0 / n;
  double G = 0, B = 0;
  auto src = [&](double y) {
    const double l = spec.lambda(y, 0.0);
    return (l * l - lb2) * std::exp(-0.5 * y * y) / std::sqrt(2 * M_PI);
  };
  for (int i = 0; i < n; ++i) {
    const double y0 = lo + i * h, y1 = y0 + h;
    const double ym = y0 + 0.5 * h;
    // G at the midpoint and the panel end, Simpson on each half panel.
    const double Gm = G + h / 12.0 * (src(y0) + 4 * src(y0 + 0.25 * h) + src(ym));
    G += h / 6.0 * (src(y0) + 4 * src(ym) + src(y1));
    B += h * spec.lambda(ym, 0.0) * a * 2.0 * Gm / (a * a);
  }
  EXPECT_NEAR(b.B, B, 1e-6);
}

TEST(ThetaFamily, AllCenteredAndResidualSmall) {
  const ModelSpec spec = ou_model(0.1);
  ThetaLattice lattice(spec, 0.2);
  const ThetaBundle& b = lattice.bundle(0);
  const InvariantDensity& d = lattice.density();
  const double h = 3.0 * (d.support().hi - d.support().lo) / d.panel_count();
  for (int i = 0; i < 12; ++i) {
    EXPECT_NEAR(d.average_panels([&](double y) { return b.th(i).value(y); }), 0.0, 1e-10) << i;
    double worst = 0;
    for (double y = -4.0; y <= 4.0; y += 0.37) worst = std::max(worst, std::abs(fd_residual(b.th(i), spec, y, h)));
    EXPECT_LT(worst, 1e-8) << "theta_" << i;
  }
  EXPECT_NEAR(b.avg_theta, 0.0, 1e-10);
}

TEST(ThetaFamily, ThetaFiveMatchesDirectSolve) {
  const ModelSpec spec = ou_model();
  const ThetaBundle b = theta_family(spec, 0.0);
  const InvariantDensity d = invariant_density(spec);
  const PoissonSolution direct = solve_poisson([&](double y) { return b.th(0).value(y); }, d, spec);
  for (double y : {-3.0, 0.0, 1.5}) EXPECT_NEAR(b.th(5).value(y), direct.value(y), 1e-12);
}

TEST(ThetaLattice, SlowDerivativesMatchDifferences) {
  const ModelSpec spec = ou_model(0.1);
  ThetaLattice lattice(spec, 0.2);
  const ThetaBundle& b = lattice.bundle(0);
  EXPECT_NEAR(lattice.dz([](const ThetaBundle& x) { return x.lambda_bar; }), b.lambda_bar_p, 1e-8);
  EXPECT_NEAR(lattice.dz([](const ThetaBundle& x) { return x.lambda_hat; }), b.lambda_hat_p, 1e-8);
  EXPECT_NEAR(lattice.dz([](const ThetaBundle& x) { return x.lambda_bar_p; }), b.lambda_bar_pp, 1e-7);
  // theta_yz against a wider difference of theta'.
  const double hz = 0.02;
  ThetaLattice wide(spec, 0.2, hz);
  for (double y : {-1.0, 0.5}) {
    const double fd = (wide.theta(1).dy(y) - wide.theta(-1).dy(y)) / (2 * hz);
    EXPECT_NEAR(b.theta_yz(y), fd, 1e-4) << y;
  }
}

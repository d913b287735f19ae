#include "mm/expansion.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace mm;

namespace {

ModelSpec ou_model(double lambda_z = 0.0, CorrelationTriple rho = {-0.4, 0.3, 0.1}) {
  ModelConfig c;
  c.catalog = "ou_tanh";
  c.correlations = rho;
  c.params = {{"lambda0", 0.3}, {"lambda_y", 0.2}, {"lambda_z", lambda_z}};
  return instantiate_model(c);
}

ModelSpec constant_model() {
  ModelConfig c;
  c.catalog = "constant";
  c.correlations = {-0.4, 0.3, 0.1};
  c.params = {{"mu", 0.25}, {"sigma", 0.5}};
  return instantiate_model(c);
}

UtilitySpec power(double gamma) { return make_utility({"power", gamma, {}, {}}); }

// L_{t,x}(l) f = f_t + l^2 R^2 f_xx / 2 + l^2 R f_x by central differences.
double ltx_fd(const std::function<double(double, double)>& f, double l, double R, double t, double x) {
  const double ht = 1e-4, hx = 1e-3 * x;
  const double ft = (f(t + ht, x) - f(t - ht, x)) / (2 * ht);
  const double fx = (f(t, x + hx) - f(t, x - hx)) / (2 * hx);
  const double fxx = (f(t, x + hx) - 2 * f(t, x) + f(t, x - hx)) / (hx * hx);
  return ft + 0.5 * l * l * R * R * fxx + l * l * R * fx;
}

}  // namespace

TEST(FirstOrderFast, ConstantSharpeVanishes) {
  Expansion e(constant_model(), power(2.0));
  EXPECT_EQ(e.v10(0.2, 1.3, 0.0), 0.0);
  EXPECT_EQ(e.v01(0.2, 1.3, 0.0), 0.0);
  const WTerms w = e.w({0.2, 1.3, 0.4, 0.0});
  EXPECT_EQ(w.w20, 0.0);
  EXPECT_EQ(w.w30, 0.0);
  EXPECT_EQ(w.w11, 0.0);
  const Point p{0.1, 0.7, -0.3, 0.0};
  EXPECT_EQ(e.approx(p, 0.3, 0.2), e.v0(p.t, p.x, p.z));
}

TEST(FirstOrderFast, TerminalZero) {
  Expansion e(ou_model(), power(2.0));
  EXPECT_EQ(e.v10(1.0, 1.3, 0.0), 0.0);
}

TEST(FirstOrderFast, PowerTwoClosedForm) {
  Expansion e(ou_model(), power(2.0));
  const ThetaBundle& b = e.bundle(0.0);
  ASSERT_NE(b.B, 0.0);
  for (double t : {0.0, 0.5}) {
    for (double x : {0.3, 1.0, 4.0}) {
      const double v0 = e.v0(t, x, 0.0);
      EXPECT_NEAR(e.v10(t, x, 0.0), -(1.0 - t) * (-0.4) * b.B * v0 / 8.0, 1e-13 * std::abs(v0));
    }
  }
}

TEST(FirstOrderFast, SolvesItsPde) {
  const ModelSpec spec = ou_model();
  Expansion e(spec, power(3.0));
  const ThetaBundle& b = e.bundle(0.0);
  const MertonField f = e.merton(b);
  for (double x : {0.5, 2.0}) {
    const double t = 0.4;
    const double res = ltx_fd([&](double tt, double xx) { return e.v10(tt, xx, 0.0); }, b.lambda_bar, f.R(t, x), t, x) -
                       0.5 * spec.correlations().rho1 * b.B * apply_dk(f, {DOp::D1, DOp::D1}, t, x);
    EXPECT_NEAR(res, 0.0, 1e-6);
  }
}

TEST(FirstOrderSlow, TwoFormsAgree) {
  const ModelSpec spec = ou_model(0.15);
  const UtilitySpec u = make_utility({"mixture", 0, {1.0, 0.5}, {1.5, 4.0}});
  Expansion e(spec, u);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ut(0.0, 0.95), ux(-2.0, 2.0);
  const double rho2 = spec.correlations().rho2;
  for (int i = 0; i < 100; ++i) {
    const double z = i < 50 ? 0.3 : 0.3 + 0.1 * (i % 3);
    const ThetaBundle& b = e.bundle(z);
    const MertonField f = e.merton(b);
    const double t = ut(rng), x = std::exp(ux(rng));
    const double a = first_order_slow(f, b, rho2, spec.g(z), t, x);
    const double c = first_order_slow_via_vz(f, b, rho2, spec.g(z), t, x);
    EXPECT_NEAR(a, c, 1e-6 * std::abs(a) + 1e-14);
  }
}

TEST(FirstOrderSlow, Vanishes) {
  Expansion flat(ou_model(0.0), power(2.0));
  EXPECT_EQ(flat.v01(0.3, 1.0, 0.5), 0.0);
  Expansion uncorrelated(ou_model(0.2, {-0.4, 0.0, 0.1}), power(2.0));
  EXPECT_EQ(uncorrelated.v01(0.3, 1.0, 0.5), 0.0);
  Expansion sloped(ou_model(0.2), power(2.0));
  EXPECT_EQ(sloped.v01(1.0, 1.0, 0.5), 0.0);
  EXPECT_NE(sloped.v01(0.3, 1.0, 0.5), 0.0);
}

TEST(WTerms, PowerTwoLeadingTerm) {
  Expansion e(ou_model(), power(2.0));
  const ThetaBundle& b = e.bundle(0.0);
  for (double y : {-2.0, 0.0, 1.0}) {
    const Point p{0.25, 1.7, y, 0.0};
    EXPECT_NEAR(e.w(p).w20, 0.25 * b.th(0).value(y) * e.v0(p.t, p.x, 0.0), 1e-13);
  }
}

TEST(WTerms, SolvesPoissonEquation) {
  const ModelSpec spec = ou_model(0.1);
  Expansion e(spec, power(2.5));
  const double z = 0.2;
  const ThetaBundle& b = e.bundle(z);
  const MertonField f = e.merton(b);
  const PoissonSolution& th = b.th(0);
  for (double y : {-1.5, 0.3, 2.0}) {
    const double t = 0.3, x = 1.4;
    const double D1 = apply_dk(f, {DOp::D1}, t, x);
    const double lyw = -0.5 * D1 * (spec.b(y) * th.dy(y) + 0.5 * spec.a(y) * spec.a(y) * th.dyy(y));
    const double l = spec.lambda(y, z);
    const double ltx = ltx_fd([&](double tt, double xx) { return f.value(tt, xx); }, l, f.R(t, x), t, x);
    EXPECT_NEAR(lyw + ltx, 0.0, 1e-6) << y;
  }
}

TEST(VegaGamma, AnalyticSharpeCurve) {
  const HeatKernel k(power(2.0));
  auto lb = [](double z) { return 0.3 + 0.1 * std::tanh(z); };
  auto lbp = [](double z) { return 0.1 / (std::cosh(z) * std::cosh(z)); };
  const auto r = vega_gamma_residual(k, 1.0, lb, lbp, {-1.0, 0.0, 0.7}, {0.0, 0.5, 1.0}, {0.2, 1.0, 5.0});
  EXPECT_EQ(r.points, 27);
  EXPECT_LT(r.max_vz, 1e-6);
  EXPECT_LT(r.max_rz, 1e-6);
}

TEST(VegaGamma, MixtureUtilityModel) {
  Expansion e(ou_model(0.2), make_utility({"mixture", 0, {1.0, 1.0}, {1.5, 3.0}}));
  const auto r = vega_gamma_residual(e, {-0.5, 0.4}, {0.0, 0.6}, {0.3, 1.0, 3.0});
  EXPECT_LT(r.max_vz, 1e-6);
  EXPECT_LT(r.max_rz, 1e-6);
}

TEST(VegaGamma, FlatSharpeIsExact) {
  Expansion e(ou_model(0.0), power(3.0));
  const auto r = vega_gamma_residual(e, {0.0, 1.0}, {0.0, 0.5}, {0.5, 2.0});
  EXPECT_LT(r.max_vz, 1e-12);
  EXPECT_LT(r.max_rz, 1e-12);
}

TEST(ZerothStrategy, MertonFraction) {
  Expansion e(constant_model(), power(2.0));
  EXPECT_NEAR(e.pi0({0.0, 1.0, 0.0, 0.0}), 0.5, 1e-14);
  EXPECT_NEAR(e.pi0({0.3, 1e-8, 0.0, 0.0}), 0.5e-8, 1e-20);
  const StrategyField s = e.zeroth_strategy();
  EXPECT_EQ(s.pi(0.0, 2.0, 0.0, 0.0), e.pi0({0.0, 2.0, 0.0, 0.0}));
}

TEST(ZerothStrategy, ZeroSharpePoint) {
  ModelConfig c;
  c.catalog = "ou_tanh";
  c.params = {{"lambda0", 0.0}, {"lambda_y", 0.2}};
  // lambda vanishes at y = 0.
  const ModelSpec spec = instantiate_model(c);
  const HeatKernel k(power(2.0));
  const MertonField f(k, 0.2, 1.0);
  EXPECT_EQ(zeroth_strategy(f, spec, {0.0, 1.0, 0.0, 0.0}), 0.0);
}

TEST(ApproxValue, Assembly) {
  EXPECT_EQ(approx_value(-1.0, 0.3, 0.2, 0.0, 0.0), -1.0);
  Expansion e(ou_model(), power(2.0));
  const Point p{0.0, 1.0, 0.0, 0.0};
  EXPECT_NEAR(e.approx(p, 0.04, 0.0), e.v0(0, 1, 0) + 0.2 * e.v10(0, 1, 0), 1e-15);
  EXPECT_THROW(approx_value(1, 1, 1, -0.1, 0), std::invalid_argument);
}

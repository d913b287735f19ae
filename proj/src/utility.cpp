#include "mm/utility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mm {
namespace {

// Solves log(sum_i c_i exp(-k_i v)) = target for v, with c_i, k_i > 0.
// The left side is convex and strictly decreasing, so a bracketed Newton
// iteration converges from any start.
double solve_logsumexp(const std::vector<double>& c, const std::vector<double>& k, double target) {
  auto f = [&](double v, double& df) {
    double m = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < c.size(); ++i) m = std::max(m, std::log(c[i]) - k[i] * v);
    double s = 0, ds = 0;
    for (size_t i = 0; i < c.size(); ++i) {
      const double e = std::exp(std::log(c[i]) - k[i] * v - m);
      s += e;
      ds -= k[i] * e;
    }
    df = ds / s;
    return m + std::log(s) - target;
  };
  double lo = -1.0, hi = 1.0, dummy;
  while (f(lo, dummy) < 0) lo *= 2;
  while (f(hi, dummy) > 0) hi *= 2;
  double v = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    double df;
    const double fv = f(v, df);
    if (fv > 0) lo = v; else hi = v;
    double next = v - fv / df;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - v) <= 1e-15 * std::max(1.0, std::abs(v))) return next;
    v = next;
  }
  return v;
}

double power_term(double x, double gamma) {
  return gamma == 1.0 ? std::log(x) : std::pow(x, 1.0 - gamma) / (1.0 - gamma);
}

void require_positive(double x) {
  if (!(x > 0.0)) throw std::domain_error("utility evaluated at non-positive wealth");
}

}  // namespace

UtilitySpec make_utility(const UtilityConfig& config) {
  UtilitySpec u;
  u.name_ = config.family;
  if (config.family == "power") {
    if (!(config.gamma > 0.0) || config.gamma == 1.0)
      throw std::invalid_argument("power utility needs gamma > 0 and gamma != 1 (use family = \"log\")");
    u.family_ = UtilityFamily::Power;
    u.w_ = {1.0};
    u.g_ = {config.gamma};
  } else if (config.family == "log") {
    u.family_ = UtilityFamily::Log;
    u.w_ = {1.0};
    u.g_ = {1.0};
  } else if (config.family == "mixture" || config.family == "inverse_marginal_sum") {
    u.family_ = config.family == "mixture" ? UtilityFamily::Mixture : UtilityFamily::InverseMarginalSum;
    if (config.weights.empty() || config.weights.size() != config.gammas.size())
      throw std::invalid_argument("weights and gammas must be non-empty and of equal length");
    for (size_t i = 0; i < config.weights.size(); ++i) {
      if (!(config.weights[i] > 0.0)) throw std::invalid_argument("utility weights must be positive");
      if (!(config.gammas[i] > 0.0)) throw std::invalid_argument("utility gammas must be positive");
    }
    u.w_ = config.weights;
    u.g_ = config.gammas;
  } else {
    throw std::invalid_argument("unknown utility family '" + config.family + "'");
  }
  const Eigen::ArrayXd grid = default_probe_grid();
  for (double x : grid) {
    if (!(u.Up(x) > 0.0) || !(u.Upp(x) < 0.0))
      throw std::invalid_argument("utility is not increasing and strictly concave on the probe grid");
  }
  return u;
}

double UtilitySpec::I(double y) const {
  if (!(y > 0.0)) throw std::domain_error("inverse marginal utility needs y > 0");
  switch (family_) {
    case UtilityFamily::Power:
    case UtilityFamily::Log:
    case UtilityFamily::InverseMarginalSum: {
      double s = 0;
      for (size_t i = 0; i < w_.size(); ++i) s += w_[i] * std::pow(y, -1.0 / g_[i]);
      return s;
    }
    case UtilityFamily::Mixture:
      return std::exp(solve_logsumexp(w_, g_, std::log(y)));
  }
  return 0;
}

double UtilitySpec::Up(double x) const {
  require_positive(x);
  switch (family_) {
    case UtilityFamily::Power:
    case UtilityFamily::Log:
    case UtilityFamily::Mixture: {
      double s = 0;
      for (size_t i = 0; i < w_.size(); ++i) s += w_[i] * std::pow(x, -g_[i]);
      return s;
    }
    case UtilityFamily::InverseMarginalSum: {
      std::vector<double> k(g_.size());
      for (size_t i = 0; i < g_.size(); ++i) k[i] = 1.0 / g_[i];
      return std::exp(solve_logsumexp(w_, k, std::log(x)));
    }
  }
  return 0;
}

double UtilitySpec::Upp(double x) const {
  require_positive(x);
  switch (family_) {
    case UtilityFamily::Power:
    case UtilityFamily::Log:
    case UtilityFamily::Mixture: {
      double s = 0;
      for (size_t i = 0; i < w_.size(); ++i) s -= w_[i] * g_[i] * std::pow(x, -g_[i] - 1.0);
      return s;
    }
    case UtilityFamily::InverseMarginalSum: {
      const double y = Up(x);
      double dI = 0;
      for (size_t i = 0; i < w_.size(); ++i) dI -= w_[i] / g_[i] * std::pow(y, -1.0 / g_[i] - 1.0);
      return 1.0 / dI;
    }
  }
  return 0;
}

double UtilitySpec::U_of_I(double y) const {
  if (!(y > 0.0)) throw std::domain_error("U(I(y)) needs y > 0");
  if (family_ == UtilityFamily::Mixture) return U(I(y));
  double s = 0;
  for (size_t i = 0; i < w_.size(); ++i)
    s -= g_[i] == 1.0 ? w_[i] * std::log(y) : w_[i] * std::pow(y, 1.0 - 1.0 / g_[i]) / (g_[i] - 1.0);
  return s;
}

double UtilitySpec::U(double x) const {
  require_positive(x);
  switch (family_) {
    case UtilityFamily::Power:
    case UtilityFamily::Log:
    case UtilityFamily::Mixture: {
      double s = 0;
      for (size_t i = 0; i < w_.size(); ++i) s += w_[i] * power_term(x, g_[i]);
      return s;
    }
    case UtilityFamily::InverseMarginalSum:
      return U_of_I(Up(x));
  }
  return 0;
}

JetD UtilitySpec::J_jet(double u, int order) const {
  if (exponential_j()) {
    JetD::Coeffs c = JetD::Coeffs::Zero(order + 1);
    for (size_t i = 0; i < w_.size(); ++i) {
      const double r = 1.0 / g_[i];
      double term = w_[i] * std::exp(r * u);
      for (int k = 0; k <= order; ++k) {
        c(k) += term;
        term *= r / (k + 1);
      }
    }
    return JetD(c);
  }
  // Mixture: q(u) = log J(u) solves log(sum_i w_i exp(-g_i q)) = -u. Newton on jets
  // doubles the number of correct coefficients per step.
  const double q0 = solve_logsumexp(w_, g_, -u);
  JetD q = JetD::constant(q0, order);
  JetD::Coeffs uc = JetD::Coeffs::Zero(order + 1);
  uc(0) = u;
  if (order >= 1) uc(1) = 1.0;
  const JetD ujet(uc);
  for (int known = 1; known <= 2 * (order + 1); known *= 2) {
    JetD s = JetD::constant(0.0, order);
    JetD ds = JetD::constant(0.0, order);
    for (size_t i = 0; i < w_.size(); ++i) {
      const JetD e = w_[i] * exp(-g_[i] * q);
      s += e;
      ds -= g_[i] * e;
    }
    const JetD F = log(s) + ujet;
    q -= F * s / ds;
  }
  return exp(q);
}

double UtilitySpec::R(double x) const {
  require_positive(x);
  switch (family_) {
    case UtilityFamily::Power:
    case UtilityFamily::Log:
      return x / g_[0];
    default:
      return -Up(x) / Upp(x);
  }
}

double UtilitySpec::Rp(double x) const {
  require_positive(x);
  const JetD J = J_jet(u_of_x(x), 2);
  return J.derivative(2) / J.derivative(1);
}

double UtilitySpec::d_R_power(double x, int i) const {
  require_positive(x);
  if (i < 0) throw std::invalid_argument("derivative order must be non-negative");
  const JetD J = J_jet(u_of_x(x), i + 2);
  const JetD Jp = J.derivative();
  JetD f = JetD::constant(1.0, Jp.order());
  for (int k = 0; k < i; ++k) f = f * Jp;
  const JetD inv = reciprocal(Jp);
  for (int k = 0; k < i; ++k) f = f.derivative() * inv;
  return f.value();
}

UtilityValues UtilitySpec::eval(double x) const {
  require_positive(x);
  UtilityValues v;
  v.U = U(x);
  v.Up = Up(x);
  v.Upp = Upp(x);
  v.R = R(x);
  v.Rp = Rp(x);
  v.I_of_Up = I(v.Up);
  return v;
}

Eigen::ArrayXd default_probe_grid() { return Eigen::ArrayXd::LinSpaced(61, -3.0, 3.0).unaryExpr([](double e) { return std::pow(10.0, e); }); }

AssumptionReport check_assumption_u(const UtilitySpec& spec, const Eigen::ArrayXd& grid) {
  AssumptionReport r;
  r.increasing = r.concave = r.risk_tolerance_increasing = r.roundtrip = true;
  double prev_R = -1.0;
  for (double x : grid) {
    const UtilityValues v = spec.eval(x);
    r.increasing = r.increasing && v.Up > 0.0;
    r.concave = r.concave && v.Upp < 0.0;
    r.risk_tolerance_increasing = r.risk_tolerance_increasing && v.R > prev_R;
    prev_R = v.R;
    r.max_roundtrip_error = std::max(r.max_roundtrip_error, std::abs(v.I_of_Up - x) / x);
  }
  r.roundtrip = r.max_roundtrip_error <= 1e-10;

  // Inada limits and R(0+) = 0 through monotone probe sequences 10^{+-k}, k <= 8.
  r.inada_zero = r.inada_infinity = r.risk_tolerance_vanishes = true;
  double up_small = spec.Up(1.0), up_large = spec.Up(1.0), r_small = spec.R(1.0);
  for (int k = 1; k <= 8; ++k) {
    const double s = spec.Up(std::pow(10.0, -k));
    const double l = spec.Up(std::pow(10.0, k));
    const double rs = spec.R(std::pow(10.0, -k));
    r.inada_zero = r.inada_zero && s > up_small;
    r.inada_infinity = r.inada_infinity && l < up_large;
    r.risk_tolerance_vanishes = r.risk_tolerance_vanishes && rs < r_small;
    up_small = s;
    up_large = l;
    r_small = rs;
  }
  r.inada_zero = r.inada_zero && up_small >= 1e3 * spec.Up(1.0);
  r.inada_infinity = r.inada_infinity && up_large <= 1e-3 * spec.Up(1.0);
  r.risk_tolerance_vanishes = r.risk_tolerance_vanishes && r_small <= 1e-6 * spec.R(1.0);

  r.dr_sups.assign(6, 0.0);
  r.dr_finite = true;
  for (int i = 2; i <= 7; ++i) {
    for (double x : grid) r.dr_sups[i - 2] = std::max(r.dr_sups[i - 2], std::abs(spec.d_R_power(x, i)));
    r.dr_finite = r.dr_finite && std::isfinite(r.dr_sups[i - 2]);
  }

  const double xl = 1e6;
  r.ae_proxy = xl * spec.Up(xl) / spec.U(xl);

  // Least-squares slope of log I(y) against log y for y in [1e-8, 1e-4].
  const int n = 9;
  Eigen::ArrayXd ly = Eigen::ArrayXd::LinSpaced(n, -8.0, -4.0) * std::log(10.0);
  Eigen::ArrayXd li = ly.unaryExpr([&](double v) { return std::log(spec.I(std::exp(v))); });
  const double my = ly.mean(), mi = li.mean();
  r.growth_exponent = -((ly - my) * (li - mi)).sum() / (ly - my).square().sum();
  return r;
}

}  // namespace mm

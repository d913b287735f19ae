#include "mm/merton.hpp"

#include "mm/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mm {
namespace {

constexpr double kInvSqrtPi = 0.56418958354775628695;

SJet sconst(double v, int order) { return {JetD::constant(v, order), JetD::constant(0.0, order)}; }

}  // namespace

HeatKernel::HeatKernel(UtilitySpec utility, int gh_nodes) : u_(std::move(utility)), gh_nodes_(gh_nodes) {
  if (gh_nodes_ < 4) throw std::invalid_argument("heat kernel needs at least 4 quadrature nodes");
}

JetD HeatKernel::H_jet(double xi, double s, int order) const {
  if (s < 0.0) throw std::domain_error("heat kernel evaluated at negative time-to-go");
  if (u_.exponential_j()) {
    JetD::Coeffs c = JetD::Coeffs::Zero(order + 1);
    for (size_t i = 0; i < u_.weights().size(); ++i) {
      const double r = 1.0 / u_.gammas()[i];
      double term = u_.weights()[i] * std::exp(r * xi + 0.5 * r * r * s);
      for (int k = 0; k <= order; ++k) {
        c(k) += term;
        term *= r / (k + 1);
      }
    }
    return JetD(c);
  }
  if (s == 0.0) return u_.J_jet(xi, order);
  const QuadratureRule& q = gauss_hermite(gh_nodes_);
  const double scale = std::sqrt(2.0 * s);
  JetD acc = JetD::constant(0.0, order);
  for (Eigen::Index j = 0; j < q.nodes.size(); ++j)
    acc += (q.weights(j) * kInvSqrtPi) * u_.J_jet(xi + scale * q.nodes(j), order);
  return acc;
}

double HeatKernel::H_and_slope(double xi, double s, double& slope) const {
  if (u_.exponential_j()) {
    const JetD h = H_jet(xi, s, 1);
    slope = h.coeff(1);
    return h.coeff(0);
  }
  // J' = R(J) = -U'/U'' evaluated at wealth J.
  auto node = [&](double u, double& d) {
    const double x = u_.I(std::exp(-u));
    d = u_.R(x);
    return x;
  };
  if (s == 0.0) return node(xi, slope);
  const QuadratureRule& q = gauss_hermite(gh_nodes_);
  const double scale = std::sqrt(2.0 * s);
  double acc = 0.0, dacc = 0.0;
  for (Eigen::Index j = 0; j < q.nodes.size(); ++j) {
    double d;
    acc += q.weights(j) * node(xi + scale * q.nodes(j), d);
    dacc += q.weights(j) * d;
  }
  slope = dacc * kInvSqrtPi;
  return acc * kInvSqrtPi;
}

double HeatKernel::H(double xi, double s) const {
  if (u_.exponential_j()) return H_jet(xi, s, 0).value();
  if (s == 0.0) return u_.I(std::exp(-xi));
  const QuadratureRule& q = gauss_hermite(gh_nodes_);
  const double scale = std::sqrt(2.0 * s);
  double acc = 0.0;
  for (Eigen::Index j = 0; j < q.nodes.size(); ++j) acc += q.weights(j) * u_.I(std::exp(-xi - scale * q.nodes(j)));
  return acc * kInvSqrtPi;
}

double HeatKernel::xi_of(double x, double s) const {
  if (!(x > 0.0)) throw std::domain_error("Merton field evaluated at non-positive wealth");
  if (u_.exponential_j() && u_.weights().size() == 1) {
    const double g = u_.gammas()[0];
    return g * std::log(x / u_.weights()[0]) - 0.5 * s / g;
  }
  // H(xi, s) >= J(xi) because J is convex, so the root lies below u(x).
  const double lx = std::log(x);
  double hi = u_.u_of_x(x);
  if (s == 0.0) return hi;
  double step = std::max(1.0, s);
  double lo = hi - step;
  double slope;
  while (std::log(H_and_slope(lo, s, slope)) > lx) {
    step *= 2;
    lo = hi - step;
  }
  double xi = hi;
  for (int it = 0; it < 100; ++it) {
    const double h = H_and_slope(xi, s, slope);
    const double g = std::log(h) - lx;
    if (g > 0) hi = xi; else lo = xi;
    double next = xi - g * h / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - xi) <= 1e-15 * std::max(1.0, std::abs(xi))) return next;
    xi = next;
  }
  return xi;
}

double HeatKernel::m_value(double xi, double s) const {
  if (u_.exponential_j()) {
    double m = 0.0;
    for (size_t i = 0; i < u_.weights().size(); ++i) {
      const double c = u_.weights()[i];
      const double g = u_.gammas()[i];
      if (g == 1.0)
        m += c * (xi + s);
      else
        m += c / (1.0 - g) * std::exp(xi * (1.0 / g - 1.0) + 0.5 * s * (1.0 / (g * g) - 1.0));
    }
    return m;
  }
  // dM/ds at fixed x is R M_x / 2 = H'(xi) exp(-xi - s/2) / 2.
  const double x = H(xi, s);
  if (s == 0.0) return u_.U(x);
  const double integral = integrate_gl(
      [&](double sp) {
        const double z = xi_of(x, sp);
        double slope;
        H_and_slope(z, sp, slope);
        return std::exp(-z - 0.5 * sp) * slope;
      },
      0.0, s, 12);
  return u_.U(x) + 0.5 * integral;
}

SJet d1(const SJet& f) { return {f.re.derivative(), f.ds.derivative()}; }

SJet d2(const SJet& f, const MertonLocal& loc) {
  const SJet f1 = d1(f);
  return d1(f1) - loc.Hq * f1;
}

SJet dx(const SJet& f, const MertonLocal& loc) { return d1(f) * loc.invHp; }

SJet ds_at_x(const SJet& f, const MertonLocal& loc) {
  return {f.ds - 0.5 * (loc.Hq.re * f.re.derivative()), JetD()};
}

MertonField::MertonField(const HeatKernel& kernel, double lambda_bar, double T, int order)
    : kernel_(&kernel), lambda_(lambda_bar), T_(T), order_(order) {
  if (!(lambda_bar >= 0.0)) throw std::invalid_argument("lambda_bar must be non-negative");
  if (!(T > 0.0)) throw std::invalid_argument("horizon must be positive");
  if (order < 2) throw std::invalid_argument("Merton field order must be at least 2");
}

MertonLocal MertonField::local_s(double s, double x, int order) const {
  MertonLocal loc;
  loc.s = s;
  loc.x = x;
  loc.xi = kernel_->xi_of(x, s);
  const JetD full = kernel_->H_jet(loc.xi, s, order + 2);
  loc.H = {full.truncated(order), 0.5 * full.derivative().derivative()};

  const double e0 = std::exp(-loc.xi - 0.5 * s);
  JetD::Coeffs ec(order + 1);
  double term = e0;
  for (int k = 0; k <= order; ++k) {
    ec(k) = term;
    term *= -1.0 / (k + 1);
  }
  const JetD E(ec);
  loc.Mx = {E, -0.5 * E};

  const SJet Hp = d1(loc.H);
  loc.Hq = d1(Hp) / Hp;
  loc.invHp = sconst(1.0, order) / Hp;

  const SJet mp = loc.Mx * Hp;
  const double m0 = kernel_->m_value(loc.xi, s);
  const double ms0 = 0.5 * e0 * (full.derivative(1) + full.derivative(2));
  loc.m = {mp.re.integral(m0), mp.ds.integral(ms0)};
  return loc;
}

double MertonField::value(double t, double x) const {
  const double s = s_of(t);
  return kernel_->m_value(kernel_->xi_of(x, s), s);
}

double MertonField::M_x(double t, double x) const {
  const double s = s_of(t);
  return std::exp(-kernel_->xi_of(x, s) - 0.5 * s);
}

double MertonField::R(double t, double x) const {
  const double s = s_of(t);
  return kernel_->H_jet(kernel_->xi_of(x, s), s, 1).coeff(1);
}

double MertonField::M_xx(double t, double x) const { return -M_x(t, x) / R(t, x); }

double MertonField::M_t(double t, double x) const { return -0.5 * lambda_ * lambda_ * R(t, x) * M_x(t, x); }

MertonField solve_merton(const HeatKernel& kernel, double lambda_bar, double T) {
  return MertonField(kernel, lambda_bar, T);
}

double apply_dk(const MertonField& field, const std::vector<DOp>& ops, double t, double x, double lambda_bar_prime) {
  const MertonLocal loc = field.local(t, x);
  const double s_z = 2.0 * (field.T() - t) * field.lambda_bar() * lambda_bar_prime;
  SJet f = loc.m;
  for (auto it = ops.rbegin(); it != ops.rend(); ++it) {
    switch (*it) {
      case DOp::D1:
        f = d1(f);
        break;
      case DOp::D2:
        f = d2(f, loc);
        break;
      case DOp::Dx:
        f = dx(f, loc);
        break;
      case DOp::Dz:
        f = s_z * ds_at_x(f, loc);
        break;
    }
  }
  return val(f);
}

double merton_residual(const MertonField& field, double t, double x) {
  const double mxx = field.M_xx(t, x);
  if (mxx == 0.0) throw std::runtime_error("M_xx vanished: Merton field is not concave");
  const double mx = field.M_x(t, x);
  const double l = field.lambda_bar();
  return field.M_t(t, x) - 0.5 * l * l * mx * mx / mxx;
}

double merton_residual_fd(const std::function<double(double, double)>& M, double lambda_bar, double t, double x,
                          double h) {
  const double hx = h * x;
  const double m0 = M(t, x);
  const double mp = M(t, x + hx), mm = M(t, x - hx);
  const double mx = (mp - mm) / (2 * hx);
  const double mxx = (mp - 2 * m0 + mm) / (hx * hx);
  // Backward one-sided second-order difference in t keeps evaluations before the horizon.
  const double mt = (3 * m0 - 4 * M(t - h, x) + M(t - 2 * h, x)) / (2 * h);
  if (mxx == 0.0) throw std::runtime_error("M_xx vanished: value surface is not concave");
  return mt - 0.5 * lambda_bar * lambda_bar * mx * mx / mxx;
}

namespace {

// Thomas algorithm for a constant-coefficient tridiagonal system
// lower x_{i-1} + diag x_i + upper x_{i+1} = rhs_i.
void solve_tridiagonal(double lower, double diag, double upper, Eigen::ArrayXd& rhs) {
  const Eigen::Index n = rhs.size();
  Eigen::ArrayXd c(n);
  c(0) = upper / diag;
  rhs(0) /= diag;
  for (Eigen::Index i = 1; i < n; ++i) {
    const double m = diag - lower * c(i - 1);
    c(i) = upper / m;
    rhs(i) = (rhs(i) - lower * rhs(i - 1)) / m;
  }
  for (Eigen::Index i = n - 2; i >= 0; --i) rhs(i) -= c(i) * rhs(i + 1);
}

}  // namespace

HField solve_h_transform(const UtilitySpec& u, double lambda_bar, double T, const HGrid& grid) {
  if (!(lambda_bar >= 0.0) || !(T > 0.0)) throw std::invalid_argument("need lambda_bar >= 0 and T > 0");
  if (grid.nx < 5 || grid.nt < 1 || !(grid.xi_max > grid.xi_min)) throw std::invalid_argument("invalid heat grid");
  HField f;
  f.lambda_ = lambda_bar;
  f.T_ = T;
  f.xi_ = Eigen::ArrayXd::LinSpaced(grid.nx, grid.xi_min, grid.xi_max);
  f.t_ = Eigen::ArrayXd::LinSpaced(grid.nt + 1, 0.0, T);
  f.values_.resize(grid.nt + 1, grid.nx);

  Eigen::ArrayXd h = f.xi_.unaryExpr([&](double v) { return u.I(std::exp(-v)); });
  if (!h.allFinite()) throw std::overflow_error("terminal data I(exp(-xi)) overflows the truncation domain");
  f.values_.row(grid.nt) = h.transpose();

  const double g_left = *std::max_element(u.gammas().begin(), u.gammas().end());
  const double g_right = *std::min_element(u.gammas().begin(), u.gammas().end());
  const double h_left = h(0), h_right = h(grid.nx - 1);
  const double dxi = f.xi_(1) - f.xi_(0);
  const double ds = lambda_bar * lambda_bar * T / grid.nt;
  const double r = 0.25 * ds / (dxi * dxi);

  const Eigen::Index m = grid.nx - 2;
  for (int n = 1; n <= grid.nt; ++n) {
    const double s = n * ds;
    const double bl = h_left * std::exp(0.5 * s / (g_left * g_left));
    const double br = h_right * std::exp(0.5 * s / (g_right * g_right));
    Eigen::ArrayXd rhs = h.segment(1, m) * (1.0 - 2.0 * r) + r * (h.head(m) + h.tail(m));
    rhs(0) += r * bl;
    rhs(m - 1) += r * br;
    solve_tridiagonal(-r, 1.0 + 2.0 * r, -r, rhs);
    h.segment(1, m) = rhs;
    h(0) = bl;
    h(grid.nx - 1) = br;
    f.values_.row(grid.nt - n) = h.transpose();
  }
  return f;
}

double HField::H(int n, double xi) const {
  const Eigen::Index nx = xi_.size();
  const double pos = (xi - xi_(0)) / (xi_(1) - xi_(0));
  const Eigen::Index j = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(pos)), 0, nx - 2);
  const double w = pos - j;
  return (1 - w) * values_(n, j) + w * values_(n, j + 1);
}

double HField::H_inverse(int n, double w) const {
  const auto row = values_.row(n);
  const Eigen::Index nx = row.size();
  if (!(w >= row(0) && w <= row(nx - 1))) throw std::domain_error("H inverse outside the grid range");
  Eigen::Index lo = 0, hi = nx - 1;
  while (hi - lo > 1) {
    const Eigen::Index mid = (lo + hi) / 2;
    if (row(mid) <= w) lo = mid; else hi = mid;
  }
  const double a = (w - row(lo)) / (row(hi) - row(lo));
  return xi_(lo) + a * (xi_(hi) - xi_(lo));
}

double h_defining_relation_error(const HField& field, const HeatKernel& kernel, double xi_check) {
  double err = 0.0;
  const int nt = static_cast<int>(field.t().size()) - 1;
  const int stride = std::max(1, nt / 10);
  for (int n = 0; n <= nt; n += stride) {
    const double s = field.lambda_bar() * field.lambda_bar() * (field.T() - field.t()(n));
    for (Eigen::Index j = 0; j < field.xi().size(); ++j) {
      const double xi = field.xi()(j);
      if (std::abs(xi) > xi_check) continue;
      const double x = field.value(n, j);
      err = std::max(err, std::abs(std::expm1(xi - kernel.xi_of(x, s))));
    }
  }
  return err;
}

}  // namespace mm

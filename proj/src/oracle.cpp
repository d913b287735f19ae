#include "mm/oracle.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace mm {
namespace {

// Chebyshev points cos(pi j / n) on [-1, 1] and the differentiation matrix.
void chebyshev(int n, Eigen::VectorXd& x, Eigen::MatrixXd& D) {
  x.resize(n + 1);
  for (int j = 0; j <= n; ++j) x(j) = std::cos(M_PI * j / n);
  Eigen::VectorXd c = Eigen::VectorXd::Ones(n + 1);
  c(0) = c(n) = 2.0;
  for (int j = 1; j <= n; j += 2) c(j) = -c(j);
  D.setZero(n + 1, n + 1);
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      if (i != j) D(i, j) = c(i) / c(j) / (x(i) - x(j));
    }
    D(i, i) = -D.row(i).sum();
  }
}

// Barycentric interpolation at y of nodal values f.
double bary_eval(const Eigen::VectorXd& nodes, const Eigen::VectorXd& w, const Eigen::VectorXd& f, double y) {
  double num = 0, den = 0;
  for (Eigen::Index j = 0; j < nodes.size(); ++j) {
    const double d = y - nodes(j);
    if (d == 0.0) return f(j);
    const double c = w(j) / d;
    num += c * f(j);
    den += c;
  }
  return num / den;
}

// Cubic Lagrange weights (value and derivative) over four equally spaced levels.
void lagrange4(double s, double* w, double* dw) {
  // Nodes at 0, 1, 2, 3; s in units of the level spacing.
  const double a = s, b = s - 1, c = s - 2, d = s - 3;
  w[0] = -b * c * d / 6;
  w[1] = a * c * d / 2;
  w[2] = -a * b * d / 2;
  w[3] = a * b * c / 6;
  dw[0] = -(c * d + b * d + b * c) / 6;
  dw[1] = (c * d + a * d + a * c) / 2;
  dw[2] = -(b * d + a * d + a * b) / 2;
  dw[3] = (b * c + a * c + a * b) / 6;
}

}  // namespace

double distortion_exponent(double gamma, double rho1) { return gamma / (gamma + (1.0 - gamma) * rho1 * rho1); }

OracleField solve_distortion(double gamma, const ModelSpec& spec, double eps, const DistortionOptions& opt, double z) {
  if (!(gamma > 0.0)) throw ConfigError("relative risk aversion must be positive");
  if (gamma == 1.0) throw ConfigError("distortion oracle does not cover gamma = 1 (log utility); use gamma != 1");
  if (spec.delta() != 0.0) throw ConfigError("distortion oracle needs the slow channel disabled (delta = 0)");
  if (!(eps > 0.0)) throw ConfigError("distortion oracle needs eps > 0");
  if (opt.nodes < 8 || opt.steps < 1) throw ConfigError("distortion grid too small");

  const double rho1 = spec.correlations().rho1;
  OracleField f;
  f.gamma_ = gamma;
  f.eps_ = eps;
  f.eta_ = std::isnan(opt.eta_override) ? distortion_exponent(gamma, rho1) : opt.eta_override;
  f.z_ = z;
  f.T_ = spec.T();
  f.center_ = spec.y_mean();
  f.half_ = opt.width_sd * spec.y_sd();

  const int n = opt.nodes;
  Eigen::VectorXd xs;
  Eigen::MatrixXd Dx;
  chebyshev(n, xs, Dx);
  f.y_ = f.center_ + f.half_ * xs.array();
  f.D_ = Dx / f.half_;
  f.bary_.resize(n + 1);
  for (int j = 0; j <= n; ++j) f.bary_(j) = (j % 2 ? -1.0 : 1.0) * (j == 0 || j == n ? 0.5 : 1.0);

  // Psi_t + A Psi = 0 with
  //   A = (a^2/2 d_yy + b d_y) / eps + c1 a lambda d_y / sqrt(eps) + c0 lambda^2.
  const double c1 = (1.0 - gamma) / gamma * rho1;
  const double c0 = (1.0 - gamma) / (2.0 * gamma * f.eta_);
  const Eigen::MatrixXd& D = f.D_;
  const Eigen::MatrixXd D2 = D * D;
  Eigen::MatrixXd A(n + 1, n + 1);
  for (int i = 0; i <= n; ++i) {
    const double y = f.y_(i), a = spec.a(y), l = spec.lambda(y, z);
    A.row(i) = (0.5 * a * a * D2.row(i) + spec.b(y) * D.row(i)) / eps + (c1 * a * l / std::sqrt(eps)) * D.row(i);
    A(i, i) += c0 * l * l;
  }

  // Zero flux at both ends: boundary values follow from the interior.
  const int m = n - 1;
  Eigen::Matrix2d Db;
  Db << D(0, 0), D(0, n), D(n, 0), D(n, n);
  Eigen::MatrixXd rhs(2, m);
  rhs.row(0) = -D.row(0).segment(1, m);
  rhs.row(1) = -D.row(n).segment(1, m);
  const Eigen::MatrixXd B = Db.partialPivLu().solve(rhs);
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n + 1, m);
  P.row(0) = B.row(0);
  P.block(1, 0, m, m).setIdentity();
  P.row(n) = B.row(1);
  const Eigen::MatrixXd Aint = A.middleRows(1, m) * P;

  const int M = opt.steps;
  std::vector<std::vector<Eigen::VectorXd>> runs;
  for (int refine : {1, 2, 4}) {
    const int steps = M * refine;
    const double dt = f.T_ / steps;
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(Eigen::MatrixXd::Identity(m, m) - dt * Aint);
    std::vector<Eigen::VectorXd> levels(M + 1);
    Eigen::VectorXd v = Eigen::VectorXd::Ones(m);
    levels[M] = P * v;
    for (int k = steps - 1; k >= 0; --k) {
      v = lu.solve(v);
      if (k % refine == 0) levels[k / refine] = P * v;
    }
    runs.push_back(std::move(levels));
  }
  f.t_.resize(M + 1);
  f.psi_.resize(M + 1);
  for (int k = 0; k <= M; ++k) {
    f.t_[k] = f.T_ * k / M;
    f.psi_[k] = (8.0 * runs[2][k] - 6.0 * runs[1][k] + runs[0][k]) / 3.0;
  }
  for (const auto& lv : f.psi_) {
    if (!(lv.minCoeff() > 0.0)) throw std::runtime_error("distortion solve lost positivity");
  }

  if (opt.validate) {
    const double T = f.T_;
    const double r = f.max_relative_residual({0.0, 0.25 * T, 0.5 * T, 0.75 * T}, 4.0, spec);
    if (!(r <= opt.tolerance)) {
      std::ostringstream os;
      os << "distortion oracle failed HJB residual validation: max relative residual " << r << " > "
         << opt.tolerance;
      throw std::runtime_error(os.str());
    }
  }
  return f;
}

Eigen::VectorXd OracleField::level(double t) const {
  const int M = static_cast<int>(t_.size()) - 1;
  const double h = T_ / M;
  const double s = std::clamp(t / h, 0.0, double(M));
  const int k = std::clamp(static_cast<int>(std::floor(s)) - 1, 0, M - 3);
  double w[4], dw[4];
  lagrange4(s - k, w, dw);
  return w[0] * psi_[k] + w[1] * psi_[k + 1] + w[2] * psi_[k + 2] + w[3] * psi_[k + 3];
}

Eigen::VectorXd OracleField::level_t(double t) const {
  const int M = static_cast<int>(t_.size()) - 1;
  const double h = T_ / M;
  const double s = std::clamp(t / h, 0.0, double(M));
  const int k = std::clamp(static_cast<int>(std::floor(s)) - 1, 0, M - 3);
  double w[4], dw[4];
  lagrange4(s - k, w, dw);
  return (dw[0] * psi_[k] + dw[1] * psi_[k + 1] + dw[2] * psi_[k + 2] + dw[3] * psi_[k + 3]) / h;
}

double OracleField::psi(double t, double y) const { return bary_eval(y_, bary_, level(t), y); }

double OracleField::value(double t, double x, double y) const {
  return std::pow(x, 1.0 - gamma_) / (1.0 - gamma_) * std::pow(psi(t, y), eta_);
}

Derivs OracleField::derivs(double t, double x, double y) const {
  const Eigen::VectorXd p = level(t);
  const Eigen::VectorXd py = D_ * p;
  const Eigen::VectorXd pyy = D_ * py;
  const double s = bary_eval(y_, bary_, p, y);
  const double sy = bary_eval(y_, bary_, py, y);
  const double syy = bary_eval(y_, bary_, pyy, y);
  const double st = bary_eval(y_, bary_, level_t(t), y);
  const double e = eta_;
  const double U = std::pow(x, 1.0 - gamma_) / (1.0 - gamma_);
  const double Ux = std::pow(x, -gamma_);
  const double pe = std::pow(s, e);
  Derivs d;
  d.v = U * pe;
  d.t = U * e * pe / s * st;
  d.y = U * e * pe / s * sy;
  d.yy = U * e * pe * ((e - 1.0) * sy * sy / (s * s) + syy / s);
  d.x = Ux * pe;
  d.xx = -gamma_ * Ux / x * pe;
  d.xy = Ux * e * pe / s * sy;
  return d;
}

double OracleField::max_relative_residual(const std::vector<double>& ts, double inner_sd, const ModelSpec& spec) const {
  double worst = 0.0;
  for (double t : ts) {
    for (Eigen::Index j = 0; j < y_.size(); ++j) {
      const double y = y_(j);
      if (std::abs(y - center_) > inner_sd * spec.y_sd()) continue;
      const Derivs d = derivs(t, 1.0, y);
      const double r = hjb_residual(d, spec, {t, 1.0, y, z_}, eps_, 0.0);
      worst = std::max(worst, std::abs(r / d.v));
    }
  }
  return worst;
}

void OracleField::write_csv(std::ostream& os, const std::vector<double>& xs) const {
  os << "t,x,y,V\n";
  const auto old = os.precision(12);
  for (std::size_t k = 0; k < t_.size(); ++k) {
    for (double x : xs) {
      const double U = std::pow(x, 1.0 - gamma_) / (1.0 - gamma_);
      for (Eigen::Index j = y_.size() - 1; j >= 0; --j)
        os << t_[k] << ',' << x << ',' << y_(j) << ',' << U * std::pow(psi_[k](j), eta_) << '\n';
    }
  }
  os.precision(old);
}

double hjb_residual(const Derivs& v, const ModelSpec& spec, const Point& p, double eps, double delta) {
  if (!(eps > 0.0) || delta < 0.0) throw std::invalid_argument("HJB residual needs eps > 0 and delta >= 0");
  if (!(v.xx < 0.0)) throw ConcavityError("candidate is not concave in wealth (V_xx >= 0)");
  const CorrelationTriple& r = spec.correlations();
  const double a = spec.a(p.y), g = spec.g(p.z), l = spec.lambda(p.y, p.z);
  const double se = std::sqrt(eps), sd = std::sqrt(delta);
  const double lin = v.t + (spec.b(p.y) * v.y + 0.5 * a * a * v.yy) / eps +
                     delta * (spec.c(p.z) * v.z + 0.5 * g * g * v.zz) + sd / se * r.rho12 * a * g * v.yz;
  const double pi = l * v.x + r.rho1 * a * v.xy / se + sd * r.rho2 * g * v.xz;
  return lin - pi * pi / (2.0 * v.xx);
}

double hjb_residual(const ValueSurface& V, const ModelSpec& spec, const Point& p, double eps, double delta) {
  const double ht = 1e-4 * spec.T(), hx = 1e-3 * p.x, hy = 1e-3, hz = 1e-3;
  auto f = [&](double dt, double dx, double dy, double dz) { return V(p.t + dt, p.x + dx, p.y + dy, p.z + dz); };
  Derivs d;
  d.v = f(0, 0, 0, 0);
  if (p.t + ht <= spec.T()) {
    d.t = (f(ht, 0, 0, 0) - f(-ht, 0, 0, 0)) / (2 * ht);
  } else {
    d.t = (3 * d.v - 4 * f(-ht, 0, 0, 0) + f(-2 * ht, 0, 0, 0)) / (2 * ht);
  }
  d.x = (f(0, hx, 0, 0) - f(0, -hx, 0, 0)) / (2 * hx);
  d.xx = (f(0, hx, 0, 0) - 2 * d.v + f(0, -hx, 0, 0)) / (hx * hx);
  d.y = (f(0, 0, hy, 0) - f(0, 0, -hy, 0)) / (2 * hy);
  d.yy = (f(0, 0, hy, 0) - 2 * d.v + f(0, 0, -hy, 0)) / (hy * hy);
  const bool slow = delta > 0.0;
  if (slow) {
    d.z = (f(0, 0, 0, hz) - f(0, 0, 0, -hz)) / (2 * hz);
    d.zz = (f(0, 0, 0, hz) - 2 * d.v + f(0, 0, 0, -hz)) / (hz * hz);
  }
  auto mixed = [&](double ax, double ay, double az, double bx, double by, double bz) {
    return (f(0, ax + bx, ay + by, az + bz) - f(0, ax - bx, ay - by, az - bz) - f(0, -ax + bx, -ay + by, -az + bz) +
            f(0, -ax - bx, -ay - by, -az - bz)) /
           4.0;
  };
  d.xy = mixed(hx, 0, 0, 0, hy, 0) / (hx * hy);
  if (slow) {
    d.xz = mixed(hx, 0, 0, 0, 0, hz) / (hx * hz);
    d.yz = mixed(0, hy, 0, 0, 0, hz) / (hy * hz);
  }
  return hjb_residual(d, spec, p, eps, delta);
}

}  // namespace mm

#pragma once

#include "mm/jet.hpp"
#include "mm/utility.hpp"

#include <Eigen/Core>

#include <functional>
#include <vector>

namespace mm {

/// H-transform of a utility as a function of (xi, s) with s = lambda^2 (T - t):
///   H(xi, s) = E[J(xi + sqrt(s) N)],  J(u) = I(exp(-u)),
/// the solution of H_s = H_xixi / 2 with H(xi, 0) = J(xi).
/// Power, log and inverse-marginal sums have closed forms; mixtures use
/// Gauss-Hermite quadrature over N.
class HeatKernel {
 public:
  explicit HeatKernel(UtilitySpec utility, int gh_nodes = 48);

  const UtilitySpec& utility() const { return u_; }

  /// Jet of H(xi + ., s) of the given order.
  JetD H_jet(double xi, double s, int order) const;
  double H(double xi, double s) const;
  /// Solves H(xi, s) = x for xi.
  double xi_of(double x, double s) const;
  /// Merton value M at wealth x = H(xi, s).
  double m_value(double xi, double s) const;

 private:
  double H_and_slope(double xi, double s, double& slope) const;

  UtilitySpec u_;
  int gh_nodes_;
};

/// Local representation of the Merton field at one (s, x). Every function of x
/// is carried as a jet in xi (x = H(xi, s)) together with its derivative in s
/// at fixed xi. In these coordinates D1 = R d/dx is d/dxi exactly.
struct MertonLocal {
  double s = 0;
  double x = 0;
  double xi = 0;
  SJet H;      // H(xi + ., s)
  SJet Mx;     // M_x = exp(-xi - s/2)
  SJet m;      // M
  SJet Hq;     // H'' / H'
  SJet invHp;  // 1 / H'

  /// Risk tolerance R(t, x) = H'(xi).
  double R() const { return H.re.coeff(1); }
};

/// d/dxi, i.e. the operator D1.
SJet d1(const SJet& f);
/// D2 = R^2 d^2/dx^2 = d^2/dxi^2 - (H''/H') d/dxi.
SJet d2(const SJet& f, const MertonLocal& loc);
/// d/dx = (1/H') d/dxi.
SJet dx(const SJet& f, const MertonLocal& loc);
/// Derivative in s at fixed x. The result carries no s-tangent.
SJet ds_at_x(const SJet& f, const MertonLocal& loc);
/// Value of a carried function at the expansion point.
inline double val(const SJet& f) { return f.re.value(); }

/// Merton value function M(t, x; lambda) for a fixed Sharpe ratio.
class MertonField {
 public:
  MertonField(const HeatKernel& kernel, double lambda_bar, double T, int order = 14);

  double lambda_bar() const { return lambda_; }
  double T() const { return T_; }
  int order() const { return order_; }
  const HeatKernel& kernel() const { return *kernel_; }
  double s_of(double t) const { return lambda_ * lambda_ * (T_ - t); }

  MertonLocal local(double t, double x) const { return local_s(s_of(t), x, order_); }
  MertonLocal local_s(double s, double x, int order) const;

  double value(double t, double x) const;
  double M_x(double t, double x) const;
  double M_xx(double t, double x) const;
  double M_t(double t, double x) const;
  double R(double t, double x) const;

 private:
  const HeatKernel* kernel_;
  double lambda_;
  double T_;
  int order_;
};

/// Closed-form / heat-kernel Merton solve. The kernel must outlive the field.
MertonField solve_merton(const HeatKernel& kernel, double lambda_bar, double T);

enum class DOp { D1, D2, Dx, Dz };

/// Applies a composition of operators to M, rightmost first as in
///   apply_dk(f, {D1, D2}, t, x) = D1 D2 M.
/// Dz differentiates in the slow factor through lambda_bar(z), so it needs
/// lambda_bar'(z); it may appear at most once.
double apply_dk(const MertonField& field, const std::vector<DOp>& ops, double t, double x,
                double lambda_bar_prime = 0.0);

/// M_t - lambda^2 M_x^2 / (2 M_xx) from the field's own derivatives.
double merton_residual(const MertonField& field, double t, double x);

/// Same residual for an arbitrary value surface, with central differences
/// of step h in t and x.
double merton_residual_fd(const std::function<double(double, double)>& M, double lambda_bar, double t, double x,
                          double h = 1e-3);

struct HGrid {
  double xi_min = -12.0;
  double xi_max = 12.0;
  int nx = 1201;
  int nt = 200;
};

/// H on a (t, xi) grid from a Crank-Nicolson solve of H_t + lambda^2 H_xixi / 2 = 0
/// backward from H(T, xi) = I(exp(-xi)). Boundary values from the exponential
/// asymptotics of I at the two ends.
class HField {
 public:
  const Eigen::ArrayXd& xi() const { return xi_; }
  const Eigen::ArrayXd& t() const { return t_; }
  /// Slice at time index n (n = 0 is t = 0, last is t = T).
  Eigen::ArrayXd slice(int n) const { return values_.row(n).transpose(); }
  double value(int n, Eigen::Index j) const { return values_(n, j); }
  /// Piecewise-linear interpolation in xi at time index n.
  double H(int n, double xi) const;
  /// Inverse in xi at time index n.
  double H_inverse(int n, double w) const;
  double lambda_bar() const { return lambda_; }
  double T() const { return T_; }

  friend HField solve_h_transform(const UtilitySpec& u, double lambda_bar, double T, const HGrid& grid);

 private:
  Eigen::ArrayXd xi_;
  Eigen::ArrayXd t_;
  Eigen::ArrayXXd values_;
  double lambda_ = 0;
  double T_ = 0;
};

HField solve_h_transform(const UtilitySpec& u, double lambda_bar, double T, const HGrid& grid = {});

/// max over interior nodes |xi| <= xi_check and all time slices of
/// |M_x(t, H(t, xi)) e^{xi + s/2} - 1| with M_x taken from the heat-kernel field.
double h_defining_relation_error(const HField& field, const HeatKernel& kernel, double xi_check = 4.0);

}  // namespace mm

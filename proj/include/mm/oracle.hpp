#pragma once

#include "mm/subsuper.hpp"

#include <Eigen/Core>

#include <functional>
#include <iosfwd>
#include <limits>
#include <vector>

namespace mm {

struct DistortionOptions {
  int nodes = 64;          // Chebyshev degree in y
  int steps = 200;         // coarsest implicit Euler ladder; Richardson over steps, 2 steps, 4 steps
  double width_sd = 6.0;   // half-width of the y-interval in invariant standard deviations
  bool validate = true;    // HJB residual gate
  double tolerance = 1e-5; // gate on |residual| / |V|
  double eta_override = std::numeric_limits<double>::quiet_NaN();
};

/// Power-utility value function with one fast factor, V = U(x) Psi(t, y)^eta.
class OracleField {
 public:
  double gamma() const { return gamma_; }
  double eps() const { return eps_; }
  double eta() const { return eta_; }
  double z() const { return z_; }
  double T() const { return T_; }
  const Eigen::VectorXd& nodes() const { return y_; }
  const std::vector<double>& times() const { return t_; }

  double psi(double t, double y) const;
  double value(double t, double x, double y) const;
  /// Derivatives of V; y-derivatives spectral, t-derivative by differences of time levels.
  Derivs derivs(double t, double x, double y) const;
  /// Largest |residual| / |V| over nodes within inner_sd standard deviations at the given times.
  double max_relative_residual(const std::vector<double>& ts, double inner_sd, const ModelSpec& spec) const;

  void write_csv(std::ostream& os, const std::vector<double>& xs) const;

  friend OracleField solve_distortion(double gamma, const ModelSpec& spec, double eps, const DistortionOptions& opt,
                                      double z);

 private:
  Eigen::VectorXd level(double t) const;  // Psi at the nodes, time-interpolated
  Eigen::VectorXd level_t(double t) const;

  double gamma_ = 2, eps_ = 0, eta_ = 1, z_ = 0, T_ = 1;
  double center_ = 0, half_ = 1;
  Eigen::VectorXd y_;          // Chebyshev nodes, descending
  Eigen::MatrixXd D_;          // d/dy at the nodes
  Eigen::VectorXd bary_;       // barycentric weights
  std::vector<double> t_;      // time levels
  std::vector<Eigen::VectorXd> psi_;
};

/// Exponent that linearizes the HJB equation under V = U(x) Psi^eta.
double distortion_exponent(double gamma, double rho1);

/// Solves the linear equation for Psi with zero-flux ends and assembles V.
/// Needs delta = 0 and gamma != 1; lambda is frozen at slow level z.
OracleField solve_distortion(double gamma, const ModelSpec& spec, double eps, const DistortionOptions& opt = {},
                             double z = 0.0);

/// HJB residual sup_pi Q^pi[V] from derivatives of a candidate surface.
/// Throws ConcavityError when V_xx >= 0.
double hjb_residual(const Derivs& v, const ModelSpec& spec, const Point& p, double eps, double delta);

using ValueSurface = std::function<double(double t, double x, double y, double z)>;

/// Same residual with derivatives from central differences of the surface.
/// z is not differenced when delta = 0.
double hjb_residual(const ValueSurface& v, const ModelSpec& spec, const Point& p, double eps, double delta);

}  // namespace mm

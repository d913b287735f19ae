#pragma once

#include "mm/model.hpp"

#include <Eigen/Core>

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <mutex>

namespace mm {

/// Invariant law of the fast factor, Phi(y) proportional to a(y)^{-2} exp(int 2b/a^2),
/// on the truncated working support.
class InvariantDensity {
 public:
  double mean() const { return mean_; }
  double sd() const { return sd_; }
  bool gaussian() const { return gaussian_; }
  const Box& support() const { return support_; }
  double density(double y) const;
  double log_density(double y) const;

  /// Composite 8-point Gauss-Legendre panels of width `panel` sd over the support.
  int panel_count() const { return panels_; }
  double average_panels(const std::function<double(double)>& f) const;
  /// Mass of the normalized density over the support under the panel rule.
  double mass() const;

  friend InvariantDensity invariant_density(const ModelSpec& spec, int panels);

 private:
  double mean_ = 0, sd_ = 1;
  bool gaussian_ = true;
  Box support_;
  int panels_ = 800;
  double log_norm_ = 0;
  const ModelSpec* spec_ = nullptr;
};

InvariantDensity invariant_density(const ModelSpec& spec, int panels = 800);

struct AverageResult {
  double value = 0;
  double error_estimate = 0;
  int nodes = 0;
};

/// <f> by Gauss-Hermite node doubling (Gaussian law) until the relative change
/// is below 1e-10; falls back to panel doubling otherwise. Throws on
/// non-convergence.
AverageResult average(const std::function<double(double)>& f, const InvariantDensity& density);

/// Centered solution of L_y theta = rhs - <rhs>, L_y = b d/dy + a^2/2 d^2/dy^2,
/// stored at uniform nodes with (theta, theta', theta'') and interpolated by
/// quintic Hermite pieces. theta'' at any point comes from the equation itself.
class PoissonSolution {
 public:
  bool zero() const { return zero_; }
  double rhs_mean() const { return rhs_mean_; }
  double value(double y) const;
  double dy(double y) const;
  double dyy(double y) const;
  double rhs(double y) const { return rhs_(y); }

  const Eigen::ArrayXd& nodes() const { return y_; }
  const Eigen::ArrayXd& node_values() const { return v_; }
  /// max |theta| over the support.
  double sup() const;

  friend PoissonSolution solve_poisson(std::function<double(double)> rhs, const InvariantDensity& density,
                                       const ModelSpec& spec);

 private:
  void locate(double y, Eigen::Index& k, double& t) const;

  bool zero_ = false;
  double rhs_mean_ = 0;
  std::function<double(double)> rhs_;
  Eigen::ArrayXd y_, v_, d1_, d2_;
  double h_ = 0;
  const ModelSpec* spec_ = nullptr;
};

/// The spec must outlive the returned solution.
PoissonSolution solve_poisson(std::function<double(double)> rhs, const InvariantDensity& density,
                              const ModelSpec& spec);

/// Fast-factor averages and centered Poisson solutions at one slow-factor level z.
struct ThetaBundle {
  double z = 0;
  double lambda_bar = 0, lambda_hat = 0;
  double lambda_bar_p = 0, lambda_bar_pp = 0, lambda_hat_p = 0;
  double B = 0, B1 = 0;
  /// dB/dz = <lambda_z a theta'> + <lambda a theta_yz>.
  double B_p = 0;
  /// theta[0] = theta, theta[i] = theta_i for i = 1..11.
  std::array<std::shared_ptr<const PoissonSolution>, 12> theta;
  /// d/dz of theta'(y) (from neighbouring slow levels).
  std::function<double(double)> theta_yz;

  double avg_theta_lambda2 = 0;  // <theta lambda^2>
  double avg_theta = 0;          // <theta>
  double avg_a2_theta_y2 = 0;    // <a^2 theta_y^2>
  double avg_a_lambda_theta2_y = 0;
  double avg_theta_y = 0;
  double avg_theta_yz = 0;
  double avg_a_theta_yz = 0;
  double avg_a_theta_y = 0;

  const PoissonSolution& th(int i) const { return *theta[i]; }
};

/// Lazily built bundles on the slow-factor lattice z_c + k h. Bundles need
/// theta at k +- 1, +- 2 for the y-z cross derivative; those lighter solves
/// are cached separately. Thread safe.
class ThetaLattice {
 public:
  ThetaLattice(const ModelSpec& spec, double z_center, double h = 5e-3);

  double z(int k) const { return zc_ + k * h_; }
  double h() const { return h_; }
  const InvariantDensity& density() const { return density_; }
  const ModelSpec& spec() const { return *spec_; }

  const ThetaBundle& bundle(int k) const;
  const PoissonSolution& theta(int k) const;

  /// 5-point central z-derivative of a bundle scalar.
  double dz(const std::function<double(const ThetaBundle&)>& f) const;

 private:
  const ModelSpec* spec_;
  double zc_;
  double h_;
  InvariantDensity density_;
  mutable std::recursive_mutex mu_;
  mutable std::map<int, std::shared_ptr<const PoissonSolution>> light_;
  mutable std::map<int, std::unique_ptr<ThetaBundle>> bundles_;
};

/// theta family at a single z. The spec must outlive the bundle.
ThetaBundle theta_family(const ModelSpec& spec, double z);

}  // namespace mm

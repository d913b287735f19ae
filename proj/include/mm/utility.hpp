#pragma once

#include "mm/jet.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace mm {

enum class UtilityFamily { Power, Log, Mixture, InverseMarginalSum };

/// Parameters as read from the `[utility]` table.
///   power:                 gamma
///   log:                   (none)
///   mixture:               U = sum_i w_i x^{1-g_i} / (1-g_i)   (weights, gammas)
///   inverse_marginal_sum:  I(y) = sum_i w_i y^{-1/g_i}          (weights, gammas)
struct UtilityConfig {
  std::string family = "power";
  double gamma = 2.0;
  std::vector<double> weights;
  std::vector<double> gammas;
};

struct UtilityValues {
  double U = 0, Up = 0, Upp = 0, R = 0, Rp = 0, I_of_Up = 0;
};

/// Utility function with evaluators for U, U', U'', R = -U'/U'', R' and I = (U')^{-1}.
///
/// Internally every family is described through J(u) = I(e^{-u}): x = J(u)
/// is the wealth at which marginal utility equals e^{-u}. Then R(x) = J'(u)
/// and d/dx = (1/J'(u)) d/du, which gives all derivatives of R as jets.
class UtilitySpec {
 public:
  UtilityFamily family() const { return family_; }
  const std::string& name() const { return name_; }

  /// (weight, gamma) pairs: mixture terms, or inverse-marginal terms
  /// (power and log are the single-term inverse-marginal case).
  const std::vector<double>& weights() const { return w_; }
  const std::vector<double>& gammas() const { return g_; }

  /// Power, log and inverse-marginal sums have closed-form J as a sum of exponentials.
  bool exponential_j() const { return family_ != UtilityFamily::Mixture; }

  double U(double x) const;
  double Up(double x) const;
  double Upp(double x) const;
  double I(double y) const;
  /// U(I(y)), which is well defined for every family without solving for x.
  double U_of_I(double y) const;
  /// u = -log U'(x).
  double u_of_x(double x) const { return -std::log(Up(x)); }

  /// Taylor jet of J(u) = I(e^{-u}) around u.
  JetD J_jet(double u, int order) const;

  double R(double x) const;
  double Rp(double x) const;
  /// d^i/dx^i of R(x)^i.
  double d_R_power(double x, int i) const;

  UtilityValues eval(double x) const;

  friend UtilitySpec make_utility(const UtilityConfig& config);

 private:
  UtilitySpec() = default;

  UtilityFamily family_ = UtilityFamily::Power;
  std::string name_;
  std::vector<double> w_;
  std::vector<double> g_;
};

UtilitySpec make_utility(const UtilityConfig& config);

/// (U, U', U'', R, R', I(U'(x))) at x > 0.
inline UtilityValues eval_utility(const UtilitySpec& spec, double x) { return spec.eval(x); }

struct AssumptionReport {
  bool increasing = false;
  bool concave = false;
  bool inada_zero = false;
  bool inada_infinity = false;
  bool risk_tolerance_increasing = false;
  bool risk_tolerance_vanishes = false;
  double max_roundtrip_error = 0;
  bool roundtrip = false;
  /// sup over the grid of |d^i R^i / dx^i| for i = 2..7 (entry i-2).
  std::vector<double> dr_sups;
  bool dr_finite = false;
  /// x U'(x) / U(x) at the largest probe wealth.
  double ae_proxy = 0;
  /// Fitted alpha in I(y) ~ y^{-alpha} as y -> 0.
  double growth_exponent = 0;
  bool pass() const {
    return increasing && concave && inada_zero && inada_infinity && risk_tolerance_increasing &&
           risk_tolerance_vanishes && roundtrip && dr_finite;
  }
};

/// Default probe grid: 61 log-spaced points on [1e-3, 1e3].
Eigen::ArrayXd default_probe_grid();

AssumptionReport check_assumption_u(const UtilitySpec& spec, const Eigen::ArrayXd& grid);

}  // namespace mm

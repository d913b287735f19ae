#pragma once

#include "mm/expansion.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <vector>

namespace mm {

enum class WealthScheme {
  Auto,        // log coordinates for the zeroth-order strategy, arithmetic otherwise
  Log,
  Arithmetic,
};

struct SimConfig {
  std::size_t paths = 10000;
  int steps = 200;
  std::uint64_t seed = 1;
  bool antithetic = false;
  double x0 = 1.0, y0 = 0.0, z0 = 0.0;
  WealthScheme scheme = WealthScheme::Auto;
  /// Paths (from the start) on which the admissibility integrals are accumulated.
  std::size_t proxy_paths = 256;
};

struct PathStats {
  std::vector<double> terminal_wealth;  // antithetic partner follows its original
  std::size_t paths = 0;
  int steps = 0;
  std::uint64_t seed = 0;
  bool antithetic = false;
  bool implicit_fast = false;
  std::size_t positivity_violations = 0;
  double max_second_moment = 0;  // max over time of the sample mean of X_t^2
  double proxy_wealth_vol = 0;   // sample mean of int (pi sigma v0_x)^2 dt
  double proxy_d1v0 = 0;         // sample mean of int (D1 v0)^2 dt
  std::size_t proxy_samples = 0;
};

struct ValueEstimate {
  double mean = 0;
  double std_error = 0;
  double half_width = 0;  // 95% normal interval
  std::size_t samples = 0;  // independent samples (pairs when antithetic)
  double q05 = 0, q50 = 0, q95 = 0;
};

/// Cholesky factor of the (W, W^Y, W^Z) correlation matrix.
Eigen::Matrix3d correlation_factor(const CorrelationTriple& rho);

/// lambdabar(z) and the risk tolerance R(t, x; lambdabar(z)) in a form
/// cheap enough for path simulation. Single power terms are closed form;
/// other families go through an (s, log x) table.
class MertonEvaluator {
 public:
  explicit MertonEvaluator(const Expansion& e);

  double lambda_bar(double z) const;
  double R(double t, double x, double z) const;
  /// v0_x = M_x(t, x; lambdabar(z)).
  double v0_x(double t, double x, double z) const;

 private:
  bool in_table(double s, double u) const;
  double table(const std::vector<double>& f, const std::vector<double>& fu, double s, double u) const;

  const Expansion* e_;
  double T_;
  bool z_free_ = false;
  double lb_const_ = 0;
  double z_lo_ = 0, z_h_ = 1;
  std::vector<double> lb_, lbp_;
  bool single_ = false;  // one power term: R = x / gamma
  double gamma_ = 1;
  double s_max_ = 0, u_lo_ = 0, u_hi_ = 0, ds_ = 1, du_ = 1;
  // R / x and the heat-kernel coordinate with their log-wealth slopes, row-major in (s, log x).
  std::vector<double> r_, r_u_, xi_, xi_u_;
};

/// pi0 = lambda(y, z) / sigma(y, z) * R(t, x; lambdabar(z)).
StrategyField pi0_strategy(const Expansion& e, std::shared_ptr<const MertonEvaluator> m = nullptr);

/// Euler-Maruyama paths of (X, Y, Z) under a Markov strategy. Deterministic
/// for a given seed: path i draws from its own stream keyed by (seed, i).
/// With a non-null evaluator the admissibility integrals are accumulated.
PathStats simulate_paths(const ModelSpec& spec, const StrategyField& strategy, const SimConfig& cfg,
                         const MertonEvaluator* merton = nullptr);

/// Sample mean of U(X_T) with a normal 95% interval. Throws
/// std::invalid_argument below 30 independent samples.
ValueEstimate estimate_value(const PathStats& stats, const UtilitySpec& utility);

}  // namespace mm

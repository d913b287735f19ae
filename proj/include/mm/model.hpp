#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace mm {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CorrelationTriple {
  double rho1 = 0.0;
  double rho2 = 0.0;
  double rho12 = 0.0;
};

struct ValidityReport {
  double proxy = 0.0;
  bool pass = false;
};

/// Positive-definiteness check of the 3x3 Brownian correlation matrix.
ValidityReport validate_correlations(const CorrelationTriple& t);

enum class CatalogId { OuTanh, Constant, OuLinear };

/// Parameters as read from the `[model]` table. Unknown family parameters
/// are rejected at instantiation.
struct ModelConfig {
  std::string catalog = "ou_tanh";
  CorrelationTriple correlations;
  double eps = 0.01;
  double delta = 0.01;
  double T = 1.0;
  std::map<std::string, double> params;
};

/// Coefficient values and partials at one (y, z).
struct CoefficientValues {
  double mu = 0, sigma = 0, lambda = 0;
  double b = 0, a = 0, c = 0, g = 0;
  double lambda_y = 0, lambda_z = 0, lambda_yy = 0, lambda_zz = 0, lambda_yz = 0;
  double sigma_y = 0;
  double b_y = 0, a_y = 0, c_z = 0, g_z = 0;
};

struct Box {
  double lo = 0;
  double hi = 0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Immutable, validated multiscale factor model.
class ModelSpec {
 public:
  CatalogId catalog() const { return catalog_; }
  const std::string& catalog_name() const { return catalog_name_; }
  const CorrelationTriple& correlations() const { return corr_; }
  double eps() const { return eps_; }
  double delta() const { return delta_; }
  double T() const { return T_; }

  /// Working domain, +-8 invariant standard deviations by default.
  const Box& y_domain() const { return ybox_; }
  const Box& z_domain() const { return zbox_; }

  /// Invariant mean and standard deviation of the fast and slow factors.
  double y_mean() const { return m_y_; }
  double y_sd() const { return a_ / std::sqrt(2.0 * kappa_y_); }
  double z_mean() const { return m_z_; }
  double z_sd() const;

  /// Coefficients with a domain check.
  CoefficientValues eval(double y, double z) const;
  /// Coefficients without a domain check (simulation paths may leave the box).
  CoefficientValues eval_unchecked(double y, double z) const;

  double lambda(double y, double z) const;
  double lambda_z(double y, double z) const;
  double lambda_zz(double y, double z) const;
  double sigma(double y, double z) const;
  double b(double y) const { return kappa_y_ * (m_y_ - y); }
  double a(double) const { return a_; }
  double c(double z) const { return kappa_z_ * (m_z_ - z); }
  double g(double) const { return g_; }

  /// True when lambda does not depend on y (the fast factor drops out).
  bool lambda_y_free() const;
  /// True when lambda does not depend on z.
  bool lambda_z_free() const;

  /// Copy with different scales (eps, delta).
  ModelSpec with_scales(double eps, double delta) const;

  friend ModelSpec instantiate_model(const ModelConfig& config);

 private:
  ModelSpec() = default;

  CatalogId catalog_ = CatalogId::OuTanh;
  std::string catalog_name_;
  CorrelationTriple corr_;
  double eps_ = 0, delta_ = 0, T_ = 1;
  double kappa_y_ = 1, m_y_ = 0, a_ = std::sqrt(2.0);
  double kappa_z_ = 1, m_z_ = 0, g_ = 1;
  double lambda0_ = 0, lambda_y_ = 0, lambda_zc_ = 0;
  double sigma0_ = 1, sigma_yc_ = 0;
  Box ybox_, zbox_;
};

/// Builds a ModelSpec from the catalog and validates it: correlations,
/// scales, boundedness of lambda, and analytic partials against central
/// finite differences on a probe grid.
ModelSpec instantiate_model(const ModelConfig& config);

inline CoefficientValues eval_coefficients(const ModelSpec& spec, double y, double z) { return spec.eval(y, z); }

}  // namespace mm

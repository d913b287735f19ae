#include "mm/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace mm {

ValidityReport validate_correlations(const CorrelationTriple& t) {
  ValidityReport r;
  r.proxy = 1.0 + 2.0 * t.rho1 * t.rho2 * t.rho12 - t.rho1 * t.rho1 - t.rho2 * t.rho2 - t.rho12 * t.rho12;
  r.pass = std::abs(t.rho1) < 1.0 && std::abs(t.rho2) < 1.0 && std::abs(t.rho12) < 1.0 && r.proxy > 0.0;
  return r;
}

namespace {

double sech2(double v) {
  const double c = std::cosh(v);
  return 1.0 / (c * c);
}

double take(std::map<std::string, double>& params, const std::string& key, double fallback) {
  auto it = params.find(key);
  if (it == params.end()) return fallback;
  const double v = it->second;
  params.erase(it);
  return v;
}

}  // namespace

double ModelSpec::z_sd() const { return kappa_z_ > 0.0 ? g_ / std::sqrt(2.0 * kappa_z_) : std::max(g_, 1.0); }

double ModelSpec::lambda(double y, double z) const {
  switch (catalog_) {
    case CatalogId::OuTanh:
      return lambda0_ + lambda_zc_ * std::tanh(z) + lambda_y_ * std::tanh(y);
    case CatalogId::OuLinear:
      return lambda0_ + lambda_y_ * y;
    case CatalogId::Constant:
      return lambda0_;
  }
  return 0.0;
}

double ModelSpec::lambda_z(double, double z) const {
  return catalog_ == CatalogId::OuTanh ? lambda_zc_ * sech2(z) : 0.0;
}

double ModelSpec::lambda_zz(double, double z) const {
  return catalog_ == CatalogId::OuTanh ? -2.0 * lambda_zc_ * sech2(z) * std::tanh(z) : 0.0;
}

double ModelSpec::sigma(double y, double) const {
  return catalog_ == CatalogId::OuTanh ? sigma0_ * std::exp(sigma_yc_ * std::tanh(y)) : sigma0_;
}

bool ModelSpec::lambda_y_free() const { return catalog_ == CatalogId::Constant || lambda_y_ == 0.0; }
bool ModelSpec::lambda_z_free() const { return catalog_ != CatalogId::OuTanh || lambda_zc_ == 0.0; }

CoefficientValues ModelSpec::eval_unchecked(double y, double z) const {
  CoefficientValues v;
  v.lambda = lambda(y, z);
  v.sigma = sigma(y, z);
  v.mu = v.lambda * v.sigma;
  v.b = b(y);
  v.a = a(y);
  v.c = c(z);
  v.g = g(z);
  v.b_y = -kappa_y_;
  v.c_z = -kappa_z_;
  switch (catalog_) {
    case CatalogId::OuTanh:
      v.lambda_y = lambda_y_ * sech2(y);
      v.lambda_yy = -2.0 * lambda_y_ * sech2(y) * std::tanh(y);
      v.lambda_z = lambda_z(y, z);
      v.lambda_zz = lambda_zz(y, z);
      v.sigma_y = v.sigma * sigma_yc_ * sech2(y);
      break;
    case CatalogId::OuLinear:
      v.lambda_y = lambda_y_;
      break;
    case CatalogId::Constant:
      break;
  }
  return v;
}

CoefficientValues ModelSpec::eval(double y, double z) const {
  if (!ybox_.contains(y) || !zbox_.contains(z)) {
    std::ostringstream os;
    os << "point (y=" << y << ", z=" << z << ") outside the working domain";
    throw DomainError(os.str());
  }
  return eval_unchecked(y, z);
}

ModelSpec ModelSpec::with_scales(double eps, double delta) const {
  if (!(eps > 0.0) || !(delta >= 0.0)) throw ConfigError("scales must satisfy eps > 0, delta >= 0");
  ModelSpec s = *this;
  s.eps_ = eps;
  s.delta_ = delta;
  return s;
}

namespace {

void check_partials(const ModelSpec& spec) {
  // 50-point probe grid over the working box; analytic partials against
  // 4th-order central differences.
  const int n = 50;
  const Box& yb = spec.y_domain();
  const Box& zb = spec.z_domain();
  auto close = [](double analytic, double fd) {
    return std::abs(analytic - fd) <= 1e-6 * std::max(1.0, std::abs(analytic));
  };
  auto d1 = [](const std::function<double(double)>& f, double x) {
    const double h = 1e-3 * std::max(1.0, std::abs(x));
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h);
  };
  for (int i = 0; i < n; ++i) {
    const double s = (i + 0.5) / n;
    const double y = yb.lo + s * (yb.hi - yb.lo);
    const double z = zb.lo + (1.0 - s) * (zb.hi - zb.lo);
    const CoefficientValues v = spec.eval(y, z);
    const bool ok =
        close(v.lambda_y, d1([&](double u) { return spec.lambda(u, z); }, y)) &&
        close(v.lambda_z, d1([&](double u) { return spec.lambda(y, u); }, z)) &&
        close(v.lambda_yy, d1([&](double u) { return spec.eval_unchecked(u, z).lambda_y; }, y)) &&
        close(v.lambda_zz, d1([&](double u) { return spec.lambda_z(y, u); }, z)) &&
        close(v.sigma_y, d1([&](double u) { return spec.sigma(u, z); }, y)) &&
        close(v.b_y, d1([&](double u) { return spec.b(u); }, y)) &&
        close(v.c_z, d1([&](double u) { return spec.c(u); }, z));
    if (!ok) throw ConfigError("analytic coefficient partials disagree with finite differences");
    if (!(v.sigma > 0.0) || !(v.a > 0.0)) throw ConfigError("sigma and a must be positive on the working domain");
    if (std::abs(v.lambda - v.mu / v.sigma) > 1e-14 * std::max(1.0, std::abs(v.lambda)))
      throw ConfigError("lambda != mu / sigma");
  }
}

}  // namespace

ModelSpec instantiate_model(const ModelConfig& config) {
  ModelSpec s;
  s.catalog_name_ = config.catalog;
  if (config.catalog == "ou_tanh")
    s.catalog_ = CatalogId::OuTanh;
  else if (config.catalog == "constant")
    s.catalog_ = CatalogId::Constant;
  else if (config.catalog == "ou_linear")
    s.catalog_ = CatalogId::OuLinear;
  else
    throw ConfigError("unknown model catalog '" + config.catalog + "'");

  const ValidityReport vr = validate_correlations(config.correlations);
  if (!vr.pass) {
    std::ostringstream os;
    os << "invalid correlations (determinant proxy " << vr.proxy << ")";
    throw ConfigError(os.str());
  }
  s.corr_ = config.correlations;
  if (!(config.eps > 0.0)) throw ConfigError("eps must be positive");
  if (!(config.delta >= 0.0)) throw ConfigError("delta must be non-negative");
  if (!(config.T > 0.0)) throw ConfigError("T must be positive");
  s.eps_ = config.eps;
  s.delta_ = config.delta;
  s.T_ = config.T;

  std::map<std::string, double> p = config.params;
  s.kappa_y_ = take(p, "kappa_y", 1.0);
  s.m_y_ = take(p, "m_y", 0.0);
  s.a_ = take(p, "nu_y", std::sqrt(2.0));
  s.kappa_z_ = take(p, "kappa_z", 1.0);
  s.m_z_ = take(p, "m_z", 0.0);
  s.g_ = take(p, "nu_z", 1.0);
  const double width = take(p, "domain_sd", 8.0);
  if (!(s.kappa_y_ > 0.0)) throw ConfigError("kappa_y must be positive (fast factor must be ergodic)");
  if (!(s.kappa_z_ >= 0.0)) throw ConfigError("kappa_z must be non-negative");
  if (!(s.a_ > 0.0) || !(s.g_ > 0.0)) throw ConfigError("factor volatilities must be positive");
  if (!(width > 0.0)) throw ConfigError("domain_sd must be positive");

  switch (s.catalog_) {
    case CatalogId::OuTanh:
      s.lambda0_ = take(p, "lambda0", 0.3);
      s.lambda_y_ = take(p, "lambda_y", 0.2);
      s.lambda_zc_ = take(p, "lambda_z", 0.0);
      s.sigma0_ = take(p, "sigma0", 0.2);
      s.sigma_yc_ = take(p, "sigma_y", 0.0);
      break;
    case CatalogId::Constant: {
      const double mu = take(p, "mu", 0.25);
      s.sigma0_ = take(p, "sigma", 0.5);
      if (!(s.sigma0_ > 0.0)) throw ConfigError("sigma must be positive");
      s.lambda0_ = mu / s.sigma0_;
      break;
    }
    case CatalogId::OuLinear:
      s.lambda0_ = take(p, "lambda0", 0.3);
      s.lambda_y_ = take(p, "lambda_y", 1.0);
      s.sigma0_ = take(p, "sigma0", 0.2);
      if (s.lambda_y_ != 0.0) throw ConfigError("lambda linear in y is unbounded on the real line");
      break;
  }
  if (!p.empty()) throw ConfigError("unknown model parameter '" + p.begin()->first + "'");
  if (!(s.sigma0_ > 0.0)) throw ConfigError("sigma0 must be positive");

  s.ybox_ = {s.m_y_ - width * s.y_sd(), s.m_y_ + width * s.y_sd()};
  s.zbox_ = {s.m_z_ - width * s.z_sd(), s.m_z_ + width * s.z_sd()};
  check_partials(s);
  return s;
}

}  // namespace mm

#include "mm/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace mm {
namespace {

// Golub-Welsch for the nodes, then Newton polishing on the orthonormal
// recurrence and Christoffel weights 1 / sum_k p_k(x)^2.
template <typename Offdiag, typename Recur>
QuadratureRule golub_welsch(int n, Offdiag offdiag, Recur orthonormal_values) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k + 1 < n; ++k) {
    jacobi(k, k + 1) = offdiag(k);
    jacobi(k + 1, k) = offdiag(k);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi, Eigen::EigenvaluesOnly);
  QuadratureRule rule;
  rule.nodes = es.eigenvalues().array();
  rule.weights.resize(n);
  Eigen::ArrayXd p(n + 1);
  for (int i = 0; i < n; ++i) {
    double x = rule.nodes(i);
    for (int it = 0; it < 3; ++it) {
      orthonormal_values(x, p);
      const double h = 1e-7 * std::max(1.0, std::abs(x));
      Eigen::ArrayXd q(n + 1);
      orthonormal_values(x + h, q);
      const double deriv = (q(n) - p(n)) / h;
      if (deriv == 0.0) break;
      const double step = p(n) / deriv;
      x -= step;
      if (std::abs(step) < 1e-15 * std::max(1.0, std::abs(x))) break;
    }
    rule.nodes(i) = x;
    orthonormal_values(x, p);
    rule.weights(i) = 1.0 / p.head(n).square().sum();
  }
  return rule;
}

QuadratureRule make_hermite(int n) {
  auto off = [](int k) { return std::sqrt(0.5 * (k + 1)); };
  auto values = [n](double x, Eigen::ArrayXd& p) {
    p(0) = std::pow(M_PI, -0.25);
    if (n >= 1) p(1) = std::sqrt(2.0) * x * p(0);
    for (int k = 1; k < n; ++k)
      p(k + 1) = x * std::sqrt(2.0 / (k + 1)) * p(k) - std::sqrt(static_cast<double>(k) / (k + 1)) * p(k - 1);
  };
  return golub_welsch(n, off, values);
}

QuadratureRule make_legendre(int n) {
  auto off = [](int k) {
    const double kk = k + 1.0;
    return kk / std::sqrt((2.0 * kk - 1.0) * (2.0 * kk + 1.0));
  };
  auto values = [n, off](double x, Eigen::ArrayXd& p) {
    p(0) = std::sqrt(0.5);
    if (n >= 1) p(1) = x * p(0) / off(0);
    for (int k = 1; k < n; ++k) p(k + 1) = (x * p(k) - off(k - 1) * p(k - 1)) / off(k);
  };
  return golub_welsch(n, off, values);
}

template <typename Make>
const QuadratureRule& cached(std::map<int, std::unique_ptr<QuadratureRule>>& cache, std::mutex& mu, int n,
                             Make make) {
  if (n < 1) throw std::invalid_argument("quadrature order must be positive");
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<QuadratureRule>(make(n));
  return *slot;
}

}  // namespace

const QuadratureRule& gauss_hermite(int n) {
  static std::map<int, std::unique_ptr<QuadratureRule>> cache;
  static std::mutex mu;
  return cached(cache, mu, n, make_hermite);
}

const QuadratureRule& gauss_legendre(int n) {
  static std::map<int, std::unique_ptr<QuadratureRule>> cache;
  static std::mutex mu;
  return cached(cache, mu, n, make_legendre);
}

}  // namespace mm

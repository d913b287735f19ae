#pragma once

#include <Eigen/Core>

namespace mm {

/// Nodes and weights of an interpolatory rule.
struct QuadratureRule {
  Eigen::ArrayXd nodes;
  Eigen::ArrayXd weights;
};

/// Gauss-Hermite rule for the weight exp(-x^2) on the real line.
const QuadratureRule& gauss_hermite(int n);

/// Gauss-Legendre rule on [-1, 1].
const QuadratureRule& gauss_legendre(int n);

/// Expectation E[f(N)] for N ~ Normal(mean, sd^2) with an n-point Gauss-Hermite rule.
template <typename F>
double gaussian_expectation(F&& f, double mean, double sd, int n) {
  const QuadratureRule& q = gauss_hermite(n);
  constexpr double kInvSqrtPi = 0.56418958354775628695;
  const double scale = 1.4142135623730950488 * sd;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < q.nodes.size(); ++i) acc += q.weights(i) * f(mean + scale * q.nodes(i));
  return acc * kInvSqrtPi;
}

/// Integral of f over [lo, hi] with an n-point Gauss-Legendre rule.
template <typename F>
double integrate_gl(F&& f, double lo, double hi, int n = 8) {
  const QuadratureRule& q = gauss_legendre(n);
  const double half = 0.5 * (hi - lo);
  const double mid = 0.5 * (hi + lo);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < q.nodes.size(); ++i) acc += q.weights(i) * f(mid + half * q.nodes(i));
  return acc * half;
}

}  // namespace mm

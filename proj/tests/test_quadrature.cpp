#include "mm/quadrature.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mm;

TEST(GaussHermite, WeightsSumToSqrtPi) {
  for (int n : {1, 5, 20, 64, 160}) {
    const auto& q = gauss_hermite(n);
    EXPECT_NEAR(q.weights.sum(), std::sqrt(M_PI), 1e-13) << n;
  }
}

TEST(GaussHermite, GaussianMoments) {
  auto m2 = gaussian_expectation([](double y) { return y * y; }, 0.0, 1.0, 20);
  auto m4 = gaussian_expectation([](double y) { return y * y * y * y; }, 0.0, 1.0, 20);
  EXPECT_NEAR(m2, 1.0, 1e-13);
  EXPECT_NEAR(m4, 3.0, 1e-12);
  EXPECT_NEAR(gaussian_expectation([](double y) { return y; }, 1.5, 2.0, 10), 1.5, 1e-13);
}

TEST(GaussHermite, CosineMoment) {
  // E[cos(N)] = exp(-1/2) for standard normal N.
  EXPECT_NEAR(gaussian_expectation([](double y) { return std::cos(y); }, 0.0, 1.0, 40), std::exp(-0.5), 1e-14);
}

TEST(GaussLegendre, ExactForPolynomials) {
  for (int n : {2, 8, 30}) {
    const auto& q = gauss_legendre(n);
    EXPECT_NEAR(q.weights.sum(), 2.0, 1e-14);
    for (int d = 0; d < 2 * n; ++d) {
      const double exact = d % 2 ? 0.0 : 2.0 / (d + 1);
      EXPECT_NEAR(integrate_gl([d](double x) { return std::pow(x, d); }, -1.0, 1.0, n), exact, 1e-13) << n << " " << d;
    }
  }
}

TEST(GaussLegendre, ExpIntegral) {
  EXPECT_NEAR(integrate_gl([](double x) { return std::exp(x); }, 0.0, 2.0, 16), std::exp(2.0) - 1.0, 1e-13);
}

TEST(Quadrature, RejectsNonPositiveOrder) { EXPECT_THROW(gauss_hermite(0), std::invalid_argument); }

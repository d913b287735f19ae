#pragma once

// Truncated Taylor arithmetic in one variable.
//
// A Jet stores normalized coefficients c_k = f^{(k)}(x0) / k! for k = 0..order.
// Binary operations truncate to the smaller order, so the stored order is
// always the number of derivatives that are actually known. Taking a
// derivative drops one order; asking for a coefficient past the known order
// throws, which is how the D_k algebra reports an exhausted derivative budget.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mm {

class DerivativeBudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
class Jet {
 public:
  using Coeffs = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Jet() = default;
  explicit Jet(Coeffs c) : c_(std::move(c)) {}

  static Jet constant(Scalar v, int order) {
    Coeffs c = Coeffs::Zero(order + 1);
    c(0) = v;
    return Jet(std::move(c));
  }

  /// Builds a jet from plain derivatives d[k] = f^{(k)}(x0).
  template <typename Derivs>
  static Jet from_derivatives(const Derivs& d, int order) {
    Coeffs c(order + 1);
    Scalar fact = Scalar(1);
    for (int k = 0; k <= order; ++k) {
      if (k > 0) fact *= Scalar(k);
      c(k) = d[k] / fact;
    }
    return Jet(std::move(c));
  }

  /// Order of the highest known coefficient; -1 for an empty jet.
  int order() const { return static_cast<int>(c_.size()) - 1; }
  bool empty() const { return c_.size() == 0; }
  const Coeffs& coeffs() const { return c_; }

  Scalar coeff(int k) const {
    if (k > order()) throw DerivativeBudgetError("jet coefficient beyond known order");
    return c_(k);
  }
  Scalar value() const { return coeff(0); }

  /// k-th derivative at the expansion point.
  Scalar derivative(int k) const {
    Scalar f = coeff(k);
    for (int j = 2; j <= k; ++j) f *= Scalar(j);
    return f;
  }

  Jet derivative() const {
    if (order() < 1) return Jet(Coeffs(0));
    Coeffs d(order());
    for (int k = 0; k < order(); ++k) d(k) = Scalar(k + 1) * c_(k + 1);
    return Jet(std::move(d));
  }

  Jet integral(Scalar c0) const {
    Coeffs r(c_.size() + 1);
    r(0) = c0;
    for (int k = 0; k < c_.size(); ++k) r(k + 1) = c_(k) / Scalar(k + 1);
    return Jet(std::move(r));
  }

  Jet truncated(int order) const {
    const int n = std::min<int>(order + 1, static_cast<int>(c_.size()));
    return Jet(c_.head(n));
  }

  Jet operator-() const { return Jet(-c_); }

  Jet& operator+=(const Jet& o) { return *this = *this + o; }
  Jet& operator-=(const Jet& o) { return *this = *this - o; }
  Jet& operator*=(Scalar s) {
    c_ *= s;
    return *this;
  }

  friend Jet operator+(const Jet& a, const Jet& b) {
    const auto n = std::min(a.c_.size(), b.c_.size());
    return Jet(a.c_.head(n) + b.c_.head(n));
  }
  friend Jet operator-(const Jet& a, const Jet& b) {
    const auto n = std::min(a.c_.size(), b.c_.size());
    return Jet(a.c_.head(n) - b.c_.head(n));
  }
  friend Jet operator*(const Jet& a, const Jet& b) {
    const auto n = std::min(a.c_.size(), b.c_.size());
    Coeffs r = Coeffs::Zero(n);
    for (Eigen::Index k = 0; k < n; ++k)
      for (Eigen::Index j = 0; j <= k; ++j) r(k) += a.c_(j) * b.c_(k - j);
    return Jet(std::move(r));
  }
  friend Jet operator/(const Jet& a, const Jet& b) { return a * reciprocal(b); }

  friend Jet operator+(const Jet& a, Scalar s) {
    Jet r = a;
    if (r.c_.size() > 0) r.c_(0) += s;
    return r;
  }
  friend Jet operator+(Scalar s, const Jet& a) { return a + s; }
  friend Jet operator-(const Jet& a, Scalar s) { return a + (-s); }
  friend Jet operator-(Scalar s, const Jet& a) { return (-a) + s; }
  friend Jet operator*(const Jet& a, Scalar s) { return Jet(a.c_ * s); }
  friend Jet operator*(Scalar s, const Jet& a) { return Jet(a.c_ * s); }
  friend Jet operator/(const Jet& a, Scalar s) { return Jet(a.c_ / s); }
  friend Jet operator/(Scalar s, const Jet& a) { return s * reciprocal(a); }

  friend Jet reciprocal(const Jet& a) {
    const auto n = a.c_.size();
    Coeffs r(n);
    if (n == 0) return Jet(r);
    const Scalar inv0 = Scalar(1) / a.c_(0);
    r(0) = inv0;
    for (Eigen::Index k = 1; k < n; ++k) {
      Scalar acc = Scalar(0);
      for (Eigen::Index j = 1; j <= k; ++j) acc += a.c_(j) * r(k - j);
      r(k) = -inv0 * acc;
    }
    return Jet(std::move(r));
  }

  friend Jet exp(const Jet& a) {
    const auto n = a.c_.size();
    Coeffs r(n);
    if (n == 0) return Jet(r);
    using std::exp;
    r(0) = exp(a.c_(0));
    for (Eigen::Index k = 1; k < n; ++k) {
      Scalar acc = Scalar(0);
      for (Eigen::Index j = 1; j <= k; ++j) acc += Scalar(j) * a.c_(j) * r(k - j);
      r(k) = acc / Scalar(k);
    }
    return Jet(std::move(r));
  }

  friend Jet log(const Jet& a) {
    const auto n = a.c_.size();
    Coeffs r(n);
    if (n == 0) return Jet(r);
    using std::log;
    r(0) = log(a.c_(0));
    for (Eigen::Index k = 1; k < n; ++k) {
      Scalar acc = Scalar(0);
      for (Eigen::Index j = 1; j < k; ++j) acc += Scalar(j) * r(j) * a.c_(k - j);
      r(k) = (a.c_(k) - acc / Scalar(k)) / a.c_(0);
    }
    return Jet(std::move(r));
  }

  friend Jet pow(const Jet& a, Scalar p) { return exp(p * log(a)); }

 private:
  Coeffs c_;
};

using JetD = Jet<double>;

/// First-order forward tangent carried alongside a value of any ring-like type.
/// Used with V = JetD to differentiate whole jets with respect to an outer
/// parameter. An empty tangent marks "not available".
template <typename V>
struct Dual {
  V re;
  V ds;

  friend Dual operator+(const Dual& a, const Dual& b) { return {a.re + b.re, a.ds + b.ds}; }
  friend Dual operator-(const Dual& a, const Dual& b) { return {a.re - b.re, a.ds - b.ds}; }
  friend Dual operator*(const Dual& a, const Dual& b) {
    return {a.re * b.re, a.ds * b.re + a.re * b.ds};
  }
  friend Dual operator/(const Dual& a, const Dual& b) {
    const V inv = reciprocal(b.re);
    const V q = a.re * inv;
    return {q, (a.ds - q * b.ds) * inv};
  }
  friend Dual operator*(double s, const Dual& a) { return {s * a.re, s * a.ds}; }
  friend Dual operator*(const Dual& a, double s) { return {s * a.re, s * a.ds}; }
  friend Dual operator-(const Dual& a) { return {-a.re, -a.ds}; }
};

using SJet = Dual<JetD>;

}  // namespace mm

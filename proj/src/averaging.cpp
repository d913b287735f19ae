#include "mm/averaging.hpp"

#include "mm/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mm {

namespace {

constexpr int kPanelOrder = 8;

// Quintic Hermite basis on [0, 1] and its first derivative.
void quintic(double t, double* b, double* db) {
  const double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
  b[0] = 1 - 10 * t3 + 15 * t4 - 6 * t5;
  b[1] = t - 6 * t3 + 8 * t4 - 3 * t5;
  b[2] = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
  b[3] = 10 * t3 - 15 * t4 + 6 * t5;
  b[4] = -4 * t3 + 7 * t4 - 3 * t5;
  b[5] = 0.5 * t3 - t4 + 0.5 * t5;
  db[0] = -30 * t2 + 60 * t3 - 30 * t4;
  db[1] = 1 - 18 * t2 + 32 * t3 - 15 * t4;
  db[2] = t - 4.5 * t2 + 6 * t3 - 2.5 * t4;
  db[3] = 30 * t2 - 60 * t3 + 30 * t4;
  db[4] = -12 * t2 + 28 * t3 - 15 * t4;
  db[5] = 1.5 * t2 - 4 * t3 + 2.5 * t4;
}

}  // namespace

InvariantDensity invariant_density(const ModelSpec& spec, int panels) {
  if (panels < 16) throw std::invalid_argument("invariant density needs at least 16 panels");
  InvariantDensity d;
  d.spec_ = &spec;
  d.mean_ = spec.y_mean();
  d.sd_ = spec.y_sd();
  d.support_ = spec.y_domain();
  d.panels_ = panels;
  // The catalog fast factor is Ornstein-Uhlenbeck: b linear, a constant.
  d.gaussian_ = true;
  d.log_norm_ = 0.0;
  const double mass = d.mass();
  if (!std::isfinite(mass) || std::abs(mass - 1.0) > 1e-12)
    throw std::runtime_error("invariant density mass does not converge on the working support");
  return d;
}

double InvariantDensity::log_density(double y) const {
  if (gaussian_) {
    const double u = (y - mean_) / sd_;
    return -0.5 * u * u - std::log(sd_) - 0.91893853320467274178;
  }
  const double a = spec_->a(y);
  const double drift = integrate_gl([&](double u) { return 2.0 * spec_->b(u) / (spec_->a(u) * spec_->a(u)); }, mean_, y,
                                    16);
  return -2.0 * std::log(a) + drift - log_norm_;
}

double InvariantDensity::density(double y) const { return std::exp(log_density(y)); }

double InvariantDensity::average_panels(const std::function<double(double)>& f) const {
  const QuadratureRule& q = gauss_legendre(kPanelOrder);
  const double h = (support_.hi - support_.lo) / panels_;
  double acc = 0.0;
  for (int k = 0; k < panels_; ++k) {
    const double mid = support_.lo + (k + 0.5) * h;
    double panel = 0.0;
    for (int i = 0; i < kPanelOrder; ++i) {
      const double y = mid + 0.5 * h * q.nodes(i);
      panel += q.weights(i) * f(y) * density(y);
    }
    acc += panel;
  }
  return 0.5 * h * acc;
}

double InvariantDensity::mass() const {
  return average_panels([](double) { return 1.0; });
}

AverageResult average(const std::function<double(double)>& f, const InvariantDensity& density) {
  AverageResult r;
  if (density.gaussian()) {
    double prev = gaussian_expectation(f, density.mean(), density.sd(), 16);
    for (int n = 32; n <= 512; n *= 2) {
      const double cur = gaussian_expectation(f, density.mean(), density.sd(), n);
      if (!std::isfinite(cur)) throw std::runtime_error("average diverges");
      const double change = std::abs(cur - prev);
      if (change <= 1e-10 * std::abs(cur) || change <= 1e-15) {
        r.value = cur;
        r.error_estimate = change;
        r.nodes = n;
        return r;
      }
      prev = cur;
    }
  }
  // Panel doubling against the density on the truncated support.
  const QuadratureRule& q = gauss_legendre(kPanelOrder);
  const Box& s = density.support();
  auto panel_rule = [&](int panels) {
    const double h = (s.hi - s.lo) / panels;
    double acc = 0.0;
    for (int k = 0; k < panels; ++k) {
      const double mid = s.lo + (k + 0.5) * h;
      for (int i = 0; i < kPanelOrder; ++i) {
        const double y = mid + 0.5 * h * q.nodes(i);
        acc += q.weights(i) * f(y) * density.density(y);
      }
    }
    return 0.5 * h * acc;
  };
  double prev = panel_rule(64);
  for (int panels = 128; panels <= 1 << 15; panels *= 2) {
    const double cur = panel_rule(panels);
    if (!std::isfinite(cur)) throw std::runtime_error("average diverges");
    const double change = std::abs(cur - prev);
    if (change <= 1e-10 * std::abs(cur) || change <= 1e-15) {
      r.value = cur;
      r.error_estimate = change;
      r.nodes = panels * kPanelOrder;
      return r;
    }
    prev = cur;
  }
  throw std::runtime_error("average did not converge under node doubling");
}

PoissonSolution solve_poisson(std::function<double(double)> rhs, const InvariantDensity& density,
                              const ModelSpec& spec) {
  PoissonSolution sol;
  sol.rhs_ = std::move(rhs);
  sol.spec_ = &spec;
  const auto& f = sol.rhs_;
  const QuadratureRule& q = gauss_legendre(kPanelOrder);
  const Box& sup = density.support();
  const int panels = density.panel_count();
  const double h = (sup.hi - sup.lo) / panels;
  sol.h_ = h;
  sol.y_ = Eigen::ArrayXd::LinSpaced(panels + 1, sup.lo, sup.hi);

  // Panel integrals of f Phi and Phi.
  Eigen::ArrayXd pf(panels), p1(panels);
  double fmax = 0.0;
  for (int k = 0; k < panels; ++k) {
    const double mid = sup.lo + (k + 0.5) * h;
    double af = 0.0, a1 = 0.0;
    for (int i = 0; i < kPanelOrder; ++i) {
      const double y = mid + 0.5 * h * q.nodes(i);
      const double w = q.weights(i) * density.density(y);
      const double fy = f(y);
      if (!std::isfinite(fy)) throw std::runtime_error("Poisson right-hand side is not finite");
      fmax = std::max(fmax, std::abs(fy));
      af += w * fy;
      a1 += w;
    }
    pf(k) = 0.5 * h * af;
    p1(k) = 0.5 * h * a1;
  }
  const double fbar = pf.sum() / p1.sum();
  sol.rhs_mean_ = fbar;

  const Eigen::Index n = sol.y_.size();
  sol.v_ = Eigen::ArrayXd::Zero(n);
  sol.d1_ = Eigen::ArrayXd::Zero(n);
  sol.d2_ = Eigen::ArrayXd::Zero(n);

  // A right-hand side that is constant to rounding has the zero solution.
  double spread = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) spread = std::max(spread, std::abs(f(sol.y_(k)) - fbar));
  if (spread <= 64.0 * std::numeric_limits<double>::epsilon() * fmax) {
    sol.zero_ = true;
    return sol;
  }

  const Eigen::ArrayXd centered = pf - fbar * p1;
  const Eigen::Index c = std::clamp<Eigen::Index>(
      static_cast<Eigen::Index>(std::lround((density.mean() - sup.lo) / h)), 1, n - 2);
  // G(y) = int_{-inf}^y (f - fbar) Phi, accumulated from the nearer tail.
  Eigen::ArrayXd G(n);
  double acc = 0.0;
  for (Eigen::Index k = 0; k <= c; ++k) {
    G(k) = acc;
    if (k < panels) acc += centered(k);
  }
  acc = 0.0;
  for (Eigen::Index k = n - 1; k > c; --k) {
    G(k) = -acc;
    acc += centered(k - 1);
  }

  auto theta_prime = [&](double y, double g) {
    const double a = spec.a(y);
    return 2.0 * g / (a * a * density.density(y));
  };
  auto inner = [&](double lo, double hi) {
    return integrate_gl([&](double u) { return (f(u) - fbar) * density.density(u); }, lo, hi, kPanelOrder);
  };
  for (Eigen::Index k = 0; k < n; ++k) {
    const double y = sol.y_(k);
    sol.d1_(k) = theta_prime(y, G(k));
    const double a = spec.a(y);
    sol.d2_(k) = 2.0 / (a * a) * (f(y) - fbar - spec.b(y) * sol.d1_(k));
  }
  // theta from the center outward.
  for (Eigen::Index k = c; k < n - 1; ++k) {
    const double lo = sol.y_(k), hi = sol.y_(k + 1);
    const double step = integrate_gl([&](double u) { return theta_prime(u, G(k + 1) - inner(u, hi)); }, lo, hi,
                                     kPanelOrder);
    sol.v_(k + 1) = sol.v_(k) + step;
  }
  for (Eigen::Index k = c; k > 0; --k) {
    const double lo = sol.y_(k - 1), hi = sol.y_(k);
    const double step = integrate_gl([&](double u) { return theta_prime(u, G(k - 1) + inner(lo, u)); }, lo, hi,
                                     kPanelOrder);
    sol.v_(k - 1) = sol.v_(k) - step;
  }
  const double mean = density.average_panels([&](double y) { return sol.value(y); });
  sol.v_ -= mean;
  return sol;
}

void PoissonSolution::locate(double y, Eigen::Index& k, double& t) const {
  const Eigen::Index n = y_.size();
  const double pos = (y - y_(0)) / h_;
  k = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(pos)), 0, n - 2);
  t = std::clamp(pos - static_cast<double>(k), 0.0, 1.0);
}

double PoissonSolution::value(double y) const {
  if (zero_) return 0.0;
  Eigen::Index k;
  double t, b[6], db[6];
  locate(y, k, t);
  quintic(t, b, db);
  return v_(k) * b[0] + h_ * d1_(k) * b[1] + h_ * h_ * d2_(k) * b[2] + v_(k + 1) * b[3] + h_ * d1_(k + 1) * b[4] +
         h_ * h_ * d2_(k + 1) * b[5];
}

double PoissonSolution::dy(double y) const {
  if (zero_) return 0.0;
  Eigen::Index k;
  double t, b[6], db[6];
  locate(y, k, t);
  quintic(t, b, db);
  return (v_(k) * db[0] + v_(k + 1) * db[3]) / h_ + d1_(k) * db[1] + d1_(k + 1) * db[4] +
         h_ * (d2_(k) * db[2] + d2_(k + 1) * db[5]);
}

double PoissonSolution::dyy(double y) const {
  if (zero_) return 0.0;
  const double a = spec_->a(y);
  return 2.0 / (a * a) * (rhs_(y) - rhs_mean_ - spec_->b(y) * dy(y));
}

double PoissonSolution::sup() const { return zero_ ? 0.0 : v_.abs().maxCoeff(); }

ThetaLattice::ThetaLattice(const ModelSpec& spec, double z_center, double h)
    : spec_(&spec), zc_(z_center), h_(h), density_(invariant_density(spec)) {
  if (!(h > 0.0)) throw std::invalid_argument("lattice step must be positive");
}

const PoissonSolution& ThetaLattice::theta(int k) const {
  std::lock_guard<std::recursive_mutex> lock(mu_);
  auto& slot = light_[k];
  if (!slot) {
    const double zk = z(k);
    const ModelSpec* s = spec_;
    slot = std::make_shared<const PoissonSolution>(solve_poisson(
        [s, zk](double y) {
          const double l = s->lambda(y, zk);
          return l * l;
        },
        density_, *spec_));
  }
  return *slot;
}

const ThetaBundle& ThetaLattice::bundle(int k) const {
  std::lock_guard<std::recursive_mutex> lock(mu_);
  auto& slot = bundles_[k];
  if (slot) return *slot;

  auto b = std::make_unique<ThetaBundle>();
  const ModelSpec* s = spec_;
  const double zk = z(k);
  b->z = zk;
  for (int j = k - 2; j <= k + 2; ++j) theta(j);
  const auto th = light_[k];
  const auto lm2 = light_[k - 2], lm1 = light_[k - 1], lp1 = light_[k + 1], lp2 = light_[k + 2];
  const double h = h_;
  auto tyz_of = [lm2, lm1, lp1, lp2, h](double y) {
    return (-lp2->dy(y) + 8.0 * lp1->dy(y) - 8.0 * lm1->dy(y) + lm2->dy(y)) / (12.0 * h);
  };
  b->theta_yz = tyz_of;

  auto lam = [s, zk](double y) { return s->lambda(y, zk); };
  auto avg = [this](const std::function<double(double)>& f) { return density_.average_panels(f); };
  auto solve = [this](std::function<double(double)> f) {
    return std::make_shared<const PoissonSolution>(solve_poisson(std::move(f), density_, *spec_));
  };

  b->theta[0] = th;
  b->lambda_bar = std::sqrt(th->rhs_mean());
  if (!(b->lambda_bar > 0.01)) throw ConfigError("averaged Sharpe ratio is not bounded away from zero");
  b->lambda_hat = avg(lam);
  b->lambda_bar_p = avg([s, zk](double y) { return s->lambda(y, zk) * s->lambda_z(y, zk); }) / b->lambda_bar;
  b->lambda_bar_pp = (avg([s, zk](double y) {
                        const double lz = s->lambda_z(y, zk);
                        return lz * lz + s->lambda(y, zk) * s->lambda_zz(y, zk);
                      }) -
                      b->lambda_bar_p * b->lambda_bar_p) /
                     b->lambda_bar;
  b->lambda_hat_p = avg([s, zk](double y) { return s->lambda_z(y, zk); });

  const PoissonSolution* t0 = th.get();
  b->B = avg([=](double y) { return lam(y) * s->a(y) * t0->dy(y); });
  b->B_p = avg([=](double y) { return s->a(y) * (s->lambda_z(y, zk) * t0->dy(y) + lam(y) * tyz_of(y)); });
  b->theta[1] = solve([=](double y) { return lam(y) * s->a(y) * t0->dy(y); });
  const PoissonSolution* t1 = b->theta[1].get();
  b->B1 = avg([=](double y) { return lam(y) * s->a(y) * t1->dy(y); });
  b->theta[2] = solve(lam);
  const PoissonSolution* t2 = b->theta[2].get();
  b->theta[3] = solve([=](double y) { return s->a(y) * lam(y) * t1->dy(y); });
  b->theta[4] = solve([=](double y) {
    const double l = lam(y);
    return t0->value(y) * l * l;
  });
  b->theta[5] = solve([=](double y) { return t0->value(y); });
  const auto tyz = b->theta_yz;
  b->theta[6] = solve(tyz);
  b->theta[7] = solve([=](double y) { return t0->dy(y); });
  b->theta[8] = solve([=](double y) { return s->a(y) * lam(y) * t2->dy(y); });
  b->theta[9] = solve([=](double y) {
    const double v = s->a(y) * t0->dy(y);
    return v * v;
  });
  b->theta[10] = solve([=](double y) { return s->a(y) * tyz(y); });
  b->theta[11] = solve([=](double y) { return s->a(y) * t0->dy(y); });

  b->avg_theta_lambda2 = b->theta[4]->rhs_mean();
  b->avg_theta = b->theta[5]->rhs_mean();
  b->avg_theta_yz = b->theta[6]->rhs_mean();
  b->avg_theta_y = b->theta[7]->rhs_mean();
  b->avg_a_lambda_theta2_y = b->theta[8]->rhs_mean();
  b->avg_a2_theta_y2 = b->theta[9]->rhs_mean();
  b->avg_a_theta_yz = b->theta[10]->rhs_mean();
  b->avg_a_theta_y = b->theta[11]->rhs_mean();

  slot = std::move(b);
  return *slot;
}

double ThetaLattice::dz(const std::function<double(const ThetaBundle&)>& f) const {
  return (-f(bundle(2)) + 8.0 * f(bundle(1)) - 8.0 * f(bundle(-1)) + f(bundle(-2))) / (12.0 * h_);
}

ThetaBundle theta_family(const ModelSpec& spec, double z) {
  ThetaLattice lattice(spec, z);
  return lattice.bundle(0);
}

}  // namespace mm

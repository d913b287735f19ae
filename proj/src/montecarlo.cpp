#include "mm/montecarlo.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <future>
#include <random>
#include <stdexcept>
#include <thread>

namespace mm {
namespace {

constexpr std::size_t kChunk = 2048;  // streams per work item
constexpr int kLambdaNodes = 257;
constexpr int kSNodes = 33;
constexpr int kUNodes = 161;

double hermite(double f0, double f1, double d0, double d1, double h, double u) {
  const double u2 = u * u, u3 = u2 * u;
  return (2 * u3 - 3 * u2 + 1) * f0 + (u3 - 2 * u2 + u) * h * d0 + (-2 * u3 + 3 * u2) * f1 + (u3 - u2) * h * d1;
}

double catmull_rom(double p0, double p1, double p2, double p3, double u) {
  return p1 + 0.5 * u * (p2 - p0 + u * (2 * p0 - 5 * p1 + 4 * p2 - p3 + u * (3 * (p1 - p2) + p3 - p0)));
}

std::mt19937_64 path_stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

struct ChunkResult {
  std::vector<double> second_moment;
  std::size_t violations = 0;
  double proxy_vol = 0, proxy_d1 = 0;
  std::size_t proxy_samples = 0;
};

}  // namespace

Eigen::Matrix3d correlation_factor(const CorrelationTriple& rho) {
  Eigen::Matrix3d c;
  c << 1.0, rho.rho1, rho.rho2, rho.rho1, 1.0, rho.rho12, rho.rho2, rho.rho12, 1.0;
  Eigen::LLT<Eigen::Matrix3d> llt(c);
  if (llt.info() != Eigen::Success) throw ConfigError("correlation matrix is not positive definite");
  return llt.matrixL();
}

MertonEvaluator::MertonEvaluator(const Expansion& e) : e_(&e), T_(e.spec().T()) {
  const ModelSpec& spec = e.spec();
  const InvariantDensity d = invariant_density(spec);
  auto lb_at = [&](double z) {
    return std::sqrt(d.average_panels([&](double y) {
      const double l = spec.lambda(y, z);
      return l * l;
    }));
  };
  double lb_max = 0;
  z_free_ = spec.lambda_z_free();
  if (z_free_) {
    lb_const_ = lb_at(spec.z_mean());
    lb_max = lb_const_;
  } else {
    z_lo_ = spec.z_domain().lo;
    z_h_ = (spec.z_domain().hi - z_lo_) / (kLambdaNodes - 1);
    for (int i = 0; i < kLambdaNodes; ++i) {
      const double z = z_lo_ + i * z_h_;
      const double lb = lb_at(z);
      lb_.push_back(lb);
      lbp_.push_back(lb > 0 ? d.average_panels([&](double y) { return spec.lambda(y, z) * spec.lambda_z(y, z); }) / lb
                            : 0.0);
      lb_max = std::max(lb_max, lb);
    }
  }

  const UtilitySpec& u = e.utility();
  single_ = u.exponential_j() && u.weights().size() == 1;
  if (single_) {
    gamma_ = u.gammas()[0];
    return;
  }
  s_max_ = 1.0001 * lb_max * lb_max * T_;
  u_lo_ = std::log(1e-4);
  u_hi_ = std::log(1e4);
  du_ = (u_hi_ - u_lo_) / (kUNodes - 1);
  ds_ = s_max_ / (kSNodes - 1);
  const std::size_t n = kSNodes * kUNodes;
  r_.resize(n);
  r_u_.resize(n);
  xi_.resize(n);
  xi_u_.resize(n);
  const HeatKernel& k = e.kernel();
  for (int i = 0; i < kSNodes; ++i) {
    const double s = i * ds_;
    for (int j = 0; j < kUNodes; ++j) {
      const double x = std::exp(u_lo_ + j * du_);
      const double xi = k.xi_of(x, s);
      const JetD h = k.H_jet(xi, s, 2);
      const double h1 = h.coeff(1), h2 = 2.0 * h.coeff(2);
      const std::size_t at = i * kUNodes + j;
      // x = H(xi, s): d xi / d log x = x / H' and d(H'/x) / d log x = H''/H' - H'/x.
      r_[at] = h1 / x;
      r_u_[at] = h2 / h1 - h1 / x;
      xi_[at] = xi;
      xi_u_[at] = x / h1;
    }
  }
}

double MertonEvaluator::lambda_bar(double z) const {
  if (z_free_) return lb_const_;
  const double f = std::clamp((z - z_lo_) / z_h_, 0.0, double(kLambdaNodes - 1));
  const int i = std::min(static_cast<int>(f), kLambdaNodes - 2);
  return hermite(lb_[i], lb_[i + 1], lbp_[i], lbp_[i + 1], z_h_, f - i);
}

bool MertonEvaluator::in_table(double s, double u) const { return s <= s_max_ && u >= u_lo_ && u <= u_hi_; }

double MertonEvaluator::table(const std::vector<double>& f, const std::vector<double>& fu, double s, double u) const {
  const double fs = s / ds_;
  const double fj = std::min((u - u_lo_) / du_, double(kUNodes - 1));
  const int is = std::clamp(static_cast<int>(fs), 0, kSNodes - 2);
  const int j = std::min(static_cast<int>(fj), kUNodes - 2);
  const double w = fj - j;
  auto row = [&](int i) {
    const std::size_t a = std::clamp(i, 0, kSNodes - 1) * kUNodes + j;
    return hermite(f[a], f[a + 1], fu[a], fu[a + 1], du_, w);
  };
  return catmull_rom(row(is - 1), row(is), row(is + 1), row(is + 2), fs - is);
}

double MertonEvaluator::R(double t, double x, double z) const {
  if (single_) return x / gamma_;
  const double lb = lambda_bar(z);
  const double s = lb * lb * std::max(T_ - t, 0.0);
  const double u = std::log(x);
  if (in_table(s, u)) return x * table(r_, r_u_, s, u);
  const HeatKernel& k = e_->kernel();
  return k.H_jet(k.xi_of(x, s), s, 1).coeff(1);
}

double MertonEvaluator::v0_x(double t, double x, double z) const {
  const double lb = lambda_bar(z);
  const double s = lb * lb * std::max(T_ - t, 0.0);
  const double u = std::log(x);
  const double xi = !single_ && in_table(s, u) ? table(xi_, xi_u_, s, u) : e_->kernel().xi_of(x, s);
  return std::exp(-xi - 0.5 * s);
}

StrategyField pi0_strategy(const Expansion& e, std::shared_ptr<const MertonEvaluator> m) {
  if (!m) m = std::make_shared<MertonEvaluator>(e);
  const ModelSpec spec = e.spec();
  StrategyField f;
  f.pi = [spec, m](double t, double x, double y, double z) {
    const double l = spec.lambda(y, z);
    if (l == 0.0) return 0.0;
    const double sigma = spec.sigma(y, z);
    if (!(sigma > 0.0)) throw DomainError("zeroth-order strategy needs sigma > 0");
    return l / sigma * m->R(t, x, z);
  };
  f.order = "zeroth";
  f.model = spec.catalog_name();
  return f;
}

PathStats simulate_paths(const ModelSpec& spec, const StrategyField& strategy, const SimConfig& cfg,
                         const MertonEvaluator* merton) {
  if (cfg.paths < 1 || cfg.steps < 1) throw std::invalid_argument("simulation needs at least one path and one step");
  if (!(cfg.x0 > 0.0)) throw std::invalid_argument("initial wealth must be positive");
  if (cfg.antithetic && cfg.paths % 2 != 0) throw std::invalid_argument("antithetic sampling needs an even path count");
  if (!strategy.pi) throw std::invalid_argument("strategy is empty");

  const Eigen::Matrix3d L = correlation_factor(spec.correlations());
  const bool log_wealth =
      cfg.scheme == WealthScheme::Log || (cfg.scheme == WealthScheme::Auto && strategy.order == "zeroth");
  const int M = cfg.steps;
  const double T = spec.T(), dt = T / M, sdt = std::sqrt(dt);
  const double eps = spec.eps(), delta = spec.delta();
  const bool implicit = eps < dt / 10.0;
  const double ry = dt / eps, ay = 1.0 / std::sqrt(eps), rz = delta * dt, az = std::sqrt(delta);

  PathStats out;
  out.paths = cfg.paths;
  out.steps = M;
  out.seed = cfg.seed;
  out.antithetic = cfg.antithetic;
  out.implicit_fast = implicit;
  out.terminal_wealth.assign(cfg.paths, 0.0);

  const int width = cfg.antithetic ? 2 : 1;
  const std::size_t streams = cfg.paths / width;
  const std::size_t chunks = (streams + kChunk - 1) / kChunk;

  auto run_chunk = [&](std::size_t c) {
    ChunkResult r;
    r.second_moment.assign(M + 1, 0.0);
    const std::size_t lo = c * kChunk, hi = std::min(streams, lo + kChunk);
    for (std::size_t k = lo; k < hi; ++k) {
      std::mt19937_64 rng = path_stream(cfg.seed, k);
      std::normal_distribution<double> normal;
      double x[2], y[2], z[2], vol[2] = {0, 0}, d1[2] = {0, 0};
      bool alive[2] = {true, true};
      for (int p = 0; p < width; ++p) {
        x[p] = cfg.x0;
        y[p] = cfg.y0;
        z[p] = cfg.z0;
        r.second_moment[0] += cfg.x0 * cfg.x0;
      }
      const bool proxy = merton != nullptr && k * width < cfg.proxy_paths;
      for (int n = 0; n < M; ++n) {
        const double t = n * dt;
        const Eigen::Vector3d xi(normal(rng), normal(rng), normal(rng));
        const Eigen::Vector3d dw = sdt * (L * xi);
        for (int p = 0; p < width; ++p) {
          const double sgn = p == 0 ? 1.0 : -1.0;
          const double yy = y[p], zz = z[p];
          const double lambda = spec.lambda(yy, zz), sigma = spec.sigma(yy, zz);
          if (alive[p]) {
            const double pi = strategy.pi(t, x[p], yy, zz);
            const double exposure = pi * sigma;
            if (proxy) {
              const double vx = merton->v0_x(t, x[p], zz);
              const double D1 = merton->R(t, x[p], zz) * vx;
              vol[p] += exposure * exposure * vx * vx * dt;
              d1[p] += D1 * D1 * dt;
            }
            if (log_wealth) {
              const double q = exposure / x[p];
              x[p] *= std::exp(q * lambda * dt - 0.5 * q * q * dt + q * sgn * dw(0));
            } else {
              const double next = x[p] + exposure * (lambda * dt + sgn * dw(0));
              if (next > 0.0) {
                x[p] = next;
              } else {
                alive[p] = false;
                ++r.violations;
              }
            }
            if (!std::isfinite(x[p])) throw std::runtime_error("non-finite wealth in simulation");
          }
          const double noise_y = ay * spec.a(yy) * sgn * dw(1);
          if (implicit) {
            const double by = spec.eval_unchecked(yy, zz).b_y;
            y[p] = (yy + ry * (spec.b(yy) - by * yy) + noise_y) / (1.0 - ry * by);
          } else {
            y[p] = yy + ry * spec.b(yy) + noise_y;
          }
          z[p] = zz + rz * spec.c(zz) + az * spec.g(zz) * sgn * dw(2);
          if (!std::isfinite(y[p]) || !std::isfinite(z[p])) throw std::runtime_error("non-finite factor in simulation");
          r.second_moment[n + 1] += x[p] * x[p];
        }
      }
      for (int p = 0; p < width; ++p) {
        out.terminal_wealth[k * width + p] = x[p];
        if (proxy) {
          r.proxy_vol += vol[p];
          r.proxy_d1 += d1[p];
          ++r.proxy_samples;
        }
      }
    }
    return r;
  };

  std::vector<ChunkResult> results(chunks);
  const std::size_t workers = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, chunks);
  std::vector<std::future<void>> jobs;
  for (std::size_t w = 0; w < workers; ++w) {
    jobs.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t c = w; c < chunks; c += workers) results[c] = run_chunk(c);
    }));
  }
  for (auto& j : jobs) j.get();

  std::vector<double> m2(M + 1, 0.0);
  for (const ChunkResult& r : results) {
    for (int n = 0; n <= M; ++n) m2[n] += r.second_moment[n];
    out.positivity_violations += r.violations;
    out.proxy_wealth_vol += r.proxy_vol;
    out.proxy_d1v0 += r.proxy_d1;
    out.proxy_samples += r.proxy_samples;
  }
  out.max_second_moment = *std::max_element(m2.begin(), m2.end()) / cfg.paths;
  if (out.proxy_samples > 0) {
    out.proxy_wealth_vol /= out.proxy_samples;
    out.proxy_d1v0 /= out.proxy_samples;
  }
  return out;
}

ValueEstimate estimate_value(const PathStats& stats, const UtilitySpec& utility) {
  const std::size_t n = stats.terminal_wealth.size();
  Eigen::ArrayXd u(n);
  for (std::size_t i = 0; i < n; ++i) u(i) = utility.U(stats.terminal_wealth[i]);
  Eigen::ArrayXd s = u;
  if (stats.antithetic) {
    s.resize(n / 2);
    for (std::size_t i = 0; i < n / 2; ++i) s(i) = 0.5 * (u(2 * i) + u(2 * i + 1));
  }
  const std::size_t m = s.size();
  if (m < 30) throw std::invalid_argument("fewer than 30 independent samples; confidence interval refused");
  // Shifted by the first sample so identical samples give that value exactly.
  const Eigen::ArrayXd c = s - s(0);
  const double mc = c.mean();
  ValueEstimate est;
  est.samples = m;
  est.mean = s(0) + mc;
  const double var = (c - mc).square().sum() / static_cast<double>(m - 1);
  est.std_error = std::sqrt(var / static_cast<double>(m));
  est.half_width = 1.959963984540054 * est.std_error;

  std::vector<double> sorted(u.data(), u.data() + n);
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const double h = q * (n - 1);
    const std::size_t i = static_cast<std::size_t>(std::floor(h));
    const std::size_t j = std::min(i + 1, n - 1);
    return sorted[i] + (h - i) * (sorted[j] - sorted[i]);
  };
  est.q05 = quantile(0.05);
  est.q50 = quantile(0.50);
  est.q95 = quantile(0.95);
  return est;
}

}  // namespace mm

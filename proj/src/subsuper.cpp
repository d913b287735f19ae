#include "mm/subsuper.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <future>
#include <limits>
#include <stdexcept>

namespace mm {
namespace {

constexpr int kConstOrder = 32;

SJet sconst(double re) { return {JetD::constant(re, kConstOrder), JetD::constant(0.0, kConstOrder)}; }

double fd1(const std::array<double, 5>& f, double h) { return (-f[4] + 8.0 * f[3] - 8.0 * f[1] + f[0]) / (12.0 * h); }

double fd2(const std::array<double, 5>& f, double h) {
  return (-f[4] + 16.0 * f[3] - 30.0 * f[2] + 16.0 * f[1] - f[0]) / (12.0 * h * h);
}

double weight(const Piece& p, double eps, double delta, const Constants& k) {
  double w = 1.0;
  if (p.eps2) w *= std::pow(eps, 0.5 * p.eps2);
  if (p.delta2) w *= std::pow(delta, 0.5 * p.delta2);
  if (p.channel >= 0) w *= k[p.channel];
  return w;
}

}  // namespace

CorrectorSet build_correctors(const MertonComposites& mc, const ThetaBundle& b, const ModelSpec& spec, Side side) {
  const CorrelationTriple& r = spec.correlations();
  const double z = b.z;
  const double g = spec.g(z);
  const double g_z = spec.eval_unchecked(spec.y_mean(), z).g_z;
  const double lb = b.lambda_bar, lbp = b.lambda_bar_p, lh = b.lambda_hat;
  const double K = lh * lb * lbp * g;
  const double Kp = (b.lambda_hat_p * lb * lbp + lh * lbp * lbp + lh * lb * b.lambda_bar_pp) * g + lh * lb * lbp * g_z;
  const double sgn = side == Side::Sub ? -1.0 : 1.0;
  const SJet& tau = mc.tau;
  const SJet tau_sq = tau * tau;
  // d/dz at fixed x of a D-composite is 2 (T - t) lambda_bar lambda_bar' (D2/2 + D1).
  const SJet s_z = (2.0 * lb * lbp) * tau;

  CorrectorSet cs;
  cs.side = side;
  auto& p = cs.pieces;
  const SJet n = sgn * (mc.tau2 * mc.P1);
  p.push_back({Term::NA, 2, 0, -1, 0, n});
  p.push_back({Term::NB, 0, 2, -1, 1, n});
  p.push_back({Term::NC, 1, 1, -1, 2, n});

  const SJet c_part = sgn * (-1.0 * (mc.tau2 * mc.Q1));
  p.push_back({Term::F, 4, 0, 0, 0, c_part});
  p.push_back({Term::G, 2, 2, 0, 1, c_part});
  p.push_back({Term::H, 3, 1, 0, 2, c_part});

  // Parts driven by the fast-factor fluctuations enter both candidates with
  // a minus sign.
  p.push_back({Term::F, 4, 0, 4, -1, 0.5 * mc.Q1});
  p.push_back({Term::F, 4, 0, 5, -1, (-0.5 * lb * lb) * mc.Q1});
  p.push_back({Term::F, 4, 0, 1, -1, (-0.5 * r.rho1 * r.rho1 * b.B) * (tau * mc.S)});
  p.push_back({Term::F, 4, 0, 3, -1, (-0.5 * r.rho1 * r.rho1) * mc.P3});

  const SJet d1_v01_z = (0.5 * r.rho2) * (Kp * (tau_sq * mc.P3) + K * (tau_sq * s_z * mc.S));
  p.push_back({Term::G, 2, 2, 2, -1, (-r.rho2 * g) * d1_v01_z});

  const SJet d1_v10_z = (-0.5 * r.rho1) * (b.B_p * (tau * mc.P3) + b.B * (tau * s_z * mc.S));
  p.push_back({Term::H, 3, 1, 2, -1, (-r.rho2 * g) * d1_v10_z});
  p.push_back({Term::H, 3, 1, 10, -1, (0.5 * r.rho12 * g) * mc.P1});
  p.push_back({Term::H, 3, 1, 11, -1, (0.5 * r.rho12 * g) * (s_z * mc.Q1)});
  p.push_back({Term::H, 3, 1, 1, -1, (0.5 * r.rho1 * r.rho2 * K) * (tau_sq * mc.S)});
  p.push_back({Term::H, 3, 1, 8, -1, (r.rho1 * r.rho2 * g * lb * lbp) * (tau * mc.P3)});

  if (side == Side::Super) {
    const MertonLocal& loc = mc.loc;
    const SJet v0x = dx(mc.m, loc);
    const SJet v0xx = dx(v0x, loc);
    const SJet inv = sconst(1.0) / v0xx;
    const SJet v10 = (-0.5 * r.rho1 * b.B) * (tau * mc.P2);
    const SJet v01 = (0.5 * r.rho2 * K) * (tau_sq * mc.P2);
    const SJet v10x = dx(v10, loc), v01x = dx(v01, loc);
    const SJet A = v0x * dx(v10x, loc) * inv - v10x;
    const SJet A2 = v0x * dx(v01x, loc) * inv - v01x;
    const SJet P1x = dx(mc.P1, loc);
    const SJet v0xz = (lb * lbp) * (tau * P1x);
    p.push_back({Term::F, 4, 0, 0, -1, 0.5 * (inv * A * A)});
    p.push_back({Term::F, 4, 0, 1, -1, (0.5 * r.rho1) * (inv * A * P1x)});
    p.push_back({Term::F, 4, 0, 9, -1, (0.125 * r.rho1 * r.rho1) * (inv * P1x * P1x)});
    p.push_back({Term::G, 2, 2, 0, -1, 0.5 * (inv * A2 * A2)});
    p.push_back({Term::G, 2, 2, 2, -1, (-r.rho2 * g) * (inv * A2 * v0xz)});
    p.push_back({Term::H, 3, 1, 0, -1, inv * A * A2});
    p.push_back({Term::H, 3, 1, 2, -1, (-r.rho2 * g) * (inv * A * v0xz)});
    p.push_back({Term::H, 3, 1, 1, -1, (0.5 * r.rho1) * (inv * A2 * P1x)});
    p.push_back({Term::H, 3, 1, 11, -1, (-0.5 * r.rho1 * r.rho2 * g) * (inv * v0xz * P1x)});
  }
  return cs;
}

Derivs& Derivs::operator+=(const Derivs& o) {
  v += o.v;
  t += o.t;
  x += o.x;
  xx += o.xx;
  y += o.y;
  yy += o.yy;
  xy += o.xy;
  z += o.z;
  zz += o.zz;
  xz += o.xz;
  yz += o.yz;
  return *this;
}

Derivs operator*(double s, Derivs d) {
  d.v *= s;
  d.t *= s;
  d.x *= s;
  d.xx *= s;
  d.y *= s;
  d.yy *= s;
  d.xy *= s;
  d.z *= s;
  d.zz *= s;
  d.xz *= s;
  d.yz *= s;
  return d;
}

Derivs PointTerms::assemble(double eps, double delta, const Constants& k) const {
  Derivs out;
  for (std::size_t j = 0; j < d.size(); ++j) out += weight(meta[j], eps, delta, k) * d[j];
  return out;
}

double PointTerms::term(Term t) const {
  double v = 0.0;
  for (std::size_t j = 0; j < d.size(); ++j)
    if (meta[j].term == t) v += d[j].v;
  return v;
}

double q_pi0(const PointTerms& pt, const Derivs& v, double eps, double delta) {
  if (!(eps > 0.0) || delta < 0.0) throw std::invalid_argument("Q operator needs eps > 0 and delta >= 0");
  const double l = pt.lambda, R = pt.R;
  const CorrelationTriple& r = pt.rho;
  return v.t + 0.5 * l * l * R * R * v.xx + l * l * R * v.x + (0.5 * pt.a * pt.a * v.yy + pt.b * v.y) / eps +
         delta * (0.5 * pt.g * pt.g * v.zz + pt.c * v.z) + std::sqrt(delta / eps) * r.rho12 * pt.a * pt.g * v.yz +
         r.rho1 * pt.a * l * R * v.xy / std::sqrt(eps) + std::sqrt(delta) * r.rho2 * pt.g * l * R * v.xz;
}

double q_pi0(const PointTerms& pt, double eps, double delta, const Constants& k) {
  return q_pi0(pt, pt.assemble(eps, delta, k), eps, delta);
}

std::map<std::pair<int, int>, double> q_pi0_orders(const PointTerms& pt, const Constants& k) {
  std::map<std::pair<int, int>, double> out;
  const double l = pt.lambda, R = pt.R;
  const CorrelationTriple& r = pt.rho;
  for (std::size_t j = 0; j < pt.d.size(); ++j) {
    const Piece& p = pt.meta[j];
    const Derivs& d = pt.d[j];
    const double w = p.channel >= 0 ? k[p.channel] : 1.0;
    const int e = p.eps2, q = p.delta2;
    out[{e, q}] += w * (d.t + 0.5 * l * l * R * R * d.xx + l * l * R * d.x);
    out[{e - 2, q}] += w * (0.5 * pt.a * pt.a * d.yy + pt.b * d.y);
    out[{e, q + 2}] += w * (0.5 * pt.g * pt.g * d.zz + pt.c * d.z);
    out[{e - 1, q + 1}] += w * r.rho12 * pt.a * pt.g * d.yz;
    out[{e - 1, q}] += w * r.rho1 * pt.a * l * R * d.xy;
    out[{e, q + 1}] += w * r.rho2 * pt.g * l * R * d.xz;
  }
  return out;
}

double q_pi(const PointTerms& pt, const Derivs& v, double eps, double delta, double pi) {
  const double s = pt.sigma, l = pt.lambda;
  const CorrelationTriple& r = pt.rho;
  return v.t + 0.5 * s * s * pi * pi * v.xx +
         pi * s * (l * v.x + r.rho1 * pt.a * v.xy / std::sqrt(eps) + std::sqrt(delta) * r.rho2 * pt.g * v.xz) +
         (0.5 * pt.a * pt.a * v.yy + pt.b * v.y) / eps + delta * (0.5 * pt.g * pt.g * v.zz + pt.c * v.z) +
         std::sqrt(delta / eps) * r.rho12 * pt.a * pt.g * v.yz;
}

QHat q_hat(const PointTerms& pt, const Derivs& v, double eps, double delta) {
  if (!(eps > 0.0) || delta < 0.0) throw std::invalid_argument("Q operator needs eps > 0 and delta >= 0");
  QHat q;
  q.vxx = v.xx;
  if (!(v.xx < 0.0)) throw ConcavityError("candidate is not concave in wealth (V_xx >= 0)");
  const CorrelationTriple& r = pt.rho;
  const double drive =
      pt.lambda * v.x + r.rho1 * pt.a * v.xy / std::sqrt(eps) + std::sqrt(delta) * r.rho2 * pt.g * v.xz;
  q.value = v.t + (0.5 * pt.a * pt.a * v.yy + pt.b * v.y) / eps + delta * (0.5 * pt.g * pt.g * v.zz + pt.c * v.z) +
            std::sqrt(delta / eps) * r.rho12 * pt.a * pt.g * v.yz - drive * drive / (2.0 * v.xx);
  q.pi_star = -drive / (pt.sigma * v.xx);
  return q;
}

QHat q_hat(const PointTerms& pt, double eps, double delta, const Constants& k) {
  return q_hat(pt, pt.assemble(eps, delta, k), eps, delta);
}

double pi_star(const PointTerms& pt, double eps, double delta, const Constants& k) {
  return q_hat(pt, eps, delta, k).pi_star;
}

std::vector<PointTerms> CandidateSolution::column(double t, double x, double z, const std::vector<double>& ys) const {
  const ModelSpec& spec = e_->spec();
  const ThetaLattice& lat = e_->lattice(z);
  const double h = lat.h();

  struct Level {
    const ThetaBundle* b = nullptr;
    std::vector<Piece> pieces;
    std::vector<std::array<double, 4>> psi;  // value, x, xx, t
    double R = 0;
  };
  std::array<Level, 5> lv;
  for (int k = -2; k <= 2; ++k) {
    Level& L = lv[k + 2];
    L.b = &lat.bundle(k);
    const MertonField field(e_->kernel(), L.b->lambda_bar, spec.T());
    const MertonComposites mc = merton_composites(field, t, x);
    L.R = mc.loc.R();
    L.pieces = expansion_pieces(mc, *L.b, spec);
    const CorrectorSet cs = build_correctors(mc, *L.b, spec, side_);
    L.pieces.insert(L.pieces.end(), cs.pieces.begin(), cs.pieces.end());
    const double l2 = L.b->lambda_bar * L.b->lambda_bar;
    for (const Piece& p : L.pieces) {
      const SJet px = dx(p.psi, mc.loc);
      L.psi.push_back({val(p.psi), val(px), val(dx(px, mc.loc)), -l2 * val(ds_at_x(p.psi, mc.loc))});
    }
  }

  const std::size_t np = lv[2].pieces.size();
  std::vector<Piece> meta = lv[2].pieces;
  for (Piece& p : meta) p.psi = SJet{};

  std::vector<PointTerms> out;
  out.reserve(ys.size());
  for (double y : ys) {
    // theta_i and its y-derivatives at each level, computed on first use.
    std::array<std::array<std::array<double, 3>, 12>, 5> th{};
    std::array<std::array<bool, 12>, 5> have{};
    auto phi = [&](int level, int i) -> const std::array<double, 3>& {
      if (!have[level][i]) {
        const PoissonSolution& s = lv[level].b->th(i);
        th[level][i] = {s.value(y), s.dy(y), s.dyy(y)};
        have[level][i] = true;
      }
      return th[level][i];
    };
    PointTerms pt;
    pt.p = {t, x, y, z};
    pt.side = side_;
    pt.meta = meta;
    pt.d.resize(np);
    for (std::size_t j = 0; j < np; ++j) {
      const int i = meta[j].theta;
      std::array<double, 5> F, X, Y;
      for (int k = 0; k < 5; ++k) {
        const std::array<double, 3> f = i < 0 ? std::array<double, 3>{1.0, 0.0, 0.0} : phi(k, i);
        const auto& s = lv[k].psi[j];
        F[k] = f[0] * s[0];
        X[k] = f[0] * s[1];
        Y[k] = f[1] * s[0];
      }
      const std::array<double, 3> f = i < 0 ? std::array<double, 3>{1.0, 0.0, 0.0} : phi(2, i);
      const auto& s = lv[2].psi[j];
      Derivs& d = pt.d[j];
      d.v = F[2];
      d.t = f[0] * s[3];
      d.x = X[2];
      d.xx = f[0] * s[2];
      d.y = Y[2];
      d.yy = f[2] * s[0];
      d.xy = f[1] * s[1];
      d.z = fd1(F, h);
      d.zz = fd2(F, h);
      d.xz = fd1(X, h);
      d.yz = fd1(Y, h);
    }
    pt.lambda = spec.lambda(y, z);
    pt.sigma = spec.sigma(y, z);
    pt.R = lv[2].R;
    pt.a = spec.a(y);
    pt.b = spec.b(y);
    pt.c = spec.c(z);
    pt.g = spec.g(z);
    pt.rho = spec.correlations();
    out.push_back(std::move(pt));
  }
  return out;
}

PointTerms CandidateSolution::terms(const Point& p) const { return column(p.t, p.x, p.z, {p.y}).front(); }

double CandidateSolution::value(const Point& p, double eps, double delta, const Constants& k) const {
  return terms(p).assemble(eps, delta, k).v;
}

VerificationGrid default_grid(const ModelSpec& spec, int nx, int ny, int nz) {
  VerificationGrid g;
  const double T = spec.T();
  g.ts = {0.0, 0.25 * T, 0.5 * T, 0.75 * T, T - 1e-3 * T};
  for (int i = 0; i < nx; ++i) g.xs.push_back(std::pow(10.0, nx == 1 ? 0.0 : -1.0 + 2.0 * i / (nx - 1)));
  auto spread = [](double m, double sd, int n) {
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back(n == 1 ? m : m - 4.0 * sd + 8.0 * sd * i / (n - 1));
    return v;
  };
  g.ys = spread(spec.y_mean(), spec.y_sd(), ny);
  g.zs = spread(spec.z_mean(), spec.z_sd(), nz);
  return g;
}

namespace {

// Builds all columns of a grid for one side, one task per slow level.
std::vector<PointTerms> scan_side(const CandidateSolution& cand, const std::vector<double>& ts,
                                  const VerificationGrid& grid) {
  std::vector<std::future<std::vector<PointTerms>>> jobs;
  for (double z : grid.zs) {
    jobs.push_back(std::async(std::launch::async, [&, z] {
      std::vector<PointTerms> part;
      for (double t : ts)
        for (double x : grid.xs) {
          auto col = cand.column(t, x, z, grid.ys);
          for (auto& pt : col) part.push_back(std::move(pt));
        }
      return part;
    }));
  }
  std::vector<PointTerms> all;
  for (auto& j : jobs) {
    auto part = j.get();
    for (auto& pt : part) all.push_back(std::move(pt));
  }
  return all;
}

// Correction to U(x) at the horizon: everything but the leading piece.
double terminal_correction(const PointTerms& pt, double eps, double delta, const Constants& k) {
  double c = 0.0;
  for (std::size_t j = 0; j < pt.d.size(); ++j)
    if (pt.meta[j].term != Term::V0) c += weight(pt.meta[j], eps, delta, k) * pt.d[j].v;
  return c;
}

}  // namespace

TerminalReport terminal_dominance_check(const Expansion& e, double eps, double delta, const Constants& k,
                                        const VerificationGrid& grid) {
  const std::vector<double> tT{e.spec().T()};
  TerminalReport r;
  r.sub_margin = r.super_margin = std::numeric_limits<double>::infinity();
  for (const auto& pt : scan_side(CandidateSolution(e, Side::Sub), tT, grid))
    r.sub_margin = std::min(r.sub_margin, -terminal_correction(pt, eps, delta, k));
  for (const auto& pt : scan_side(CandidateSolution(e, Side::Super), tT, grid))
    r.super_margin = std::min(r.super_margin, terminal_correction(pt, eps, delta, k));
  return r;
}

GridScan::GridScan(const Expansion& e, double eps, double delta, const VerificationGrid& grid)
    : eps_(eps), delta_(delta) {
  if (!(eps > 0.0 && eps < 1.0) || !(delta >= 0.0 && delta < 1.0))
    throw std::invalid_argument("verification needs eps in (0, 1) and delta in [0, 1)");
  const CandidateSolution sub(e, Side::Sub), super(e, Side::Super);
  const std::vector<double> tT{e.spec().T()};
  sub_ = scan_side(sub, grid.ts, grid);
  super_ = scan_side(super, grid.ts, grid);
  terminal_sub_ = scan_side(sub, tT, grid);
  terminal_super_ = scan_side(super, tT, grid);
}

VerificationReport GridScan::evaluate(const Constants& k) const {
  constexpr double inf = std::numeric_limits<double>::infinity();
  VerificationReport r;
  r.constants = k;
  r.eps = eps_;
  r.delta = delta_;
  r.min_q_sub = inf;
  r.max_q_super = -inf;
  r.max_vxx_super = -inf;
  r.terminal_sub = r.terminal_super = inf;
  r.min_gap = inf;
  r.max_gap_ratio = -inf;
  for (std::size_t i = 0; i < sub_.size(); ++i) {
    const Derivs vm = sub_[i].assemble(eps_, delta_, k);
    const Derivs vp = super_[i].assemble(eps_, delta_, k);
    r.min_q_sub = std::min(r.min_q_sub, q_pi0(sub_[i], vm, eps_, delta_));
    r.max_vxx_super = std::max(r.max_vxx_super, vp.xx);
    if (vp.xx < 0.0)
      r.max_q_super = std::max(r.max_q_super, q_hat(super_[i], vp, eps_, delta_).value);
    else
      r.max_q_super = inf;
    const double gap = vp.v - vm.v;
    r.min_gap = std::min(r.min_gap, gap);
    r.max_gap_ratio = std::max(r.max_gap_ratio, gap / (eps_ + delta_));
  }
  for (std::size_t i = 0; i < terminal_sub_.size(); ++i) {
    const double cm = terminal_correction(terminal_sub_[i], eps_, delta_, k);
    const double cp = terminal_correction(terminal_super_[i], eps_, delta_, k);
    r.terminal_sub = std::min(r.terminal_sub, -cm);
    r.terminal_super = std::min(r.terminal_super, cp);
    r.min_gap = std::min(r.min_gap, cp - cm);
  }
  r.points = sub_.size() + terminal_sub_.size();
  return r;
}

namespace {

std::string first_violation(const VerificationReport& r) {
  if (!(r.min_q_sub >= 0.0)) return "sub_generator";
  if (!(r.terminal_sub >= 0.0)) return "sub_terminal";
  if (!(r.max_vxx_super < 0.0)) return "super_concavity";
  if (!(r.max_q_super <= 0.0)) return "super_generator";
  if (!(r.terminal_super >= 0.0)) return "super_terminal";
  return "";
}

}  // namespace

VerificationReport calibrate_constants(const Expansion& e, double eps, double delta, const VerificationGrid& grid) {
  const GridScan scan(e, eps, delta, grid);
  std::string binding = "none";
  int doublings = 0;
  for (double c = 1.0; c <= std::ldexp(1.0, 20); c *= 2.0, ++doublings) {
    VerificationReport r = scan.evaluate(Constants::common(c));
    const std::string v = first_violation(r);
    if (v.empty()) {
      r.calibrated = true;
      r.binding = binding;
      r.doublings = doublings;
      return r;
    }
    binding = v;
  }
  throw std::runtime_error("eps/delta too large for verification: constraint '" + binding +
                           "' still violated at C = 2^20");
}

}  // namespace mm

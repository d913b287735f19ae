#include "mm/expansion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mm {
namespace {

constexpr int kConstOrder = 32;

SJet sconst(double re, double ds = 0.0) {
  return {JetD::constant(re, kConstOrder), JetD::constant(ds, kConstOrder)};
}

double fd5(double fm2, double fm1, double fp1, double fp2, double h) {
  return (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * h);
}

}  // namespace

MertonComposites merton_composites(const MertonField& field, double t, double x) {
  if (t > field.T()) throw std::domain_error("time beyond the horizon");
  MertonComposites mc;
  mc.loc = field.local(t, x);
  mc.lambda_bar = field.lambda_bar();
  const double tau = field.T() - t;
  const double dtau_ds = 1.0 / (mc.lambda_bar * mc.lambda_bar);
  mc.tau = sconst(tau, dtau_ds);
  mc.tau2 = sconst(field.T() + tau, dtau_ds);
  const MertonLocal& loc = mc.loc;
  mc.m = loc.m;
  mc.P1 = d1(mc.m);
  mc.P2 = d1(mc.P1);
  mc.P3 = d1(mc.P2);
  mc.Q1 = 0.5 * d2(mc.P1, loc) + d1(mc.P1);
  mc.Q2 = 0.5 * d2(mc.P2, loc) + mc.P3;
  mc.S = d1(mc.Q2);
  return mc;
}

SJet MertonComposites::dz_composite(const SJet& f, double lambda_bar_p) const {
  const SJet s_z = (2.0 * lambda_bar * lambda_bar_p) * tau;
  return s_z * (0.5 * d2(f, loc) + d1(f));
}

std::vector<Piece> expansion_pieces(const MertonComposites& mc, const ThetaBundle& b, const ModelSpec& spec) {
  const CorrelationTriple& r = spec.correlations();
  const double g = spec.g(b.z);
  const double K = b.lambda_hat * b.lambda_bar * b.lambda_bar_p * g;
  const double lbp = b.lambda_bar * b.lambda_bar_p;
  const SJet tau2sq = mc.tau * mc.tau;
  std::vector<Piece> p;
  p.push_back({Term::V0, 0, 0, -1, -1, mc.m});
  p.push_back({Term::V10, 1, 0, -1, -1, (-0.5 * r.rho1 * b.B) * mc.tau * mc.P2});
  p.push_back({Term::V01, 0, 1, -1, -1, (0.5 * r.rho2 * K) * tau2sq * mc.P2});
  p.push_back({Term::W20, 2, 0, 0, -1, -0.5 * mc.P1});
  p.push_back({Term::W30, 3, 0, 0, -1, (0.5 * r.rho1 * b.B) * mc.tau * mc.Q2});
  p.push_back({Term::W30, 3, 0, 1, -1, (0.5 * r.rho1) * mc.P2});
  p.push_back({Term::W11, 2, 1, 0, -1, (-0.5 * r.rho2 * K) * tau2sq * mc.Q2});
  p.push_back({Term::W11, 2, 1, 2, -1, (-r.rho2 * g * lbp) * mc.tau * mc.P2});
  return p;
}

double term_value(const std::vector<Piece>& pieces, Term term, const ThetaBundle& b, double y) {
  double v = 0.0;
  for (const Piece& p : pieces) {
    if (p.term != term) continue;
    const double phi = p.theta < 0 ? 1.0 : b.th(p.theta).value(y);
    v += phi * val(p.psi);
  }
  return v;
}

double first_order_fast(const MertonField& field, const ThetaBundle& b, double rho1, double t, double x) {
  return -0.5 * (field.T() - t) * rho1 * b.B * apply_dk(field, {DOp::D1, DOp::D1}, t, x);
}

double first_order_slow(const MertonField& field, const ThetaBundle& b, double rho2, double g, double t, double x) {
  const double tau = field.T() - t;
  return 0.5 * tau * tau * rho2 * b.lambda_hat * b.lambda_bar * b.lambda_bar_p * g *
         apply_dk(field, {DOp::D1, DOp::D1}, t, x);
}

double first_order_slow_via_vz(const MertonField& field, const ThetaBundle& b, double rho2, double g, double t,
                               double x) {
  return 0.5 * (field.T() - t) * rho2 * b.lambda_hat * g *
         apply_dk(field, {DOp::D1, DOp::Dz}, t, x, b.lambda_bar_p);
}

WTerms w_terms(const MertonField& field, const ThetaBundle& b, const ModelSpec& spec, double t, double x, double y,
               double) {
  const MertonComposites mc = merton_composites(field, t, x);
  const auto pieces = expansion_pieces(mc, b, spec);
  return {term_value(pieces, Term::W20, b, y), term_value(pieces, Term::W30, b, y),
          term_value(pieces, Term::W11, b, y)};
}

double zeroth_strategy(const MertonField& field, const ModelSpec& spec, const Point& p) {
  const double sigma = spec.sigma(p.y, p.z);
  if (!(sigma > 0.0)) throw std::domain_error("zeroth-order strategy needs sigma > 0");
  const double lambda = spec.lambda(p.y, p.z);
  if (lambda == 0.0) return 0.0;
  return lambda / sigma * field.R(p.t, p.x);
}

Expansion::Expansion(const ModelSpec& spec, const UtilitySpec& utility) : spec_(spec), kernel_(utility) {}

const ThetaLattice& Expansion::lattice(double z) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto& slot = lattices_[z];
  if (!slot) slot = std::make_unique<ThetaLattice>(spec_, z);
  return *slot;
}

double Expansion::v0(double t, double x, double z) const { return merton(z).value(t, x); }

double Expansion::v10(double t, double x, double z) const {
  const ThetaBundle& b = bundle(z);
  return first_order_fast(merton(b), b, spec_.correlations().rho1, t, x);
}

double Expansion::v01(double t, double x, double z) const {
  const ThetaBundle& b = bundle(z);
  return first_order_slow(merton(b), b, spec_.correlations().rho2, spec_.g(z), t, x);
}

WTerms Expansion::w(const Point& p) const {
  const ThetaBundle& b = bundle(p.z);
  return w_terms(merton(b), b, spec_, p.t, p.x, p.y, p.z);
}

double Expansion::approx(const Point& p, double eps, double delta) const {
  const double slow = delta > 0.0 ? v01(p.t, p.x, p.z) : 0.0;
  return approx_value(v0(p.t, p.x, p.z), v10(p.t, p.x, p.z), slow, eps, delta);
}

double Expansion::pi0(const Point& p) const { return mm::zeroth_strategy(merton(p.z), spec_, p); }

StrategyField Expansion::zeroth_strategy() const {
  StrategyField f;
  f.pi = [this](double t, double x, double y, double z) { return pi0({t, x, y, z}); };
  f.order = "zeroth";
  f.model = spec_.catalog_name();
  return f;
}

VegaGammaReport vega_gamma_residual(const HeatKernel& kernel, double T, const std::function<double(double)>& lambda_bar,
                                    const std::function<double(double)>& lambda_bar_p, const std::vector<double>& zs,
                                    const std::vector<double>& ts, const std::vector<double>& xs, double h) {
  VegaGammaReport rep;
  for (double z : zs) {
    std::vector<MertonField> f;
    for (int j = -2; j <= 2; ++j) f.emplace_back(kernel, lambda_bar(z + j * h), T);
    const MertonField& c = f[2];
    const double lb = lambda_bar(z), lbp = lambda_bar_p(z);
    for (double t : ts) {
      for (double x : xs) {
        const double tau = T - t;
        const double vz =
            fd5(f[0].value(t, x), f[1].value(t, x), f[3].value(t, x), f[4].value(t, x), h);
        const double rz = fd5(f[0].R(t, x), f[1].R(t, x), f[3].R(t, x), f[4].R(t, x), h);
        const MertonLocal loc = c.local(t, x);
        const SJet R = d1(loc.H);
        const double R0 = val(R);
        const double Rxx = val(dx(dx(R, loc), loc));
        const double D1v = val(d1(loc.m));
        rep.max_vz = std::max(rep.max_vz, std::abs(vz - tau * lb * lbp * D1v));
        rep.max_rz = std::max(rep.max_rz, std::abs(rz - tau * lb * lbp * R0 * R0 * Rxx));
        ++rep.points;
      }
    }
  }
  return rep;
}

VegaGammaReport vega_gamma_residual(const Expansion& e, const std::vector<double>& zs, const std::vector<double>& ts,
                                    const std::vector<double>& xs, double h) {
  const ModelSpec& spec = e.spec();
  const InvariantDensity d = invariant_density(spec);
  auto lb = [&](double z) {
    return std::sqrt(d.average_panels([&](double y) {
      const double l = spec.lambda(y, z);
      return l * l;
    }));
  };
  auto lbp = [&](double z) {
    return d.average_panels([&](double y) { return spec.lambda(y, z) * spec.lambda_z(y, z); }) / lb(z);
  };
  return vega_gamma_residual(e.kernel(), spec.T(), lb, lbp, zs, ts, xs, h);
}

}  // namespace mm

#pragma once

#include "mm/averaging.hpp"
#include "mm/merton.hpp"
#include "mm/model.hpp"
#include "mm/utility.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace mm {

struct Point {
  double t = 0, x = 1, y = 0, z = 0;
};

/// Additive terms of the approximations. Each term is a sum of pieces
///   weight(eps, delta) * theta_i(y, z) * psi(t, x, z).
enum class Term { V0, V10, V01, W20, W30, W11, NA, NB, NC, F, G, H };

struct Piece {
  Term term = Term::V0;
  int eps2 = 0, delta2 = 0;  // weight eps^{eps2/2} delta^{delta2/2}
  int theta = -1;            // y-factor theta_i, -1 for none
  int channel = -1;          // scaled by C_A, C_B, C_C (0, 1, 2), -1 for none
  SJet psi;                  // (t, x)-factor with its coefficient and sign
};

/// Merton composites at one (t, x) and slow level. tau = T - t and
/// tau2 = 2T - t carry their s-tangent, so psi_t = -lambda_bar^2 ds_at_x(psi).
struct MertonComposites {
  MertonLocal loc;
  double lambda_bar = 0;
  SJet tau, tau2;
  SJet m;   // v0
  SJet P1;  // D1 v0
  SJet P2;  // D1^2 v0
  SJet P3;  // D1^3 v0
  SJet Q1;  // (D2/2 + D1) D1 v0
  SJet Q2;  // (D2/2 + D1) D1^2 v0
  SJet S;   // D1 (D2/2 + D1) D1^2 v0

  /// d/dz at fixed x of a pure D-composite of v0 whose s-derivative is
  /// (D2/2 + D1) applied to it.
  SJet dz_composite(const SJet& f, double lambda_bar_p) const;
};

MertonComposites merton_composites(const MertonField& field, double t, double x);

/// v0, v10, v01, w20, w30, w11 as pieces.
std::vector<Piece> expansion_pieces(const MertonComposites& mc, const ThetaBundle& b, const ModelSpec& spec);

/// Unweighted value of a piece set restricted to one term.
double term_value(const std::vector<Piece>& pieces, Term term, const ThetaBundle& b, double y);

/// Point operations on a fixed Merton field and theta bundle.
double first_order_fast(const MertonField& field, const ThetaBundle& b, double rho1, double t, double x);
double first_order_slow(const MertonField& field, const ThetaBundle& b, double rho2, double g, double t, double x);
/// The same correction written as (T - t) rho2 lambda_hat g D1 v0_z / 2.
double first_order_slow_via_vz(const MertonField& field, const ThetaBundle& b, double rho2, double g, double t,
                               double x);

struct WTerms {
  double w20 = 0, w30 = 0, w11 = 0;
};
WTerms w_terms(const MertonField& field, const ThetaBundle& b, const ModelSpec& spec, double t, double x, double y,
               double z);

/// (lambda / sigma) R(t, x; lambda_bar(z)).
double zeroth_strategy(const MertonField& field, const ModelSpec& spec, const Point& p);

/// v0 + sqrt(eps) v10 + sqrt(delta) v01.
inline double approx_value(double v0, double v10, double v01, double eps, double delta) {
  if (eps < 0 || delta < 0) throw std::invalid_argument("scales must be non-negative");
  return v0 + std::sqrt(eps) * v10 + std::sqrt(delta) * v01;
}

struct StrategyField {
  std::function<double(double t, double x, double y, double z)> pi;
  std::string order;
  std::string model;
};

/// Owns the Merton kernel and the theta lattices for one model and utility.
/// Lattices are built lazily per slow level z and cached; thread safe.
class Expansion {
 public:
  Expansion(const ModelSpec& spec, const UtilitySpec& utility);
  Expansion(const Expansion&) = delete;
  Expansion& operator=(const Expansion&) = delete;

  const ModelSpec& spec() const { return spec_; }
  const HeatKernel& kernel() const { return kernel_; }
  const UtilitySpec& utility() const { return kernel_.utility(); }

  const ThetaLattice& lattice(double z) const;
  const ThetaBundle& bundle(double z) const { return lattice(z).bundle(0); }
  MertonField merton(const ThetaBundle& b) const { return MertonField(kernel_, b.lambda_bar, spec_.T()); }
  MertonField merton(double z) const { return merton(bundle(z)); }

  double v0(double t, double x, double z) const;
  double v10(double t, double x, double z) const;
  double v01(double t, double x, double z) const;
  WTerms w(const Point& p) const;
  /// v0 + sqrt(eps) v10 + sqrt(delta) v01.
  double approx(const Point& p, double eps, double delta) const;
  double pi0(const Point& p) const;
  StrategyField zeroth_strategy() const;

 private:
  ModelSpec spec_;
  HeatKernel kernel_;
  mutable std::mutex mu_;
  mutable std::map<double, std::unique_ptr<ThetaLattice>> lattices_;
};

struct VegaGammaReport {
  double max_vz = 0;  // |v0_z - (T - t) lambda_bar lambda_bar' D1 v0|
  double max_rz = 0;  // |R_z - (T - t) lambda_bar lambda_bar' R^2 R_xx|
  int points = 0;
};

/// Identities for z-derivatives of the leading term, with v0_z and R_z from
/// 5-point differences of step h in z.
VegaGammaReport vega_gamma_residual(const HeatKernel& kernel, double T, const std::function<double(double)>& lambda_bar,
                                    const std::function<double(double)>& lambda_bar_p, const std::vector<double>& zs,
                                    const std::vector<double>& ts, const std::vector<double>& xs, double h = 1e-3);

/// Same, with lambda_bar(z) averaged from the model.
VegaGammaReport vega_gamma_residual(const Expansion& e, const std::vector<double>& zs, const std::vector<double>& ts,
                                    const std::vector<double>& xs, double h = 1e-3);

}  // namespace mm

#pragma once

#include "mm/expansion.hpp"

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mm {

enum class Side { Sub, Super };

struct Constants {
  double A = 0, B = 0, C = 0;
  double operator[](int i) const { return i == 0 ? A : (i == 1 ? B : C); }
  static Constants common(double c) { return {c, c, c}; }
};

class ConcavityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// N, F, G, H pieces of V- or V+ at one slow level, with the sign they carry
/// in the candidate:
///   V-+ = v0 + sqrt(eps) v10 + sqrt(delta) v01 + eps w20 + eps^{3/2} w30 + eps sqrt(delta) w11
///         -+ (2T - t)(eps N_A + delta N_B + sqrt(eps delta) N_C)
///         -+ eps^2 F -+ eps^{3/2} sqrt(delta) H -+ eps delta G.
struct CorrectorSet {
  Side side = Side::Sub;
  std::vector<Piece> pieces;
};

CorrectorSet build_correctors(const MertonComposites& mc, const ThetaBundle& b, const ModelSpec& spec, Side side);

struct Derivs {
  double v = 0, t = 0, x = 0, xx = 0, y = 0, yy = 0, xy = 0, z = 0, zz = 0, xz = 0, yz = 0;

  Derivs& operator+=(const Derivs& o);
  friend Derivs operator*(double s, Derivs d);
};

/// Every piece of a candidate, differentiated at one point.
struct PointTerms {
  Point p;
  Side side = Side::Sub;
  std::vector<Piece> meta;  // psi left empty
  std::vector<Derivs> d;
  double lambda = 0, sigma = 0, R = 0, a = 0, b = 0, c = 0, g = 0;
  CorrelationTriple rho;

  /// Weighted sum of all pieces.
  Derivs assemble(double eps, double delta, const Constants& k) const;
  /// Unweighted value of one term, channels at unit constants.
  double term(Term t) const;
};

/// Q^{pi0}[V] = L_{t,x}(lambda) V + L_y V / eps + delta L_z V + sqrt(delta/eps) rho12 a g V_yz
///             + rho1 a lambda D1 V_y / sqrt(eps) + sqrt(delta) rho2 g lambda D1 V_z.
double q_pi0(const PointTerms& pt, double eps, double delta, const Constants& k);
double q_pi0(const PointTerms& pt, const Derivs& v, double eps, double delta);

/// Q^{pi0}[V] split by the powers eps^{i/2} delta^{j/2}, keyed (i, j).
std::map<std::pair<int, int>, double> q_pi0_orders(const PointTerms& pt, const Constants& k);

/// Q^pi[V] for an arbitrary position pi (amount held in the risky asset).
double q_pi(const PointTerms& pt, const Derivs& v, double eps, double delta, double pi);

struct QHat {
  double value = 0;  // sup over pi of Q^pi[V]
  double vxx = 0;    // concavity margin, must be negative
  double pi_star = 0;
};

/// Supremum of Q^pi[V] at the first-order maximizer. Throws ConcavityError
/// when V_xx >= 0.
QHat q_hat(const PointTerms& pt, const Derivs& v, double eps, double delta);
QHat q_hat(const PointTerms& pt, double eps, double delta, const Constants& k);
double pi_star(const PointTerms& pt, double eps, double delta, const Constants& k);

/// Evaluates candidate pieces through the theta lattice of the expansion.
class CandidateSolution {
 public:
  CandidateSolution(const Expansion& e, Side side) : e_(&e), side_(side) {}

  Side side() const { return side_; }
  const Expansion& expansion() const { return *e_; }

  PointTerms terms(const Point& p) const;
  /// One (t, x, z) column over several y, sharing the Merton composites.
  std::vector<PointTerms> column(double t, double x, double z, const std::vector<double>& ys) const;

  double value(const Point& p, double eps, double delta, const Constants& k) const;

 private:
  const Expansion* e_;
  Side side_;
};

struct VerificationGrid {
  std::vector<double> ts, xs, ys, zs;
  std::size_t size() const { return ts.size() * xs.size() * ys.size() * zs.size(); }
};

/// t in {0, T/4, T/2, 3T/4, T - T/1000}, x log-spaced on [0.1, 10], y and z
/// over +-4 invariant standard deviations.
VerificationGrid default_grid(const ModelSpec& spec, int nx = 7, int ny = 9, int nz = 5);

struct TerminalReport {
  double sub_margin = 0;    // min U(x) - V-(T, x, y, z)
  double super_margin = 0;  // min V+(T, x, y, z) - U(x)
};

TerminalReport terminal_dominance_check(const Expansion& e, double eps, double delta, const Constants& k,
                                        const VerificationGrid& grid);

struct VerificationReport {
  Constants constants;
  double min_q_sub = 0;       // min Q^{pi0}[V-]
  double max_q_super = 0;     // max sup_pi Q^pi[V+]
  double max_vxx_super = 0;   // max V+_xx
  double terminal_sub = 0;    // min U - V-(T)
  double terminal_super = 0;  // min V+(T) - U
  double min_gap = 0;         // min V+ - V-
  double max_gap_ratio = 0;   // max (V+ - V-) / (eps + delta)
  double eps = 0, delta = 0;
  std::string binding;        // constraint that forced the last doubling
  bool calibrated = false;
  int doublings = 0;
  std::size_t points = 0;
};

/// Grid values of both candidates, precomputed once so that constants can be
/// searched cheaply.
class GridScan {
 public:
  GridScan(const Expansion& e, double eps, double delta, const VerificationGrid& grid);

  VerificationReport evaluate(const Constants& k) const;
  double eps() const { return eps_; }
  double delta() const { return delta_; }

 private:
  double eps_, delta_;
  std::vector<PointTerms> sub_, super_;
  std::vector<PointTerms> terminal_sub_, terminal_super_;
};

/// Doubling search over a common constant C = 1, 2, 4, ..., 2^20 until
/// Q^{pi0}[V-] >= 0, Q-hat[V+] <= 0, V+_xx < 0 and both terminal conditions
/// hold on the grid. Throws std::runtime_error past the cap.
VerificationReport calibrate_constants(const Expansion& e, double eps, double delta, const VerificationGrid& grid);

}  // namespace mm

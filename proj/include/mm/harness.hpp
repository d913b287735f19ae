#pragma once

#include "mm/montecarlo.hpp"
#include "mm/oracle.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mm {

enum class OracleKind { Distortion, MonteCarlo };

struct DeltaRule {
  enum class Kind { Coupled, Fixed, Ladder } kind = Kind::Coupled;
  double value = 1.0;          // factor c in delta = c eps, or the fixed delta
  std::vector<double> ladder;  // paired with the eps ladder
};

struct SweepConfig {
  ModelConfig model;
  UtilityConfig utility;
  std::vector<double> eps_ladder;
  DeltaRule delta;
  std::vector<Point> points;
  OracleKind oracle = OracleKind::Distortion;
  DistortionOptions distortion;
  SimConfig sim;
  bool simulate = false;  // attach Monte Carlo estimates to distortion rows
  bool verify = false;    // calibrate sub/super constants per ladder point
  int grid_nx = 7, grid_ny = 9, grid_nz = 5;
};

/// Parses the TOML tables [model], [utility], [sweep], [simulation],
/// [oracle] and [verify]. Throws ConfigError on any invalid entry.
SweepConfig parse_config(std::string_view toml);
SweepConfig load_config(const std::filesystem::path& path);

/// delta for each ladder point.
std::vector<double> delta_ladder(const SweepConfig& cfg);

struct AccuracyRow {
  double eps = 0, delta = 0;
  int point = 0;
  double approx = 0;
  double oracle = 0;
  double error = 0;
  bool oracle_ok = false;
  double mc_mean = 0, mc_half_width = 0, mc_std_error = 0;
  bool has_mc = false;
  bool verified = false;
  Constants constants;
  double min_q_sub = 0, max_q_super = 0, terminal_sub = 0, terminal_super = 0, max_gap_ratio = 0;
  bool has_verify = false;
  std::string status = "ok";
};

struct SlopeFit {
  double slope = 0, intercept = 0, slope_se = 0;
  int rows = 0;
  std::string status = "ok";  // "degenerate: zero error", "insufficient rows"
};

struct AccuracyReport {
  std::vector<Point> points;
  std::vector<AccuracyRow> rows;
  std::vector<SlopeFit> fits;  // one per evaluation point
  std::string oracle;
  std::string model;
  std::string utility;
};

/// Least squares of log|error| on log(eps + delta).
SlopeFit fit_slope(const std::vector<double>& scale, const std::vector<double>& error);

AccuracyReport run_sweep(const SweepConfig& cfg);

/// report.csv, report.json and errors.dat (two columns per point, blank-line separated).
void emit_report(const AccuracyReport& r, const std::filesystem::path& dir);

std::string report_csv(const AccuracyReport& r);
std::string report_json(const AccuracyReport& r);
AccuracyReport report_from_json(std::string_view json);

/// Decimal with 12 significant digits.
std::string fmt12(double v);
double round12(double v);

}  // namespace mm

#include "mm/harness.hpp"

#include <Eigen/LU>
#include <Eigen/QR>
#include <nlohmann/json.hpp>
#include <toml.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <sstream>

namespace mm {
namespace {

using json = nlohmann::json;

double number(const toml::node& n, const std::string& key) {
  if (auto v = n.value<double>()) return *v;
  throw ConfigError("'" + key + "' must be a number");
}

std::vector<double> numbers(const toml::node& n, const std::string& key) {
  const toml::array* a = n.as_array();
  if (!a) throw ConfigError("'" + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const toml::node& e : *a) out.push_back(number(e, key));
  return out;
}

std::string text(const toml::node& n, const std::string& key) {
  if (auto v = n.value<std::string>()) return *v;
  throw ConfigError("'" + key + "' must be a string");
}

bool flag(const toml::node& n, const std::string& key) {
  if (auto v = n.value<bool>()) return *v;
  throw ConfigError("'" + key + "' must be true or false");
}

long long integer(const toml::node& n, const std::string& key) {
  if (auto v = n.value_exact<int64_t>()) return *v;
  throw ConfigError("'" + key + "' must be an integer");
}

[[noreturn]] void unknown(const std::string& table, std::string_view key) {
  throw ConfigError("unknown key '" + std::string(key) + "' in [" + table + "]");
}

json num(double v) { return std::isfinite(v) ? json(round12(v)) : json(nullptr); }

double get(const json& j, const char* key) { return j.at(key).is_null() ? NAN : j.at(key).get<double>(); }

std::string csv_field(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (c == ',' || c == '\n') c = ';';
  return out;
}

UtilitySpec checked_utility(const UtilityConfig& c) {
  try {
    return make_utility(c);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

std::string fmt12(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

double round12(double v) { return std::isfinite(v) ? std::stod(fmt12(v)) : v; }

SweepConfig parse_config(std::string_view source) {
  toml::table root;
  try {
    root = toml::parse(source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "TOML parse error: " << e.description() << " at line " << e.source().begin.line;
    throw ConfigError(os.str());
  }
  SweepConfig cfg;
  bool point_given = false;
  for (auto&& [key, node] : root) {
    const std::string table(key.str());
    const toml::table* t = node.as_table();
    if (!t) throw ConfigError("top-level key '" + table + "' must be a table");
    if (table == "model") {
      for (auto&& [k, v] : *t) {
        const std::string name(k.str());
        if (name == "catalog") cfg.model.catalog = text(v, name);
        else if (name == "rho1") cfg.model.correlations.rho1 = number(v, name);
        else if (name == "rho2") cfg.model.correlations.rho2 = number(v, name);
        else if (name == "rho12") cfg.model.correlations.rho12 = number(v, name);
        else if (name == "eps") cfg.model.eps = number(v, name);
        else if (name == "delta") cfg.model.delta = number(v, name);
        else if (name == "T") cfg.model.T = number(v, name);
        else cfg.model.params[name] = number(v, name);
      }
    } else if (table == "utility") {
      for (auto&& [k, v] : *t) {
        const std::string name(k.str());
        if (name == "family") cfg.utility.family = text(v, name);
        else if (name == "gamma") cfg.utility.gamma = number(v, name);
        else if (name == "weights") cfg.utility.weights = numbers(v, name);
        else if (name == "gammas") cfg.utility.gammas = numbers(v, name);
        else unknown(table, name);
      }
    } else if (table == "sweep") {
      double eps_max = NAN, eps_min = NAN;
      for (auto&& [k, v] : *t) {
        const std::string name(k.str());
        if (name == "eps") cfg.eps_ladder = numbers(v, name);
        else if (name == "eps_max") eps_max = number(v, name);
        else if (name == "eps_min") eps_min = number(v, name);
        else if (name == "delta_rule") {
          const std::string r = text(v, name);
          if (r == "coupled") cfg.delta.kind = DeltaRule::Kind::Coupled;
          else if (r == "fixed") cfg.delta.kind = DeltaRule::Kind::Fixed;
          else if (r == "ladder") cfg.delta.kind = DeltaRule::Kind::Ladder;
          else throw ConfigError("delta_rule must be coupled, fixed or ladder");
        } else if (name == "delta_factor" || name == "delta") cfg.delta.value = number(v, name);
        else if (name == "delta_ladder") cfg.delta.ladder = numbers(v, name);
        else if (name == "oracle") {
          const std::string o = text(v, name);
          if (o == "distortion") cfg.oracle = OracleKind::Distortion;
          else if (o == "monte-carlo") cfg.oracle = OracleKind::MonteCarlo;
          else throw ConfigError("oracle must be distortion or monte-carlo");
        } else if (name == "points") {
          const toml::array* a = v.as_array();
          if (!a) throw ConfigError("points must be an array of [t, x, y, z]");
          for (const toml::node& p : *a) {
            const std::vector<double> c = numbers(p, name);
            if (c.size() != 4) throw ConfigError("each point needs four coordinates [t, x, y, z]");
            cfg.points.push_back({c[0], c[1], c[2], c[3]});
          }
          point_given = true;
        } else unknown(table, name);
      }
      if (cfg.eps_ladder.empty() && std::isfinite(eps_max) && std::isfinite(eps_min)) {
        if (!(eps_min > 0.0) || !(eps_max > eps_min)) throw ConfigError("need 0 < eps_min < eps_max");
        for (double e = eps_max; e >= eps_min * (1 - 1e-12); e /= 2) cfg.eps_ladder.push_back(e);
      }
    } else if (table == "simulation") {
      for (auto&& [k, v] : *t) {
        const std::string name(k.str());
        if (name == "paths") cfg.sim.paths = static_cast<std::size_t>(integer(v, name));
        else if (name == "steps") cfg.sim.steps = static_cast<int>(integer(v, name));
        else if (name == "seed") cfg.sim.seed = static_cast<std::uint64_t>(integer(v, name));
        else if (name == "antithetic") cfg.sim.antithetic = flag(v, name);
        else if (name == "enabled") cfg.simulate = flag(v, name);
        else unknown(table, name);
      }
      if (cfg.sim.paths < 1 || cfg.sim.steps < 1) throw ConfigError("simulation needs paths >= 1 and steps >= 1");
    } else if (table == "oracle") {
      for (auto&& [k, v] : *t) {
        const std::string name(k.str());
        if (name == "nodes") cfg.distortion.nodes = static_cast<int>(integer(v, name));
        else if (name == "steps") cfg.distortion.steps = static_cast<int>(integer(v, name));
        else if (name == "width_sd") cfg.distortion.width_sd = number(v, name);
        else if (name == "tolerance") cfg.distortion.tolerance = number(v, name);
        else unknown(table, name);
      }
    } else if (table == "verify") {
      for (auto&& [k, v] : *t) {
        const std::string name(k.str());
        if (name == "enabled") cfg.verify = flag(v, name);
        else if (name == "nx") cfg.grid_nx = static_cast<int>(integer(v, name));
        else if (name == "ny") cfg.grid_ny = static_cast<int>(integer(v, name));
        else if (name == "nz") cfg.grid_nz = static_cast<int>(integer(v, name));
        else unknown(table, name);
      }
      if (cfg.grid_nx < 2 || cfg.grid_ny < 2 || cfg.grid_nz < 1) throw ConfigError("verification grid too small");
    } else {
      throw ConfigError("unknown table [" + table + "]");
    }
  }
  if (!root.contains("model")) throw ConfigError("missing [model] table");

  // Validates the model and utility now so that errors surface as config errors.
  const ModelSpec spec = instantiate_model(cfg.model);
  checked_utility(cfg.utility);
  if (!point_given) cfg.points = {{0.0, 1.0, spec.y_mean(), spec.z_mean()}};
  if (cfg.eps_ladder.empty()) cfg.eps_ladder = {cfg.model.eps};
  for (std::size_t i = 0; i < cfg.eps_ladder.size(); ++i) {
    const double e = cfg.eps_ladder[i];
    if (!(e > 0.0 && e < 1.0)) throw ConfigError("eps ladder entries must lie in (0, 1)");
    if (i > 0 && !(e < cfg.eps_ladder[i - 1])) throw ConfigError("eps ladder must be strictly decreasing");
  }
  if (cfg.delta.kind == DeltaRule::Kind::Ladder && cfg.delta.ladder.size() != cfg.eps_ladder.size())
    throw ConfigError("delta_ladder must have one entry per eps");
  for (double d : delta_ladder(cfg))
    if (!(d >= 0.0 && d < 1.0)) throw ConfigError("delta must lie in [0, 1)");
  for (const Point& p : cfg.points) {
    if (!(p.t >= 0.0 && p.t < spec.T()) || !(p.x > 0.0)) throw ConfigError("evaluation points need 0 <= t < T, x > 0");
    if ((cfg.oracle == OracleKind::MonteCarlo || cfg.simulate) && p.t != 0.0)
      throw ConfigError("Monte Carlo evaluation points must have t = 0");
  }
  return cfg;
}

SweepConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::vector<double> delta_ladder(const SweepConfig& cfg) {
  std::vector<double> d;
  for (std::size_t i = 0; i < cfg.eps_ladder.size(); ++i) {
    switch (cfg.delta.kind) {
      case DeltaRule::Kind::Coupled: d.push_back(cfg.delta.value * cfg.eps_ladder[i]); break;
      case DeltaRule::Kind::Fixed: d.push_back(cfg.delta.value); break;
      case DeltaRule::Kind::Ladder: d.push_back(cfg.delta.ladder.at(i)); break;
    }
  }
  return d;
}

SlopeFit fit_slope(const std::vector<double>& scale, const std::vector<double>& error) {
  SlopeFit f;
  const Eigen::Index n = static_cast<Eigen::Index>(scale.size());
  f.rows = static_cast<int>(n);
  if (n < 2) {
    f.status = "insufficient rows";
    return f;
  }
  for (double e : error) {
    if (!(e > 0.0)) {
      f.status = "degenerate: zero error";
      return f;
    }
  }
  Eigen::MatrixXd A(n, 2);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    A(i, 0) = 1.0;
    A(i, 1) = std::log(scale[i]);
    b(i) = std::log(error[i]);
  }
  const Eigen::Vector2d c = A.colPivHouseholderQr().solve(b);
  f.intercept = c(0);
  f.slope = c(1);
  if (n > 2) {
    const double rss = (A * c - b).squaredNorm();
    const Eigen::Matrix2d cov = (A.transpose() * A).inverse() * (rss / static_cast<double>(n - 2));
    f.slope_se = std::sqrt(cov(1, 1));
  }
  return f;
}

AccuracyReport run_sweep(const SweepConfig& cfg) {
  const ModelSpec base = instantiate_model(cfg.model);
  const UtilitySpec utility = checked_utility(cfg.utility);
  if (cfg.eps_ladder.size() < 4) throw ConfigError("a sweep needs at least 4 ladder points");
  const std::vector<double> deltas = delta_ladder(cfg);
  if (cfg.oracle == OracleKind::Distortion) {
    if (utility.family() != UtilityFamily::Power)
      throw ConfigError("oracle inapplicable: the distortion oracle needs power utility");
    for (double d : deltas)
      if (d != 0.0) throw ConfigError("oracle inapplicable: the distortion oracle needs delta = 0");
  }

  const Expansion e(base, utility);
  const bool need_mc = cfg.oracle == OracleKind::MonteCarlo || cfg.simulate;
  std::shared_ptr<const MertonEvaluator> merton;
  if (need_mc) merton = std::make_shared<MertonEvaluator>(e);

  auto ladder_point = [&](std::size_t i) {
    const double eps = cfg.eps_ladder[i], delta = deltas[i];
    const ModelSpec spec = base.with_scales(eps, delta);
    std::vector<AccuracyRow> rows;
    VerificationReport vr;
    std::string verify_status;
    if (cfg.verify) {
      try {
        vr = calibrate_constants(e, eps, delta, default_grid(spec, cfg.grid_nx, cfg.grid_ny, cfg.grid_nz));
      } catch (const std::runtime_error& err) {
        verify_status = std::string("calibration failed: ") + err.what();
      }
    }
    for (std::size_t j = 0; j < cfg.points.size(); ++j) {
      const Point& p = cfg.points[j];
      AccuracyRow r;
      r.eps = eps;
      r.delta = delta;
      r.point = static_cast<int>(j);
      r.approx = e.approx(p, eps, delta);
      if (need_mc) {
        SimConfig sim = cfg.sim;
        sim.x0 = p.x;
        sim.y0 = p.y;
        sim.z0 = p.z;
        const ValueEstimate mc = estimate_value(simulate_paths(spec, pi0_strategy(e, merton), sim), utility);
        r.has_mc = true;
        r.mc_mean = mc.mean;
        r.mc_half_width = mc.half_width;
        r.mc_std_error = mc.std_error;
      }
      if (cfg.oracle == OracleKind::Distortion) {
        try {
          const OracleField f = solve_distortion(utility.gammas()[0], spec, eps, cfg.distortion, p.z);
          r.oracle = f.value(p.t, p.x, p.y);
          r.oracle_ok = true;
        } catch (const std::runtime_error& err) {
          r.status = std::string("oracle failed: ") + err.what();
        }
      } else {
        r.oracle = r.mc_mean;
        r.oracle_ok = true;
      }
      if (r.oracle_ok) r.error = std::abs(r.oracle - r.approx);
      if (cfg.verify) {
        r.has_verify = verify_status.empty();
        if (r.has_verify) {
          r.verified = vr.calibrated;
          r.constants = vr.constants;
          r.min_q_sub = vr.min_q_sub;
          r.max_q_super = vr.max_q_super;
          r.terminal_sub = vr.terminal_sub;
          r.terminal_super = vr.terminal_super;
          r.max_gap_ratio = vr.max_gap_ratio;
        } else if (r.status == "ok") {
          r.status = verify_status;
        }
      }
      rows.push_back(r);
    }
    return rows;
  };

  std::vector<std::future<std::vector<AccuracyRow>>> jobs;
  for (std::size_t i = 0; i < cfg.eps_ladder.size(); ++i) jobs.push_back(std::async(std::launch::async, ladder_point, i));

  AccuracyReport rep;
  rep.points = cfg.points;
  rep.oracle = cfg.oracle == OracleKind::Distortion ? "distortion" : "monte-carlo";
  rep.model = base.catalog_name();
  rep.utility = utility.name();
  for (auto& j : jobs)
    for (AccuracyRow& r : j.get()) rep.rows.push_back(std::move(r));

  for (std::size_t j = 0; j < cfg.points.size(); ++j) {
    std::vector<double> scale, error;
    double size = 0.0;
    for (const AccuracyRow& r : rep.rows) {
      if (r.point != static_cast<int>(j) || !r.oracle_ok || r.status != "ok") continue;
      scale.push_back(r.eps + r.delta);
      error.push_back(r.error);
      size = std::max(size, std::abs(r.approx));
    }
    // Errors at rounding level of the value carry no rate.
    for (double& x : error)
      if (x <= 1e-9 * std::max(size, 1e-300)) x = 0.0;
    rep.fits.push_back(fit_slope(scale, error));
  }
  return rep;
}

std::string report_csv(const AccuracyReport& r) {
  std::ostringstream os;
  os << "eps,delta,point,t,x,y,z,approx,oracle,error,oracle_ok,mc_mean,mc_half_width,mc_std_error,"
        "C_A,C_B,C_C,verified,min_q_sub,max_q_super,terminal_sub,terminal_super,max_gap_ratio,status\n";
  for (const AccuracyRow& row : r.rows) {
    const Point& p = r.points.at(row.point);
    auto opt = [](bool has, double v) { return has ? fmt12(v) : std::string(); };
    os << fmt12(row.eps) << ',' << fmt12(row.delta) << ',' << row.point << ',' << fmt12(p.t) << ',' << fmt12(p.x)
       << ',' << fmt12(p.y) << ',' << fmt12(p.z) << ',' << fmt12(row.approx) << ',' << opt(row.oracle_ok, row.oracle)
       << ',' << opt(row.oracle_ok, row.error) << ',' << (row.oracle_ok ? "true" : "false") << ','
       << opt(row.has_mc, row.mc_mean) << ',' << opt(row.has_mc, row.mc_half_width) << ','
       << opt(row.has_mc, row.mc_std_error) << ',' << opt(row.has_verify, row.constants.A) << ','
       << opt(row.has_verify, row.constants.B) << ',' << opt(row.has_verify, row.constants.C) << ','
       << (row.has_verify ? (row.verified ? "true" : "false") : "") << ',' << opt(row.has_verify, row.min_q_sub)
       << ',' << opt(row.has_verify, row.max_q_super) << ',' << opt(row.has_verify, row.terminal_sub) << ','
       << opt(row.has_verify, row.terminal_super) << ',' << opt(row.has_verify, row.max_gap_ratio) << ','
       << csv_field(row.status) << '\n';
  }
  return os.str();
}

std::string report_json(const AccuracyReport& r) {
  json j;
  j["model"] = r.model;
  j["utility"] = r.utility;
  j["oracle"] = r.oracle;
  j["points"] = json::array();
  for (const Point& p : r.points) j["points"].push_back({num(p.t), num(p.x), num(p.y), num(p.z)});
  j["rows"] = json::array();
  for (const AccuracyRow& row : r.rows) {
    json o;
    o["eps"] = num(row.eps);
    o["delta"] = num(row.delta);
    o["point"] = row.point;
    o["approx"] = num(row.approx);
    o["oracle_ok"] = row.oracle_ok;
    o["oracle"] = row.oracle_ok ? num(row.oracle) : json(nullptr);
    o["error"] = row.oracle_ok ? num(row.error) : json(nullptr);
    if (row.has_mc) o["monte_carlo"] = {{"mean", num(row.mc_mean)}, {"ci", num(row.mc_half_width)},
                                        {"std_error", num(row.mc_std_error)}};
    if (row.has_verify) {
      o["verification"] = {{"verified", row.verified},
                           {"C", {num(row.constants.A), num(row.constants.B), num(row.constants.C)}},
                           {"min_q_sub", num(row.min_q_sub)},
                           {"max_q_super", num(row.max_q_super)},
                           {"terminal_sub", num(row.terminal_sub)},
                           {"terminal_super", num(row.terminal_super)},
                           {"max_gap_ratio", num(row.max_gap_ratio)}};
    }
    o["status"] = row.status;
    j["rows"].push_back(o);
  }
  j["fits"] = json::array();
  for (std::size_t i = 0; i < r.fits.size(); ++i) {
    const SlopeFit& f = r.fits[i];
    j["fits"].push_back({{"point", i}, {"slope", num(f.slope)}, {"slope_se", num(f.slope_se)},
                         {"intercept", num(f.intercept)}, {"rows", f.rows}, {"status", f.status}});
  }
  j["slope"] = r.fits.empty() || r.fits[0].status != "ok" ? json(nullptr) : num(r.fits[0].slope);
  return j.dump(2) + "\n";
}

AccuracyReport report_from_json(std::string_view text) {
  const json j = json::parse(text);
  AccuracyReport r;
  r.model = j.at("model").get<std::string>();
  r.utility = j.at("utility").get<std::string>();
  r.oracle = j.at("oracle").get<std::string>();
  for (const json& p : j.at("points")) r.points.push_back({p[0], p[1], p[2], p[3]});
  for (const json& o : j.at("rows")) {
    AccuracyRow row;
    row.eps = get(o, "eps");
    row.delta = get(o, "delta");
    row.point = o.at("point").get<int>();
    row.approx = get(o, "approx");
    row.oracle_ok = o.at("oracle_ok").get<bool>();
    if (row.oracle_ok) {
      row.oracle = get(o, "oracle");
      row.error = get(o, "error");
    }
    if (o.contains("monte_carlo")) {
      const json& m = o["monte_carlo"];
      row.has_mc = true;
      row.mc_mean = get(m, "mean");
      row.mc_half_width = get(m, "ci");
      row.mc_std_error = get(m, "std_error");
    }
    if (o.contains("verification")) {
      const json& v = o["verification"];
      row.has_verify = true;
      row.verified = v.at("verified").get<bool>();
      row.constants = {v["C"][0], v["C"][1], v["C"][2]};
      row.min_q_sub = get(v, "min_q_sub");
      row.max_q_super = get(v, "max_q_super");
      row.terminal_sub = get(v, "terminal_sub");
      row.terminal_super = get(v, "terminal_super");
      row.max_gap_ratio = get(v, "max_gap_ratio");
    }
    row.status = o.at("status").get<std::string>();
    r.rows.push_back(row);
  }
  for (const json& f : j.at("fits")) {
    SlopeFit s;
    s.slope = get(f, "slope");
    s.slope_se = get(f, "slope_se");
    s.intercept = get(f, "intercept");
    s.rows = f.at("rows").get<int>();
    s.status = f.at("status").get<std::string>();
    r.fits.push_back(s);
  }
  return r;
}

void emit_report(const AccuracyReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::string& body) {
    std::ofstream out(dir / name, std::ios::binary);
    out << body;
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
  };
  write("report.csv", report_csv(r));
  write("report.json", report_json(r));
  std::ostringstream dat;
  for (std::size_t j = 0; j < r.points.size(); ++j) {
    if (j > 0) dat << "\n\n";
    dat << "# point " << j << ": log(eps+delta) log|error|\n";
    for (const AccuracyRow& row : r.rows) {
      if (row.point != static_cast<int>(j) || !row.oracle_ok || !(row.error > 0.0)) continue;
      dat << fmt12(std::log(row.eps + row.delta)) << ' ' << fmt12(std::log(row.error)) << '\n';
    }
  }
  write("errors.dat", dat.str());
}

}  // namespace mm

#include "mm/harness.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace mm;

namespace {

const char* kDistortion = R"(
[model]
catalog = "ou_tanh"
rho1 = -0.4
lambda0 = 0.3
lambda_y = 0.2

[utility]
family = "power"
gamma = 2.0

[sweep]
eps = [0.32, 0.16, 0.08, 0.04]
delta_rule = "fixed"
delta = 0.0
oracle = "distortion"
)";

AccuracyReport synthetic(int n) {
  AccuracyReport r;
  r.model = "ou_tanh";
  r.utility = "power";
  r.oracle = "distortion";
  r.points = {{0, 1, 0, 0}};
  for (int i = 0; i < n; ++i) {
    AccuracyRow row;
    row.eps = 0.32 / std::pow(2.0, i);
    row.point = 0;
    row.approx = -1.0 - row.eps / 3;
    row.oracle = row.approx + 0.7 * row.eps;
    row.error = std::abs(row.oracle - row.approx);
    row.oracle_ok = true;
    if (i % 2 == 0) {
      row.has_mc = true;
      row.mc_mean = row.oracle + 1e-4 / 3;
      row.mc_half_width = 2e-3;
      row.mc_std_error = 1e-3;
    }
    if (i == 1) {
      row.has_verify = true;
      row.verified = true;
      row.constants = Constants::common(1.0);
      row.min_q_sub = 1.0 / 7;
      row.max_q_super = -2.0 / 9;
      row.max_gap_ratio = 29.61234567891234;
    }
    r.rows.push_back(row);
  }
  std::vector<double> s, e;
  for (const AccuracyRow& row : r.rows) {
    s.push_back(row.eps);
    e.push_back(row.error);
  }
  r.fits.push_back(fit_slope(s, e));
  return r;
}

}  // namespace

TEST(SlopeFit, RecoversPowerLaw) {
  for (double p : {0.5, 1.0, 2.0}) {
    std::vector<double> s, e;
    for (int i = 0; i < 5; ++i) {
      s.push_back(0.32 / std::pow(2.0, i));
      e.push_back(0.37 * std::pow(s.back(), p));
    }
    const SlopeFit f = fit_slope(s, e);
    EXPECT_EQ(f.status, "ok");
    EXPECT_NEAR(f.slope, p, 1e-10);
    EXPECT_NEAR(f.intercept, std::log(0.37), 1e-10);
    EXPECT_LT(f.slope_se, 1e-10);
  }
}

TEST(SlopeFit, DegenerateCases) {
  EXPECT_EQ(fit_slope({0.1}, {0.01}).status, "insufficient rows");
  EXPECT_EQ(fit_slope({0.2, 0.1}, {0.01, 0.0}).status, "degenerate: zero error");
}

TEST(Report, EmptyCsvIsHeaderOnly) {
  AccuracyReport r;
  const std::string csv = report_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1);
  EXPECT_EQ(csv.rfind("eps,delta,point,", 0), 0u);
}

TEST(Report, JsonHasSlopeAndRoundTrips) {
  const AccuracyReport r = synthetic(5);
  const std::string js = report_json(r);
  EXPECT_NE(js.find("\"slope\""), std::string::npos);
  const AccuracyReport back = report_from_json(js);
  EXPECT_EQ(report_json(back), js);
  ASSERT_EQ(back.rows.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(back.rows[i].approx, round12(r.rows[i].approx));
    EXPECT_EQ(back.rows[i].error, round12(r.rows[i].error));
    EXPECT_EQ(back.rows[i].has_mc, r.rows[i].has_mc);
    EXPECT_EQ(back.rows[i].has_verify, r.rows[i].has_verify);
  }
  EXPECT_EQ(back.rows[1].max_gap_ratio, round12(29.61234567891234));
  EXPECT_EQ(back.fits[0].slope, round12(r.fits[0].slope));
  EXPECT_NEAR(back.fits[0].slope, 1.0, 1e-10);
}

TEST(Report, CsvRowsAndTwelveDigits) {
  const AccuracyReport r = synthetic(3);
  const std::string csv = report_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_NE(csv.find(fmt12(r.rows[0].approx)), std::string::npos);
  EXPECT_EQ(fmt12(1.0 / 3), "0.333333333333");
  EXPECT_EQ(round12(1.0 / 3), 0.333333333333);
}

TEST(Report, EmitWritesThreeFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "mm_harness_emit";
  std::filesystem::remove_all(dir);
  emit_report(synthetic(4), dir);
  for (const char* f : {"report.csv", "report.json", "errors.dat"}) EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  std::ifstream in(dir / "errors.dat");
  std::string line;
  int data = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') ++data;
  EXPECT_EQ(data, 4);
  std::filesystem::remove_all(dir);
}

TEST(Config, DefaultsAndDerivedLadders) {
  const SweepConfig c = parse_config(kDistortion);
  ASSERT_EQ(c.points.size(), 1u);
  EXPECT_EQ(c.points[0].x, 1.0);
  EXPECT_EQ(c.points[0].t, 0.0);
  EXPECT_EQ(delta_ladder(c), std::vector<double>(4, 0.0));

  const SweepConfig h = parse_config(R"(
[model]
catalog = "ou_tanh"
[sweep]
eps_max = 0.32
eps_min = 0.04
delta_rule = "coupled"
delta_factor = 0.5
oracle = "monte-carlo"
)");
  EXPECT_EQ(h.eps_ladder, (std::vector<double>{0.32, 0.16, 0.08, 0.04}));
  EXPECT_EQ(delta_ladder(h), (std::vector<double>{0.16, 0.08, 0.04, 0.02}));
}

TEST(Config, Rejections) {
  const std::string head = "[model]\ncatalog = \"ou_tanh\"\n";
  for (const std::string bad : {
           std::string("[model]\ncatalog = \"nope\"\n"),
           head + "bogus = 1\n",
           head + "[utility]\nfamily = \"power\"\ngamma = 1.0\n",
           head + "[utility]\nfamily = \"power\"\nshape = 1.0\n",
           head + "[sweep]\neps = [0.1, 0.2]\n",
           head + "[sweep]\neps = [0.1, 0.1]\n",
           head + "[sweep]\neps = [1.5]\n",
           head + "[sweep]\noracle = \"exact\"\n",
           head + "[sweep]\noracle = \"monte-carlo\"\npoints = [[0.5, 1.0, 0.0, 0.0]]\n",
           head + "[sweep]\npoints = [[0.0, -1.0, 0.0, 0.0]]\n",
           head + "[sweep]\npoints = [[0.0, 1.0, 0.0]]\n",
           head + "[simulation]\npaths = 0\n",
           head + "[simulation]\npaths = 1.5\n",
           head + "[mystery]\n",
           std::string("[model\n"),
           std::string("[utility]\nfamily = \"log\"\n"),
       }) {
    EXPECT_THROW(parse_config(bad), ConfigError) << bad;
  }
  EXPECT_THROW(load_config("/nonexistent/config.toml"), ConfigError);
}

TEST(Sweep, DistortionNeedsPowerAndFlatSlowScale) {
  SweepConfig c = parse_config(kDistortion);
  c.utility = {"log", 1.0, {}, {}};
  EXPECT_THROW(run_sweep(c), ConfigError);
  c = parse_config(kDistortion);
  c.delta.value = 0.01;
  EXPECT_THROW(run_sweep(c), ConfigError);
  c = parse_config(kDistortion);
  c.eps_ladder.pop_back();
  EXPECT_THROW(run_sweep(c), ConfigError);
}

TEST(Sweep, ConstantSharpeIsDegenerate) {
  SweepConfig c = parse_config(kDistortion);
  c.model.params["lambda_y"] = 0.0;
  const AccuracyReport r = run_sweep(c);
  ASSERT_EQ(r.rows.size(), 4u);
  for (const AccuracyRow& row : r.rows) EXPECT_TRUE(row.oracle_ok);
  EXPECT_EQ(r.fits.at(0).status, "degenerate: zero error");
}

TEST(Sweep, DistortionSlopeNearOneAndDeterministic) {
  const SweepConfig c = parse_config(kDistortion);
  const AccuracyReport a = run_sweep(c);
  const AccuracyReport b = run_sweep(c);
  EXPECT_EQ(report_json(a), report_json(b));
  ASSERT_EQ(a.fits.size(), 1u);
  EXPECT_EQ(a.fits[0].status, "ok");
  EXPECT_NEAR(a.fits[0].slope, 1.0, 0.2);
  for (std::size_t i = 1; i < a.rows.size(); ++i) EXPECT_LT(a.rows[i].error, a.rows[i - 1].error);
}

TEST(Sweep, MonteCarloRowsCarryIntervals) {
  SweepConfig c = parse_config(R"(
[model]
catalog = "ou_tanh"
rho1 = -0.4
rho2 = 0.2
lambda0 = 0.3
lambda_y = 0.2
[sweep]
eps = [0.2, 0.1, 0.05, 0.025]
delta_rule = "coupled"
oracle = "monte-carlo"
[simulation]
paths = 2000
steps = 50
seed = 7
)");
  const AccuracyReport r = run_sweep(c);
  ASSERT_EQ(r.rows.size(), 4u);
  for (const AccuracyRow& row : r.rows) {
    EXPECT_TRUE(row.has_mc);
    EXPECT_GT(row.mc_half_width, 0.0);
    EXPECT_EQ(row.oracle, row.mc_mean);
    EXPECT_LT(row.error, 0.05);
  }
  EXPECT_EQ(report_json(r), report_json(run_sweep(c)));
}

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mocsm/errors.hpp"
#include "mocsm/harness.hpp"
#include "mocsm/init.hpp"
#include "mocsm/io.hpp"
#include "test_util.hpp"

using namespace mocsm;
using testutil::to_vec;

namespace {

KernelParams uneven_weights() {
  KernelParams p = make_params(Family::MOCSM, 1, 4, 1);
  const double w[] = {0.5, 0.6, 2.0, 2.1};
  const double s2[] = {0.4, 0.5, 2.0, 2.1};
  for (int m = 0; m < 4; ++m) {
    p.spectral[0][m].w = w[m];
    p.spectral[0][m].sigma2[0] = s2[m];
    p.spectral[0][m].mu[0] = 0.3;
  }
  return p;
}

double curve_max(const std::vector<CurvePoint>& c, const std::string& label) {
  double m = -1e300;
  for (const auto& p : c)
    if (p.label == label) m = std::max(m, p.value);
  return m;
}

OptimizerConfig quick() {
  OptimizerConfig cfg;
  cfg.max_iterations = 40;
  cfg.restarts = 1;
  return cfg;
}

}  // namespace

TEST(Mae, Examples) {
  EXPECT_DOUBLE_EQ(mae(to_vec({1, 2}), to_vec({1, 3})), 0.5);
  EXPECT_EQ(mae(to_vec({4, 5, 6}), to_vec({4, 5, 6})), 0.0);
  EXPECT_NEAR(mae(to_vec({0, 0, 0}), to_vec({1, -1, 2})), 4.0 / 3.0, 1e-15);
  try {
    mae(to_vec({1}), to_vec({1, 2}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
  EXPECT_THROW(mae(Eigen::VectorXd(), Eigen::VectorXd()), Error);
}

TEST(ParamsJson, RoundTripEveryFamily) {
  std::mt19937_64 rng(1);
  for (Family f : all_families()) {
    const int P = f == Family::CSM ? 1 : 2;
    const KernelParams p = testutil::random_params(f, 2, 3, P, rng);
    const Eigen::VectorXd noise = to_vec({0.1, 0.2, 0.3});
    const auto j = io::params_to_json(p, noise);
    for (const char* key : {"family", "Q", "M", "P", "components", "noise"}) EXPECT_TRUE(j.contains(key));
    const auto back = io::params_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(back.kernel.family, f);
    EXPECT_EQ(pack(back.kernel), pack(p)) << to_string(f);
    EXPECT_EQ(back.noise, noise);
  }
}

TEST(ParamsJson, Errors) {
  auto j = io::params_to_json(make_params(Family::MOCSM, 1, 2, 1), to_vec({0.1, 0.1}));
  auto bad = j;
  bad["components"][0][0]["mu"] = {0.1, 0.2};
  EXPECT_THROW(io::params_from_json(bad), Error);
  bad = j;
  bad["family"] = "nope";
  EXPECT_THROW(io::params_from_json(bad), Error);
  bad = j;
  bad["noise"] = {0.1, -1.0};
  EXPECT_THROW(io::params_from_json(bad), Error);
  bad = j;
  bad["components"][0][0]["theta"] = {0.5};
  EXPECT_THROW(io::params_from_json(bad), Error);
}

TEST(ModelJson, RoundTripPreservesPredictions) {
  std::mt19937_64 rng(2);
  const auto d = testutil::random_dataset(2, 10, 1, rng);
  const MOGPModel m = make_centered_model(testutil::random_params(Family::MOSM, 2, 2, 1, rng),
                                          to_vec({0.1, 0.2}), d);
  const MOGPModel back = io::model_from_json(nlohmann::json::parse(io::model_to_json(m).dump()));
  EXPECT_EQ(back.offset, m.offset);
  EXPECT_EQ(back.train.y, m.train.y);
  EXPECT_EQ(back.train.inputs.channel, m.train.inputs.channel);
  EXPECT_EQ(nlml(back), nlml(m));
}

TEST(FitReportJson, FieldsAndTrace) {
  FitReport r;
  r.nlml_trace = {3.5, 2.25, 2.0};
  r.final_params = make_params(Family::SM, 1, 1, 1);
  r.final_noise = to_vec({0.1});
  r.iterations = 2;
  r.restarts_used = 1;
  r.restart_nlml = {2.0};
  const auto j = io::fit_report_to_json(r);
  EXPECT_EQ(j["final_nlml"].get<double>(), 2.0);
  EXPECT_EQ(j["iterations"].get<int>(), 2);
  EXPECT_EQ(io::trace_to_csv(r.nlml_trace), "iteration,nlml\n0,3.5\n1,2.25\n2,2\n");
}

TEST(ConfigJson, OptimizerAndSplit) {
  const auto j = nlohmann::json::parse(
      R"({"optimizer":{"algorithm":"lbfgs","max_iterations":20,"seed":4},"split":["random:3","first"]})");
  const auto rc = io::run_config_from_json(j);
  EXPECT_EQ(rc.optimizer.algorithm, "lbfgs");
  EXPECT_EQ(rc.optimizer.max_iterations, 20);
  EXPECT_EQ(rc.optimizer.seed, 4u);
  ASSERT_EQ(rc.split.size(), 2u);
  EXPECT_EQ(rc.split[0].seed, 3u);
  const auto back = io::optimizer_from_json(io::optimizer_to_json(rc.optimizer));
  EXPECT_EQ(io::optimizer_to_json(back), io::optimizer_to_json(rc.optimizer));
  EXPECT_THROW(io::optimizer_from_json(nlohmann::json::parse(R"({"step_size":-1})")), Error);
}

TEST(FormatDouble, ShortestRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 12345678.9, 0.0}) {
    EXPECT_EQ(std::stod(io::format_double(v)), v);
  }
  EXPECT_EQ(io::format_double(2.0), "2");
}

TEST(Crosscov, UnevenWeightsSideBySide) {
  std::vector<double> grid;
  for (int k = 0; k <= 200; ++k) grid.push_back(-5.0 + 0.05 * k);
  const auto curves = export_cross_covariance(uneven_weights(), {{0, 1}, {2, 3}}, grid, true);
  EXPECT_EQ(curves.size(), 4u * grid.size());
  EXPECT_GT(curve_max(curves, "MOSM:3x4"), 7.0 * curve_max(curves, "MOCSM:3x4"));
  EXPECT_LT(curve_max(curves, "MOSM:1x2"), curve_max(curves, "MOCSM:1x2"));
}

TEST(Crosscov, DiagonalAtOriginIsWeight) {
  const auto curves = export_cross_covariance(uneven_weights(), {{2, 2}}, {0.0});
  ASSERT_EQ(curves.size(), 1u);
  EXPECT_NEAR(curves[0].value, 2.0, 1e-15);
  EXPECT_EQ(curves_to_csv(curves), "tau,pair_label,value\n0,MOCSM:3x3,2\n");
}

TEST(Crosscov, Errors) {
  try {
    export_cross_covariance(uneven_weights(), {{0, 4}}, {0.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ChannelOutOfRange);
  }
  EXPECT_THROW(export_cross_covariance(make_params(Family::CSM, 1, 2, 1), {{0, 1}}, {0.0}, true), Error);
}

TEST(Compare, TableLayoutAndCounts) {
  SyntheticConfig sc;
  sc.n = 40;
  sc.Q = 2;
  const auto d = generate_synthetic(sc).data;
  const std::vector<Family> fams{Family::SM_LMC, Family::CSM, Family::MOSM, Family::MOCSM};
  CompareOptions opts;
  opts.channel_names = {"signal", "integral", "derivative"};
  const auto r = compare(d, std::vector<SplitScheme>(3, SplitScheme::random_half(1)), fams, 2, quick(), 0, opts);
  ASSERT_EQ(r.rows.size(), 5u);
  EXPECT_EQ(r.tasks, (std::vector<std::string>{"signal", "integral", "derivative"}));
  for (std::size_t k = 0; k < fams.size(); ++k) {
    EXPECT_EQ(r.rows[k].family, to_string(fams[k]));
    EXPECT_EQ(r.rows[k].param_count, param_count(fams[k], 2, 3, 1));
    EXPECT_TRUE(r.rows[k].error.empty()) << r.rows[k].error;
    ASSERT_EQ(r.rows[k].mae.size(), 3u);
    for (double v : r.rows[k].mae) EXPECT_GE(v, 0.0);
  }
  EXPECT_EQ(r.rows.back().family, "MEAN");
}

TEST(Compare, ConstantTargetsBeatTheStdBound) {
  MultiChannelDataset d;
  ChannelSeries c;
  c.X.resize(30, 1);
  c.y.resize(30);
  for (int k = 0; k < 30; ++k) {
    c.X(k, 0) = 0.2 * k;
    c.y[k] = 1.5;
  }
  d.channels.push_back(c);
  const auto r = compare(d, {SplitScheme::random_half(2)}, {Family::MOCSM}, 1, quick(), 0);
  ASSERT_TRUE(r.rows[0].error.empty()) << r.rows[0].error;
  // Sample std of constant data is 0, so predictions must be the constant.
  EXPECT_LE(r.rows[0].mae[0], 1e-9);
}

TEST(Compare, FailuresStayInTheirRow) {
  std::mt19937_64 rng(3);
  auto d = testutil::random_dataset(2, 20, 2, rng);  // P = 2: CSM cannot run
  const auto r = compare(d, std::vector<SplitScheme>(2, SplitScheme::first_half()),
                         {Family::CSM, Family::SE_LMC}, 1, quick(), 0);
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_FALSE(r.rows[0].error.empty());
  EXPECT_TRUE(std::isnan(r.rows[0].mae[0]));
  // SE-LMC initialization also needs 1-D inputs, so it fails the same way.
  EXPECT_FALSE(r.rows[1].error.empty());
  EXPECT_TRUE(r.rows[2].error.empty());
}

TEST(Compare, DeterministicAndSerializable) {
  SyntheticConfig sc;
  sc.n = 32;
  sc.Q = 2;
  const auto d = generate_synthetic(sc).data;
  const std::vector<SplitScheme> s{SplitScheme::random_half(4), SplitScheme::first_half(),
                                   SplitScheme::last_half()};
  const auto a = compare(d, s, {Family::MOCSM, Family::SM}, 2, quick(), 7);
  const auto b = compare(d, s, {Family::MOCSM, Family::SM}, 2, quick(), 7);
  EXPECT_EQ(report_to_json(a).dump(), report_to_json(b).dump());
  EXPECT_EQ(report_to_csv(a), report_to_csv(b));
  EXPECT_TRUE(report_from_csv(report_to_csv(a)) == a);
  EXPECT_TRUE(report_from_json(nlohmann::json::parse(report_to_json(a).dump())) == a);
}

TEST(Compare, CsvRoundTripWithFailuresAndTiming) {
  ComparisonReport r;
  r.dataset = "x.csv";
  r.seed = 3;
  r.Q = 2;
  r.schemes = {"random:1", "all"};
  r.tasks = {"ch1"};
  r.task_channels = {1};
  r.rows.push_back({"MOCSM", {0.125}, -3.75, 0.5, 10, ""});
  r.rows.push_back({"CSM", {std::nan("")}, std::nan(""), 0.0, 7, "NotPositiveDefinite: boom"});
  EXPECT_TRUE(report_from_csv(report_to_csv(r)) == r);
  EXPECT_THROW(report_from_csv("family,oops\n"), Error);
}

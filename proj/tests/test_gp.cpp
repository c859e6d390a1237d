#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "mocsm/errors.hpp"
#include "mocsm/gp.hpp"
#include "mocsm/init.hpp"
#include "mocsm/numerics.hpp"
#include "test_util.hpp"

using namespace mocsm;
using testutil::to_vec;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

MultiChannelDataset one_channel(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  MultiChannelDataset d;
  ChannelSeries c;
  c.X = x;
  c.y = y;
  d.channels.push_back(c);
  return d;
}

KernelParams unit_sm(int M, double w = 1.0) {
  KernelParams p = make_params(Family::SM, 1, M, 1);
  for (auto& c : p.spectral[0]) {
    c.w = w;
    c.mu[0] = 0.2;
    c.sigma2[0] = 0.05;
  }
  return p;
}

// K + D by direct assembly, for the dense oracles.
Eigen::MatrixXd noisy_gram(const MOGPModel& m) {
  Eigen::MatrixXd k = gram_matrix(m.kernel, m.train.inputs);
  for (Eigen::Index a = 0; a < k.rows(); ++a) k(a, a) += m.noise[m.train.inputs.channel[a]];
  return k;
}

MOGPModel random_model(Family f, int M, int n_per, std::mt19937_64& rng, int Q = 2) {
  const int P = 1;
  KernelParams p = testutil::random_params(f, Q, M, P, rng);
  auto d = testutil::random_dataset(M, n_per, P, rng);
  Eigen::VectorXd noise(M);
  for (int m = 0; m < M; ++m) noise[m] = testutil::uniform(rng, 0.05, 0.3);
  return make_centered_model(p, noise, d);
}

}  // namespace

TEST(Nlml, ScalarGaussian) {
  const MOGPModel m = make_model(unit_sm(1), to_vec({1e-13}), one_channel(to_vec({0.0}), to_vec({1.0})));
  EXPECT_NEAR(nlml(m), 0.5 + 0.5 * kLog2Pi, 1e-9);
  EXPECT_NEAR(nlml(m), 1.418939, 1e-6);
}

TEST(Nlml, TwoIndependentStandardNormals) {
  // Independent channels with k(0) + noise = 1 give K + D = I.
  MultiChannelDataset d = one_channel(to_vec({0.0}), to_vec({1.0}));
  ChannelSeries c2 = d.channels[0];
  c2.channel_id = 2;
  d.channels.push_back(c2);
  const MOGPModel m = make_model(unit_sm(2, 0.5), to_vec({0.5, 0.5}), d);
  EXPECT_LT((noisy_gram(m) - Eigen::MatrixXd::Identity(2, 2)).norm(), 1e-15);
  EXPECT_NEAR(nlml(m), 1.0 + kLog2Pi, 1e-12);
  EXPECT_NEAR(nlml(m), 2.837877, 1e-6);
}

TEST(Nlml, ZeroTargetsLeaveOnlyTheDeterminant) {
  std::mt19937_64 rng(1);
  MOGPModel m = random_model(Family::MOCSM, 3, 6, rng);
  m.train.y.setZero();
  m.offset.setZero();
  const Eigen::MatrixXd k = noisy_gram(m);
  const double n = static_cast<double>(k.rows());
  EXPECT_NEAR(nlml(m), 0.5 * std::log(k.determinant()) + 0.5 * n * kLog2Pi, 1e-9);
}

TEST(Nlml, MatchesDenseOracle) {
  std::mt19937_64 rng(2);
  for (Family f : all_families()) {
    const MOGPModel m = random_model(f, 3, 7, rng);
    const Eigen::MatrixXd k = noisy_gram(m);
    Eigen::VectorXd r = m.train.y;
    for (Eigen::Index a = 0; a < r.size(); ++a) r[a] -= m.offset[m.train.inputs.channel[a]];
    const double want = 0.5 * r.dot(k.inverse() * r) + 0.5 * std::log(k.determinant()) +
                        0.5 * static_cast<double>(r.size()) * kLog2Pi;
    EXPECT_NEAR(nlml(m), want, 1e-8 * std::abs(want)) << to_string(f);
  }
}

TEST(Nlml, PermutationInvariant) {
  std::mt19937_64 rng(3);
  const MOGPModel m = random_model(Family::MOCSM, 3, 8, rng);
  MOGPModel shuffled = m;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m.train.y.size()));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto a = static_cast<Eigen::Index>(k);
    shuffled.train.inputs.channel[k] = m.train.inputs.channel[static_cast<std::size_t>(order[k])];
    shuffled.train.inputs.x.row(a) = m.train.inputs.x.row(order[k]);
    shuffled.train.y[a] = m.train.y[order[k]];
  }
  EXPECT_NEAR(nlml(shuffled), nlml(m), 1e-10);
}

TEST(Nlml, EmptyTrainingDataIsAnError) {
  MultiChannelDataset d;
  ChannelSeries c;
  c.X.resize(0, 1);
  d.channels.push_back(c);
  const MOGPModel m = make_model(unit_sm(1), to_vec({0.1}), d);
  EXPECT_THROW(nlml(m), Error);
  EXPECT_THROW(nlml_grad(m), Error);
}

TEST(NlmlGrad, MatchesFiniteDifferencesForEveryFamily) {
  std::mt19937_64 rng(4);
  for (Family f : all_families()) {
    for (bool tie : {false, true}) {
      const MOGPModel m = random_model(f, 2, 10, rng);
      const Eigen::VectorXd x = model_coords(m, tie);
      auto obj = [&](const Eigen::VectorXd& c) { return nlml(with_coords(m, c, tie)); };
      const Eigen::VectorXd fd = numerics::finite_diff_grad(obj, x);
      const Eigen::VectorXd g = nlml_grad(m, tie);
      ASSERT_EQ(g.size(), x.size());
      for (Eigen::Index k = 0; k < x.size(); ++k) {
        EXPECT_LE(std::abs(g[k] - fd[k]), 1e-4 * std::max(1.0, std::abs(fd[k])))
            << to_string(f) << " coord " << k << " tie " << tie;
      }
    }
  }
}

TEST(Coords, RoundTrip) {
  std::mt19937_64 rng(5);
  const MOGPModel m = random_model(Family::MOSM, 3, 4, rng);
  const MOGPModel back = with_coords(m, model_coords(m));
  EXPECT_NEAR(nlml(back), nlml(m), 1e-10);
  EXPECT_THROW(with_coords(m, Eigen::VectorXd::Zero(2)), Error);
}

TEST(Fit, TraceIsMonotoneAndFinalIsBest) {
  std::mt19937_64 rng(6);
  for (const char* algo : {"adam", "lbfgs"}) {
    const MOGPModel m = random_model(Family::MOCSM, 2, 12, rng, 1);
    OptimizerConfig cfg;
    cfg.algorithm = algo;
    cfg.max_iterations = 150;
    cfg.restarts = 2;
    const FitResult r = fit(m, cfg);
    ASSERT_FALSE(r.report.nlml_trace.empty());
    EXPECT_LE(r.report.nlml_trace.back(), r.report.nlml_trace.front() + 1e-9);
    for (std::size_t k = 1; k < r.report.nlml_trace.size(); ++k) {
      EXPECT_LE(r.report.nlml_trace[k], r.report.nlml_trace[k - 1] + 1e-12);
    }
    EXPECT_LE(r.report.nlml_trace.back(), nlml(m) + 1e-9);
    EXPECT_NEAR(nlml(r.model), r.report.nlml_trace.back(), 1e-8);
    EXPECT_EQ(r.report.restarts_used, 2);
    EXPECT_EQ(r.report.restart_nlml.size(), 2u);
    EXPECT_TRUE(r.report.final_noise.isApprox(r.model.noise));
  }
}

TEST(Fit, StationaryAtConvergence) {
  std::mt19937_64 rng(7);
  const MOGPModel m = random_model(Family::SM, 1, 20, rng, 1);
  OptimizerConfig cfg;
  cfg.algorithm = "lbfgs";
  cfg.max_iterations = 2000;
  cfg.tolerance = 1e-5;
  cfg.restarts = 1;
  const FitResult r = fit(m, cfg);
  if (r.report.converged) {
    EXPECT_LE(nlml_grad(r.model).lpNorm<Eigen::Infinity>(), 10 * cfg.tolerance);
  } else {
    // Line-search stall: the gradient should still be small.
    EXPECT_LE(nlml_grad(r.model).lpNorm<Eigen::Infinity>(), 1e-2);
  }
}

TEST(Fit, NanParametersFailEveryRestart) {
  std::mt19937_64 rng(8);
  MOGPModel m = random_model(Family::MOCSM, 2, 5, rng);
  m.kernel.spectral[0][0].w = std::numeric_limits<double>::quiet_NaN();
  OptimizerConfig cfg;
  cfg.restarts = 3;
  try {
    fit(m, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::AllRestartsFailed);
  }
}

TEST(Fit, RejectsBadConfig) {
  std::mt19937_64 rng(9);
  const MOGPModel m = random_model(Family::SM, 1, 5, rng);
  OptimizerConfig cfg;
  cfg.step_size = 0;
  EXPECT_THROW(fit(m, cfg), Error);
  cfg = {};
  cfg.algorithm = "newton";
  EXPECT_THROW(fit(m, cfg), Error);
}

TEST(Fit, RecoversSpectralMean) {
  // Draw from a known Q=1 SM kernel (w=1, mu=0.3, sigma2=0.01) and refit.
  int hits = 0;
  for (int seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(100 + seed);
    std::normal_distribution<double> nd;
    const int n = 200;
    Eigen::VectorXd x(n);
    for (int k = 0; k < n; ++k) x[k] = -10.0 + 20.0 * k / (n - 1);
    KernelParams truth = make_params(Family::SM, 1, 1, 1);
    truth.spectral[0][0].w = 1.0;
    truth.spectral[0][0].mu[0] = 0.3;
    truth.spectral[0][0].sigma2[0] = 0.01;
    StackedInputs in;
    in.channel.assign(n, 0);
    in.x = x;
    Eigen::MatrixXd k = gram_matrix(truth, in);
    k.diagonal().array() += 1e-6;
    Eigen::VectorXd z(n);
    for (int a = 0; a < n; ++a) z[a] = nd(rng);
    const Eigen::VectorXd y = numerics::cholesky(k).lower * z;
    const MultiChannelDataset d = one_channel(x, y);

    const KernelParams p0 = init_params(d, 1, Family::SM, static_cast<std::uint64_t>(seed));
    OptimizerConfig cfg;
    cfg.max_iterations = 300;
    cfg.restarts = 1;
    cfg.step_size = 0.02;
    const FitResult r = fit(make_centered_model(p0, init_noise(d), d), cfg);
    const double mu = std::abs(r.model.kernel.spectral[0][0].mu[0]);
    if (std::abs(mu - 0.3) <= 0.03) ++hits;
  }
  EXPECT_GE(hits, 4);
}

TEST(Predict, InterpolatesTrainingPointsWithoutNoise) {
  Eigen::VectorXd x = to_vec({-1.0, 0.0, 0.7, 1.9});
  Eigen::VectorXd y = to_vec({0.3, -0.2, 0.5, 1.0});
  const MOGPModel m = make_model(unit_sm(1), to_vec({1e-12}), one_channel(x, y));
  StackedInputs at;
  at.channel = {0, 0, 0, 0};
  at.x = x;
  const GPPosterior post = predict(m, at);
  EXPECT_LT((post.mean - y).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE(post.variance.maxCoeff(), 1e-8);
  EXPECT_GE(post.variance.minCoeff(), 0.0);
}

TEST(Predict, RevertsToPriorFarAway) {
  std::mt19937_64 rng(10);
  MOGPModel m = random_model(Family::MOCSM, 3, 6, rng);
  StackedInputs far;
  far.channel = {0, 1, 2};
  far.x = Eigen::MatrixXd::Constant(3, 1, 1e3);
  const GPPosterior post = predict(m, far);
  const Eigen::VectorXd prior = prior_variance(m.kernel, far);
  for (int s = 0; s < 3; ++s) {
    EXPECT_NEAR(post.mean[s], m.offset[s], 1e-10);
    EXPECT_NEAR(post.variance[s], prior[s], 1e-10);
  }
  const GPPosterior noisy = predict(m, far, true);
  for (int s = 0; s < 3; ++s) EXPECT_NEAR(noisy.variance[s], prior[s] + m.noise[s], 1e-10);
}

TEST(Predict, MatchesExplicitInverse) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 10; ++t) {
    const MOGPModel m = random_model(Family::MOCSM, 3, 10, rng);
    const StackedInputs star = testutil::random_inputs(12, 3, 1, rng);
    const Eigen::MatrixXd kinv = noisy_gram(m).inverse();
    const Eigen::MatrixXd ks = cross_gram(m.kernel, m.train.inputs, star);
    Eigen::VectorXd r = m.train.y;
    for (Eigen::Index a = 0; a < r.size(); ++a) r[a] -= m.offset[m.train.inputs.channel[a]];
    Eigen::VectorXd mean = ks.transpose() * kinv * r;
    for (Eigen::Index s = 0; s < mean.size(); ++s) mean[s] += m.offset[star.channel[s]];
    const Eigen::VectorXd var =
        gram_matrix(m.kernel, star).diagonal() - (ks.transpose() * kinv * ks).diagonal();
    const GPPosterior post = predict(m, star);
    EXPECT_LT((post.mean - mean).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((post.variance - var.cwiseMax(0.0)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Predict, ChannelOutOfRange) {
  std::mt19937_64 rng(12);
  const MOGPModel m = random_model(Family::MOCSM, 2, 4, rng);
  StackedInputs bad;
  bad.channel = {2};
  bad.x = Eigen::MatrixXd::Zero(1, 1);
  try {
    predict(m, bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ChannelOutOfRange);
  }
}

TEST(Model, Validation) {
  std::mt19937_64 rng(13);
  auto d = testutil::random_dataset(2, 4, 1, rng);
  EXPECT_THROW(make_model(unit_sm(2), to_vec({0.1}), d), Error);
  EXPECT_THROW(make_model(unit_sm(2), to_vec({0.1, 0.0}), d), Error);
  const MOGPModel m = make_centered_model(unit_sm(2), to_vec({0.1, 0.1}), d);
  EXPECT_NEAR(m.offset[1], d.channels[1].y.mean(), 1e-15);
}

TEST(CrossChannel, DelayedCopyFavoursMocsm) {
  // Channel 2 is channel 1 shifted by 0.5; the joint kernel should explain
  // both with a better marginal likelihood than two independent SM kernels.
  int wins = 0;
  for (int seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(200 + seed);
    std::normal_distribution<double> nd;
    const int n = 40;
    const double a1 = 1.0 + 0.3 * nd(rng), f1 = 0.25 + 0.05 * nd(rng), ph = nd(rng);
    MultiChannelDataset d;
    for (int m = 0; m < 2; ++m) {
      ChannelSeries c;
      c.channel_id = m + 1;
      c.X.resize(n, 1);
      c.y.resize(n);
      for (int k = 0; k < n; ++k) {
        const double x = -6.0 + 12.0 * k / (n - 1);
        c.X(k, 0) = x;
        const double shifted = x - 0.5 * m;
        c.y[k] = a1 * std::sin(2 * std::numbers::pi * f1 * shifted + ph) +
                 0.4 * std::sin(2 * std::numbers::pi * 0.6 * shifted) + 0.05 * nd(rng);
      }
      d.channels.push_back(c);
    }
    OptimizerConfig cfg;  // defaults; shorter runs stall with the delays near 0
    cfg.seed = static_cast<std::uint64_t>(seed);
    const auto joint = fit(make_centered_model(init_params(d, 2, Family::MOCSM, seed), init_noise(d), d), cfg);
    const auto indep = fit(make_centered_model(init_params(d, 2, Family::SM, seed), init_noise(d), d), cfg);
    if (joint.report.nlml_trace.back() < indep.report.nlml_trace.back()) ++wins;
  }
  EXPECT_GE(wins, 4);
}

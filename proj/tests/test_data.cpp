#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "mocsm/data.hpp"
#include "mocsm/errors.hpp"
#include "test_util.hpp"

using namespace mocsm;
using testutil::to_vec;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::InvalidArgument;
}

std::vector<double> sorted_values(const Eigen::VectorXd& v) {
  std::vector<double> out(v.data(), v.data() + v.size());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(Calculus, IntegralOfOnes) {
  const Eigen::VectorXd i = numerical_integral(Eigen::VectorXd::Ones(5), 0.1);
  const Eigen::VectorXd want = to_vec({0, 0.1, 0.2, 0.3, 0.4});
  EXPECT_LT((i - want).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Calculus, DerivativeOfRamp) {
  Eigen::VectorXd y(10);
  for (int k = 0; k < 10; ++k) y[k] = 3.0 * 0.2 * k - 1.0;
  const Eigen::VectorXd d = numerical_derivative(y, 0.2);
  for (int k = 0; k < 10; ++k) EXPECT_NEAR(d[k], 3.0, 1e-12);
}

TEST(Calculus, DerivativeOfSine) {
  const double dx = 0.01;
  const int n = 700;
  Eigen::VectorXd y(n);
  for (int k = 0; k < n; ++k) y[k] = std::sin(k * dx);
  const Eigen::VectorXd d = numerical_derivative(y, dx);
  double worst = 0;
  for (int k = 0; k < n; ++k) worst = std::max(worst, std::abs(d[k] - std::cos(k * dx)));
  EXPECT_LE(worst, 1e-2);  // one-sided ends are first order
  double inner = 0;
  for (int k = 1; k + 1 < n; ++k) inner = std::max(inner, std::abs(d[k] - std::cos(k * dx)));
  EXPECT_LE(inner, 1e-3);
}

TEST(Calculus, TooFewPoints) {
  EXPECT_EQ(kind_of([] { numerical_integral(to_vec({1, 2}), 0.1); }), ErrorKind::TooFewPoints);
  EXPECT_EQ(kind_of([] { numerical_derivative(to_vec({1, 2}), 0.1); }), ErrorKind::TooFewPoints);
}

TEST(Synthetic, DefaultsAndDeterminism) {
  const SyntheticDataset a = generate_synthetic({});
  ASSERT_EQ(a.data.M(), 3);
  EXPECT_EQ(a.data.P, 1);
  for (const auto& c : a.data.channels) {
    EXPECT_EQ(c.size(), 300);
    EXPECT_DOUBLE_EQ(c.X(0, 0), -10.0);
    EXPECT_DOUBLE_EQ(c.X(299, 0), 10.0);
  }
  EXPECT_EQ(a.source.size(), 4u);
  const SyntheticDataset b = generate_synthetic({});
  for (int m = 0; m < 3; ++m) {
    EXPECT_EQ(a.data.channels[m].y, b.data.channels[m].y);
    EXPECT_EQ(a.data.channels[m].X, b.data.channels[m].X);
  }
  SyntheticConfig other;
  other.seed = 1;
  EXPECT_NE(generate_synthetic(other).data.channels[0].y, a.data.channels[0].y);
}

TEST(Synthetic, DerivedChannelsAreFunctionsOfTheSignal) {
  SyntheticConfig cfg;
  cfg.seed = 3;
  cfg.n = 200;
  const auto d = generate_synthetic(cfg).data;
  const double dx = (cfg.hi - cfg.lo) / (cfg.n - 1);
  EXPECT_EQ(d.channels[1].y, numerical_integral(d.channels[0].y, dx));
  EXPECT_EQ(d.channels[2].y, numerical_derivative(d.channels[0].y, dx));
  // Differentiating the integral gives the signal back up to O(dx) error.
  const Eigen::VectorXd back = numerical_derivative(d.channels[1].y, dx);
  const double scale = d.channels[0].y.cwiseAbs().maxCoeff();
  EXPECT_LE((back - d.channels[0].y).cwiseAbs().maxCoeff(), 2.0 * dx * std::max(1.0, scale) * 10);
}

TEST(Synthetic, Preconditions) {
  SyntheticConfig c;
  c.n = 15;
  EXPECT_THROW(generate_synthetic(c), Error);
  c.n = 20;
  c.lo = 1;
  c.hi = 1;
  EXPECT_THROW(generate_synthetic(c), Error);
}

TEST(Csv, WellFormedTwoChannels) {
  const auto d = parse_csv("channel,x1,y\n1,0.0,1.5\n2,0.5,-1\n1,1.0,2.5\n");
  ASSERT_EQ(d.M(), 2);
  EXPECT_EQ(d.P, 1);
  EXPECT_EQ(d.channels[0].y, to_vec({1.5, 2.5}));
  EXPECT_EQ(d.channels[1].y, to_vec({-1}));
  EXPECT_EQ(d.channels[0].X(1, 0), 1.0);
}

TEST(Csv, MissingValueNamesLine) {
  try {
    parse_csv("channel,x1,y\n1,0.0,1.5\n1,0.5\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MalformedRow);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_EQ(kind_of([] { parse_csv("channel,x1,y\n1,abc,1\n"); }), ErrorKind::MalformedRow);
}

TEST(Csv, LabelsRemappedByFirstAppearance) {
  const auto d = parse_csv("channel,x1,y\n7,0,1\n3,0,2\n7,1,3\n");
  ASSERT_EQ(d.M(), 2);
  EXPECT_EQ(d.channels[0].channel_id, 1);
  EXPECT_EQ(d.channels[0].y, to_vec({1, 3}));
  EXPECT_EQ(d.channels[1].channel_id, 2);
  EXPECT_EQ(d.channels[1].y, to_vec({2}));
}

TEST(Csv, EmptyAndHeaderOnly) {
  EXPECT_EQ(kind_of([] { parse_csv(""); }), ErrorKind::EmptyFile);
  EXPECT_EQ(kind_of([] { parse_csv("channel,x1,y\n"); }), ErrorKind::EmptyFile);
}

TEST(Csv, TwoDimensionalInputsAndDuplicates) {
  const auto d = parse_csv("channel,x1,x2,y\n1,0,1,5\n1,0,1,6\n", 2);
  EXPECT_EQ(d.P, 2);
  EXPECT_EQ(d.channels[0].size(), 2);
  EXPECT_EQ(kind_of([] { parse_csv("channel,x1,y\n1,0,1\n", 2); }), ErrorKind::MalformedRow);
}

TEST(Csv, RoundTripIsIdentity) {
  std::mt19937_64 rng(3);
  const auto d = testutil::random_dataset(3, 17, 2, rng);
  const auto back = parse_csv(to_csv(d));
  ASSERT_EQ(back.M(), 3);
  for (int m = 0; m < 3; ++m) {
    EXPECT_EQ(back.channels[m].X, d.channels[m].X);
    EXPECT_EQ(back.channels[m].y, d.channels[m].y);
  }
  const std::string path = testing::TempDir() + "/roundtrip.csv";
  save_csv(d, path);
  const auto fromfile = load_csv(path);
  EXPECT_EQ(to_csv(fromfile), to_csv(d));
  std::remove(path.c_str());
}

TEST(Schemes, ParseAndPrint) {
  EXPECT_EQ(parse_scheme("random:42").kind, SplitScheme::Kind::RandomHalf);
  EXPECT_EQ(parse_scheme("random:42").seed, 42u);
  EXPECT_EQ(parse_scheme("random").seed, 0u);
  EXPECT_EQ(parse_scheme("first").kind, SplitScheme::Kind::FirstHalf);
  EXPECT_EQ(parse_scheme("last").kind, SplitScheme::Kind::LastHalf);
  EXPECT_EQ(parse_scheme("all").kind, SplitScheme::Kind::All);
  EXPECT_THROW(parse_scheme("middle"), Error);
  const auto list = parse_schemes("random:3,first,last");
  ASSERT_EQ(list.size(), 3u);
  for (const auto& s : list) EXPECT_EQ(to_string(parse_scheme(to_string(s))), to_string(s));
}

TEST(Split, FirstHalfOfSyntheticInterval) {
  const auto d = generate_synthetic({}).data;
  const auto [train, test] = split(d, {SplitScheme::first_half(), SplitScheme::first_half(),
                                       SplitScheme::first_half()});
  EXPECT_EQ(train.channels[1].size(), 150);
  EXPECT_EQ(test.channels[1].size(), 150);
  EXPECT_LE(train.channels[1].X.maxCoeff(), 0.0);
  EXPECT_GE(test.channels[1].X.minCoeff(), 0.0);
}

TEST(Split, LastHalfOnFour) {
  MultiChannelDataset d;
  ChannelSeries c;
  c.channel_id = 1;
  c.X = to_vec({3, 1, 4, 2});
  c.y = to_vec({30, 10, 40, 20});
  d.channels.push_back(c);
  const auto [train, test] = split(d, {SplitScheme::last_half()});
  EXPECT_EQ(sorted_values(train.channels[0].y), (std::vector<double>{30, 40}));
  EXPECT_EQ(train.channels[0].y, to_vec({30, 40}));  // original order kept
  EXPECT_EQ(test.channels[0].y, to_vec({10, 20}));
}

TEST(Split, RandomHalfIsReproducibleAndPartitions) {
  std::mt19937_64 rng(7);
  const auto d = testutil::random_dataset(3, 21, 1, rng);
  const std::vector<SplitScheme> s{SplitScheme::random_half(5), SplitScheme::first_half(),
                                   SplitScheme::all()};
  const auto a = split(d, s);
  const auto b = split(d, s);
  for (int m = 0; m < 3; ++m) {
    EXPECT_EQ(a.first.channels[m].y, b.first.channels[m].y);
    const Eigen::Index n_train = a.first.channels[m].size();
    const Eigen::Index n_test = a.second.channels[m].size();
    EXPECT_EQ(n_train + n_test, 21);
    Eigen::VectorXd joined(21);
    joined << a.first.channels[m].y, a.second.channels[m].y;
    EXPECT_EQ(sorted_values(joined), sorted_values(d.channels[m].y));
  }
  EXPECT_EQ(a.first.channels[0].size(), 11);
  EXPECT_EQ(a.second.channels[2].size(), 0);
  EXPECT_NE(split(d, {SplitScheme::random_half(6), s[1], s[2]}).first.channels[0].y,
            a.first.channels[0].y);
}

TEST(Split, SchemeCountMustMatch) {
  std::mt19937_64 rng(7);
  const auto d = testutil::random_dataset(2, 6, 1, rng);
  EXPECT_EQ(kind_of([&] { split(d, {SplitScheme::all()}); }), ErrorKind::DimensionMismatch);
}

TEST(Dataset, ValidateAndStack) {
  std::mt19937_64 rng(8);
  auto d = testutil::random_dataset(2, 5, 1, rng);
  const StackedData s = stack(d);
  EXPECT_EQ(s.inputs.size(), 10);
  EXPECT_EQ(s.inputs.channel[0], 0);
  EXPECT_EQ(s.inputs.channel[9], 1);
  EXPECT_EQ(s.y[5], d.channels[1].y[0]);
  d.channels[1].channel_id = 3;
  EXPECT_THROW(validate(d), Error);
}

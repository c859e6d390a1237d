#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mocsm/kernels.hpp"

namespace mocsm {

struct ChannelSeries {
  int channel_id = 1;  // 1-based
  Eigen::MatrixXd X;   // n x P
  Eigen::VectorXd y;

  Eigen::Index size() const { return y.size(); }
};

struct MultiChannelDataset {
  std::vector<ChannelSeries> channels;
  int P = 1;

  int M() const { return static_cast<int>(channels.size()); }
  Eigen::Index total_points() const;
};

// Checks ids are 1..M in order, uniform P and finite values. Empty channels
// are allowed (a split may leave one side empty).
void validate(const MultiChannelDataset& d);

struct StackedData {
  StackedInputs inputs;  // 0-based channels
  Eigen::VectorXd y;
};

// Concatenates channels in id order.
StackedData stack(const MultiChannelDataset& d);

// Cumulative trapezoid starting at 0.
Eigen::VectorXd numerical_integral(const Eigen::VectorXd& y, double dx);

// Central differences inside, first-order one-sided differences at the ends.
Eigen::VectorXd numerical_derivative(const Eigen::VectorXd& y, double dx);

struct SyntheticConfig {
  std::uint64_t seed = 0;
  int Q = 4;
  int n = 300;
  double lo = -10.0;
  double hi = 10.0;
};

struct SyntheticDataset {
  MultiChannelDataset data;
  std::vector<SpectralComponent> source;  // spectral mixture the signal was drawn from
};

// Channel 1: a draw from a zero-mean GP with a randomized spectral mixture
// kernel on n uniform points. Channel 2: its cumulative integral.
// Channel 3: its derivative.
SyntheticDataset generate_synthetic(const SyntheticConfig& cfg);

// Reads "channel,x1,...,xP,y". Channel labels are remapped to 1..M in order
// of first appearance. P == 0 infers P from the header.
MultiChannelDataset load_csv(const std::string& path, int P = 0);
MultiChannelDataset parse_csv(const std::string& text, int P = 0);
std::string to_csv(const MultiChannelDataset& d);
void save_csv(const MultiChannelDataset& d, const std::string& path);

struct SplitScheme {
  enum class Kind { RandomHalf, FirstHalf, LastHalf, All };
  Kind kind = Kind::All;
  std::uint64_t seed = 0;

  static SplitScheme random_half(std::uint64_t seed) { return {Kind::RandomHalf, seed}; }
  static SplitScheme first_half() { return {Kind::FirstHalf, 0}; }
  static SplitScheme last_half() { return {Kind::LastHalf, 0}; }
  static SplitScheme all() { return {Kind::All, 0}; }
};

// "random:SEED", "random" (seed 0), "first", "last", "all".
SplitScheme parse_scheme(const std::string& text);
std::string to_string(const SplitScheme& s);
// Comma-separated list, one entry per channel.
std::vector<SplitScheme> parse_schemes(const std::string& text);

// The training side always receives ceil(n/2) points (all of them for All).
// FirstHalf/LastHalf sort by the first input coordinate; RandomHalf uses a
// seeded shuffle. Points keep their original relative order on each side.
std::pair<MultiChannelDataset, MultiChannelDataset> split(
    const MultiChannelDataset& d, const std::vector<SplitScheme>& schemes);

}  // namespace mocsm

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mocsm/data.hpp"
#include "mocsm/kernels.hpp"
#include "mocsm/numerics.hpp"

namespace mocsm {

struct GMMResult {
  Eigen::VectorXd weights;  // sums to 1
  Eigen::MatrixXd means;    // Q x P
  Eigen::MatrixXd variances;  // Q x P, diagonal covariances
  std::vector<double> log_likelihood;  // per iteration, normalized by total power
  int iterations = 0;
};

// Periodogram of a 1-D channel. Inputs are sorted and, if not uniformly
// spaced, linearly resampled onto a uniform grid with the same point count.
numerics::SpectralSampleSet empirical_spectral_density(const ChannelSeries& channel);

// Weighted EM for a diagonal Gaussian mixture, with the sample powers as
// weights and k-means++ seeding. Components are returned sorted by their
// first mean coordinate.
GMMResult gmm_em(const numerics::SpectralSampleSet& samples, int Q, std::uint64_t seed,
                 int max_iterations = 500, double tolerance = 1e-8);

// Spectral initialization of every family from the training data.
KernelParams init_params(const MultiChannelDataset& d, int Q, Family family, std::uint64_t seed);

// 1% of each channel's sample variance, floored at 1e-6.
Eigen::VectorXd init_noise(const MultiChannelDataset& d);

}  // namespace mocsm

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mocsm/data.hpp"
#include "mocsm/kernels.hpp"
#include "mocsm/numerics.hpp"

namespace mocsm {

// Kernel, per-channel noise variances and stacked training data.
//
// offset holds a per-channel constant mean that is subtracted before
// inference and added back to predictions. It is not optimized.
struct MOGPModel {
  KernelParams kernel;
  Eigen::VectorXd noise;
  Eigen::VectorXd offset;
  StackedData train;
};

MOGPModel make_model(const KernelParams& kernel, const Eigen::VectorXd& noise,
                     const MultiChannelDataset& train);

// Same, with offset set to each channel's training mean (0 for empty channels).
MOGPModel make_centered_model(const KernelParams& kernel, const Eigen::VectorXd& noise,
                              const MultiChannelDataset& train);

void validate(const MOGPModel& m);

// Negative log marginal likelihood including the (N/2) log(2 pi) constant.
double nlml(const MOGPModel& m);

// Unconstrained coordinates of a model: the kernel's packed coordinates
// followed by log noise variances (one per channel, or one shared value when
// tie_noise is set).
Eigen::VectorXd model_coords(const MOGPModel& m, bool tie_noise = false);
MOGPModel with_coords(const MOGPModel& m, const Eigen::VectorXd& coords, bool tie_noise = false);

// Gradient of nlml with respect to model_coords, by the trace identity
// dNLML = 1/2 tr((K^-1 - alpha alpha^T) dK).
Eigen::VectorXd nlml_grad(const MOGPModel& m, bool tie_noise = false);

struct NlmlWithGrad {
  double value;
  Eigen::VectorXd grad;
};
NlmlWithGrad nlml_and_grad(const MOGPModel& m, bool tie_noise = false);

struct OptimizerConfig {
  std::string algorithm = "adam";  // "adam" or "lbfgs"
  double step_size = 0.01;
  int max_iterations = 1500;
  double tolerance = 1e-6;
  int restarts = 3;  // total number of runs; run 0 starts from the given model
  std::uint64_t seed = 0;
  bool tie_noise = false;
  // Restarts perturb coordinate i by restart_scale * (1 + |x_i|) * N(0, 1).
  double restart_scale = 0.05;
  // Adam stops when the best NLML improves by less than tolerance over this many iterations.
  int patience = 50;
  int lbfgs_memory = 10;
};

void validate(const OptimizerConfig& cfg);

struct FitReport {
  std::vector<double> nlml_trace;  // best-so-far NLML per iteration of the winning run
  KernelParams final_params;
  Eigen::VectorXd final_noise;
  int iterations = 0;
  bool converged = false;
  int restarts_used = 0;
  std::vector<double> restart_nlml;  // final NLML per run, NaN for failed runs
};

struct FitResult {
  MOGPModel model;
  FitReport report;
};

FitResult fit(const MOGPModel& m, const OptimizerConfig& cfg);

struct GPPosterior {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  int clamped = 0;  // variances that were slightly negative and clamped to 0
};

GPPosterior predict(const MOGPModel& m, const StackedInputs& x_star, bool include_noise = false);

}  // namespace mocsm

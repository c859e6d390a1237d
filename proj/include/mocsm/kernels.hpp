#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mocsm/numerics.hpp"

// Multi-output spectral kernels.
//
// Conventions used throughout:
//  * channels are 0-based in the C++ API (files and the CLI use 1-based ids);
//  * frequencies are ordinary frequencies (cycles per input unit), so every
//    spectral family carries its 2*pi factors explicitly;
//  * tau = x_a - x_b for an entry (a, b) whose rows belong to channels (i, j).
namespace mocsm {

enum class Family { SM, MOCSM, MOSM, CSM, SM_LMC, SE_LMC, MATERN_LMC };

std::string to_string(Family f);
Family family_from_string(std::string_view name);
const std::vector<Family>& all_families();

// One Gaussian component of one channel's spectral density.
//
// theta and phi are time and phase delays. MOCSM uses a P-vector phase
// delay; MOSM uses a single scalar phase (phi.size() == 1).
struct SpectralComponent {
  double w = 1.0;
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma2;
  Eigen::VectorXd theta;
  Eigen::VectorXd phi;
};

struct CrossSpectralParams {
  double w = 0.0;
  double a = 0.0;
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma2;
  Eigen::VectorXd theta;
  Eigen::VectorXd phi;
};

// Cross-convolution algebra of two components: cross weight, cross
// amplitude, cross mean, cross covariance and delay differences.
CrossSpectralParams cross_params(const SpectralComponent& ci, const SpectralComponent& cj);

enum class BaseKind { SE, Matern32 };

struct BaseKernelParams {
  BaseKind kind = BaseKind::SE;
  double scale = 1.0;
  Eigen::VectorXd lengthscale;
};

// Shared component of the CSM kernel: one spectral Gaussian with per-channel
// weights and phases. phase[0] is pinned to 0.
struct CsmComponent {
  double mu = 0.0;
  double sigma2 = 1.0;
  Eigen::VectorXd weight;
  Eigen::VectorXd phase;
};

// One term of an LMC kernel. The coregionalization matrix is
// B = mixing * mixing^T with mixing lower-triangular (M x M).
// SM_LMC uses (w, mu, sigma2); SE_LMC and MATERN_LMC use base.
struct LmcComponent {
  double w = 1.0;
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma2;
  BaseKernelParams base;
  Eigen::MatrixXd mixing;

  Eigen::MatrixXd coregionalization() const { return mixing * mixing.transpose(); }
};

struct KernelParams {
  Family family = Family::MOCSM;
  int Q = 1;
  int M = 1;
  int P = 1;
  // SM, MOCSM, MOSM: spectral[q][m]. SM treats channels as independent.
  std::vector<std::vector<SpectralComponent>> spectral;
  std::vector<CsmComponent> csm;
  std::vector<LmcComponent> lmc;
};

// Throws InvalidArgument / DimensionMismatch when shapes or positivity
// constraints are violated, or when pinned delays are nonzero.
void validate(const KernelParams& p);

// Zero-delay parameters of the right shape with unit weights/variances.
KernelParams make_params(Family family, int Q, int M, int P);

// Degrees of freedom of a family as tabulated for the comparison of kernels.
int param_count(Family family, int Q, int M, int P);

// Single-output spectral mixture; sum_i w_i cos(2 pi tau.mu_i) prod_p exp(-2 pi^2 tau_p^2 s_ip).
double sm_eval(const std::vector<SpectralComponent>& components, const Eigen::VectorXd& tau);

double base_kernel_eval(const BaseKernelParams& p, const Eigen::VectorXd& tau);

double mocsm_eval(const KernelParams& p, int i, int j, const Eigen::VectorXd& tau);
double mosm_eval(const KernelParams& p, int i, int j, const Eigen::VectorXd& tau);
double csm_eval(const KernelParams& p, int i, int j, const Eigen::VectorXd& tau);
double smlmc_eval(const KernelParams& p, int i, int j, const Eigen::VectorXd& tau);
double lmc_base_eval(const KernelParams& p, int i, int j, const Eigen::VectorXd& tau);

// Family dispatch.
double kernel_eval(const KernelParams& p, int i, int j, const Eigen::VectorXd& tau);

// Prefactors in front of the shared exp*cos envelope (cross amplitude excluded).
double mocsm_cross_weight(const SpectralComponent& ci, const SpectralComponent& cj);
double mosm_cross_weight(const SpectralComponent& ci, const SpectralComponent& cj);

struct StackedInputs {
  std::vector<int> channel;
  Eigen::MatrixXd x;  // one row per point

  Eigen::Index size() const { return x.rows(); }
};

numerics::SymMatrix gram_matrix(const KernelParams& p, const StackedInputs& inputs);
Eigen::MatrixXd cross_gram(const KernelParams& p, const StackedInputs& rows,
                           const StackedInputs& cols);
Eigen::VectorXd prior_variance(const KernelParams& p, const StackedInputs& inputs);

// Unconstrained free coordinates: log for weights, variances, scales and
// lengthscales; raw for means, delays and mixing entries. Pinned delays and
// phases are excluded.
Eigen::VectorXd pack(const KernelParams& p);
KernelParams unpack(const KernelParams& shape, const Eigen::VectorXd& coords);
std::vector<std::string> free_param_names(const KernelParams& p);
Eigen::Index free_param_count(const KernelParams& p);

// sum_{a,b} weights(a,b) * dK(a,b)/d(coord) for every packed coordinate.
// weights must be symmetric.
Eigen::VectorXd gram_gradient(const KernelParams& p, const StackedInputs& inputs,
                              const Eigen::MatrixXd& weights);

}  // namespace mocsm

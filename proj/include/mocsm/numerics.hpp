#pragma once

#include <functional>
#include <limits>

#include <Eigen/Dense>

namespace mocsm::numerics {

// Dense symmetric matrix. Symmetry is a contract of the producer; the
// factorization only reads the lower triangle.
using SymMatrix = Eigen::MatrixXd;

struct CholFactor {
  Eigen::MatrixXd lower;
  double jitter_used = 0.0;

  Eigen::Index n() const { return lower.rows(); }
};

// Frequencies are in cycles per input unit, one row per sample.
struct SpectralSampleSet {
  Eigen::MatrixXd freqs;
  Eigen::VectorXd powers;
};

/// Cholesky factorization with a diagonal-jitter escalation ladder.
///
/// Tries jitter 0 first, then 1e-8*d, 1e-7*d, ... 1e-4*d where d is the
/// largest diagonal entry, skipping any step larger than max_jitter. Throws
/// NotPositiveDefinite when every permitted step fails.
CholFactor cholesky(const SymMatrix& m,
                    double max_jitter = std::numeric_limits<double>::infinity());

Eigen::VectorXd solve_psd(const CholFactor& f, const Eigen::VectorXd& b);
Eigen::MatrixXd solve_psd(const CholFactor& f, const Eigen::MatrixXd& b);

// Inverse of L L^T.
Eigen::MatrixXd inverse_psd(const CholFactor& f);

double log_det(const CholFactor& f);

// Symmetric eigensolver; used by property tests and diagnostics, never by inference.
double min_eigenvalue(const SymMatrix& m);
double max_eigenvalue(const SymMatrix& m);

using ScalarFunction = std::function<double(const Eigen::VectorXd&)>;

// Central differences with a fixed step h.
Eigen::VectorXd finite_diff_grad(const ScalarFunction& f, const Eigen::VectorXd& x, double h);

// Central differences with the per-coordinate step 1e-5 * (1 + |x_i|).
Eigen::VectorXd finite_diff_grad(const ScalarFunction& f, const Eigen::VectorXd& x);

/// One-sided periodogram of a demeaned signal on a uniform grid.
///
/// powers[k] = c_k |Y_k|^2 / n^2 with c_k = 1 at DC and Nyquist and 2
/// elsewhere, so the powers sum to the population variance of y.
/// freqs[k] = k / (n * dx) for k = 0 .. floor(n/2).
SpectralSampleSet periodogram(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

}  // namespace mocsm::numerics

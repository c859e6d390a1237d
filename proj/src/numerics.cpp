#include "mocsm/numerics.hpp"

#include <cmath>
#include <complex>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "mocsm/errors.hpp"

namespace mocsm::numerics {

namespace {

// FFTW planning is not thread-safe; execution is.
std::mutex fftw_planner_mutex;

bool try_factor(const SymMatrix& m, double jitter, Eigen::MatrixXd& lower) {
  Eigen::MatrixXd a = m;
  a.diagonal().array() += jitter;
  Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(a);
  if (llt.info() != Eigen::Success) return false;
  lower = llt.matrixL();
  for (Eigen::Index i = 0; i < lower.rows(); ++i) {
    if (!(lower(i, i) > 0.0) || !std::isfinite(lower(i, i))) return false;
  }
  return true;
}

template <typename StepFn>
Eigen::VectorXd central_differences(const ScalarFunction& f, const Eigen::VectorXd& x,
                                    StepFn step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = step(x[i]);
    xp[i] = x[i] + h;
    const double fp = f(xp);
    xp[i] = x[i] - h;
    const double fm = f(xp);
    xp[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw Error(ErrorKind::NonFiniteEvaluation,
                  "function not finite around coordinate " + std::to_string(i));
    }
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace

CholFactor cholesky(const SymMatrix& m, double max_jitter) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw Error(ErrorKind::DimensionMismatch, "cholesky needs a nonempty square matrix");
  }
  if (!m.allFinite()) {
    throw Error(ErrorKind::NotPositiveDefinite, "matrix has non-finite entries");
  }
  CholFactor f;
  if (try_factor(m, 0.0, f.lower)) return f;

  const double d = m.diagonal().maxCoeff();
  if (d > 0.0) {
    for (int e = -8; e <= -4; ++e) {
      const double jitter = std::pow(10.0, e) * d;
      if (jitter > max_jitter) break;
      if (try_factor(m, jitter, f.lower)) {
        f.jitter_used = jitter;
        return f;
      }
    }
  }
  throw Error(ErrorKind::NotPositiveDefinite,
              "factorization failed for n=" + std::to_string(m.rows()) +
                  " even with the largest permitted jitter");
}

Eigen::VectorXd solve_psd(const CholFactor& f, const Eigen::VectorXd& b) {
  if (b.size() != f.n()) {
    throw Error(ErrorKind::DimensionMismatch, "rhs length " + std::to_string(b.size()) +
                                                  " != factor size " + std::to_string(f.n()));
  }
  Eigen::VectorXd z = f.lower.triangularView<Eigen::Lower>().solve(b);
  return f.lower.transpose().triangularView<Eigen::Upper>().solve(z);
}

Eigen::MatrixXd solve_psd(const CholFactor& f, const Eigen::MatrixXd& b) {
  if (b.rows() != f.n()) {
    throw Error(ErrorKind::DimensionMismatch, "rhs rows " + std::to_string(b.rows()) +
                                                  " != factor size " + std::to_string(f.n()));
  }
  Eigen::MatrixXd z = f.lower.triangularView<Eigen::Lower>().solve(b);
  return f.lower.transpose().triangularView<Eigen::Upper>().solve(z);
}

Eigen::MatrixXd inverse_psd(const CholFactor& f) {
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(f.n(), f.n());
  Eigen::MatrixXd inv = solve_psd(f, eye);
  // Symmetrize away the last-bit asymmetry of the two triangular solves.
  return 0.5 * (inv + inv.transpose());
}

double log_det(const CholFactor& f) {
  return 2.0 * f.lower.diagonal().array().log().sum();
}

double min_eigenvalue(const SymMatrix& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double max_eigenvalue(const SymMatrix& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

Eigen::VectorXd finite_diff_grad(const ScalarFunction& f, const Eigen::VectorXd& x, double h) {
  if (!(h > 0.0)) throw Error(ErrorKind::InvalidArgument, "step must be positive");
  return central_differences(f, x, [h](double) { return h; });
}

Eigen::VectorXd finite_diff_grad(const ScalarFunction& f, const Eigen::VectorXd& x) {
  return central_differences(f, x, [](double xi) { return 1e-5 * (1.0 + std::abs(xi)); });
}

SpectralSampleSet periodogram(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const Eigen::Index n = x.size();
  if (y.size() != n) throw Error(ErrorKind::DimensionMismatch, "x and y lengths differ");
  if (n < 4) throw Error(ErrorKind::TooFewPoints, "periodogram needs at least 4 points");

  const double dx = (x[n - 1] - x[0]) / static_cast<double>(n - 1);
  if (!(dx > 0.0)) throw Error(ErrorKind::NonUniformGrid, "grid must be increasing");
  for (Eigen::Index i = 1; i < n; ++i) {
    if (std::abs((x[i] - x[i - 1]) - dx) > 1e-9 * std::abs(dx)) {
      throw Error(ErrorKind::NonUniformGrid, "spacing varies at index " + std::to_string(i));
    }
  }

  const double mean = y.mean();
  std::vector<double> in(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) in[static_cast<std::size_t>(i)] = y[i] - mean;

  const Eigen::Index half = n / 2;
  std::vector<std::complex<double>> out(static_cast<std::size_t>(half + 1));
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(),
                                reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex);
    fftw_destroy_plan(plan);
  }

  SpectralSampleSet s;
  s.freqs.resize(half + 1, 1);
  s.powers.resize(half + 1);
  const double n2 = static_cast<double>(n) * static_cast<double>(n);
  for (Eigen::Index k = 0; k <= half; ++k) {
    const bool unpaired = (k == 0) || (n % 2 == 0 && k == half);
    s.freqs(k, 0) = static_cast<double>(k) / (static_cast<double>(n) * dx);
    s.powers[k] = (unpaired ? 1.0 : 2.0) * std::norm(out[static_cast<std::size_t>(k)]) / n2;
  }
  return s;
}

}  // namespace mocsm::numerics

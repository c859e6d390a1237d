#include "mocsm/init.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "mocsm/errors.hpp"

namespace mocsm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

double sample_variance(const Eigen::VectorXd& y) {
  if (y.size() < 2) return 0.0;
  return (y.array() - y.mean()).square().sum() / static_cast<double>(y.size() - 1);
}

// Linear interpolation of (xs, ys) at t; xs sorted ascending.
double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double t) {
  auto it = std::upper_bound(xs.begin(), xs.end(), t);
  if (it == xs.begin()) return ys.front();
  if (it == xs.end()) return ys.back();
  const auto hi = static_cast<std::size_t>(it - xs.begin());
  const std::size_t lo = hi - 1;
  const double span = xs[hi] - xs[lo];
  if (span <= 0.0) return ys[hi];
  const double u = (t - xs[lo]) / span;
  return ys[lo] + u * (ys[hi] - ys[lo]);
}

// Spreads Q components evenly over the band when the spectrum carries no usable signal.
GMMResult flat_spectrum_prior(const numerics::SpectralSampleSet& s, int Q) {
  const double top = s.freqs.size() > 0 ? s.freqs.col(0).maxCoeff() : 1.0;
  const double band = top > 0.0 ? top : 1.0;
  GMMResult g;
  g.weights = Eigen::VectorXd::Constant(Q, 1.0 / Q);
  g.means.resize(Q, 1);
  g.variances.resize(Q, 1);
  for (int q = 0; q < Q; ++q) {
    g.means(q, 0) = band * (q + 0.5) / Q;
    const double sd = band / (2.0 * Q);
    g.variances(q, 0) = sd * sd;
  }
  return g;
}

GMMResult fit_or_flat(const numerics::SpectralSampleSet& s, int Q, std::uint64_t seed) {
  try {
    return gmm_em(s, Q, seed);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::DegenerateInput) throw;
    return flat_spectrum_prior(s, Q);
  }
}

// Guards the log-parameterized weights against components that EM emptied out.
Eigen::VectorXd floored_simplex(const Eigen::VectorXd& w) {
  Eigen::VectorXd out = w.cwiseMax(1e-6);
  return out / out.sum();
}

numerics::SpectralSampleSet pooled_spectrum(const std::vector<numerics::SpectralSampleSet>& per) {
  Eigen::Index n = 0;
  for (const auto& s : per) n += s.powers.size();
  numerics::SpectralSampleSet pooled;
  pooled.freqs.resize(n, 1);
  pooled.powers.resize(n);
  Eigen::Index row = 0;
  for (const auto& s : per) {
    const double total = s.powers.sum();
    for (Eigen::Index k = 0; k < s.powers.size(); ++k, ++row) {
      pooled.freqs(row, 0) = s.freqs(k, 0);
      // Each channel contributes equal total power.
      pooled.powers[row] = total > 0.0 ? s.powers[k] / total : 0.0;
    }
  }
  return pooled;
}

}  // namespace

numerics::SpectralSampleSet empirical_spectral_density(const ChannelSeries& channel) {
  const Eigen::Index n = channel.size();
  if (n < 8) {
    throw Error(ErrorKind::TooFewPoints, "channel " + std::to_string(channel.channel_id) +
                                             " has " + std::to_string(n) + " points, need 8");
  }
  if (channel.X.cols() != 1) {
    throw Error(ErrorKind::UnsupportedDimension,
                "spectral initialization needs one-dimensional inputs");
  }
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return channel.X(static_cast<Eigen::Index>(a), 0) < channel.X(static_cast<Eigen::Index>(b), 0);
  });
  std::vector<double> xs(order.size());
  std::vector<double> ys(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    xs[k] = channel.X(static_cast<Eigen::Index>(order[k]), 0);
    ys[k] = channel.y[static_cast<Eigen::Index>(order[k])];
  }
  const double lo = xs.front();
  const double hi = xs.back();
  if (!(hi > lo)) throw Error(ErrorKind::DegenerateInput, "all inputs coincide");

  const double dx = (hi - lo) / static_cast<double>(n - 1);
  bool uniform = true;
  for (std::size_t k = 1; k < xs.size() && uniform; ++k) {
    uniform = std::abs((xs[k] - xs[k - 1]) - dx) <= 1e-9 * dx;
  }
  Eigen::VectorXd gx(n);
  Eigen::VectorXd gy(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (uniform) {
      gx[k] = xs[static_cast<std::size_t>(k)];
      gy[k] = ys[static_cast<std::size_t>(k)];
    } else {
      gx[k] = k + 1 == n ? hi : lo + dx * static_cast<double>(k);
      gy[k] = interpolate(xs, ys, gx[k]);
    }
  }
  return numerics::periodogram(gx, gy);
}

GMMResult gmm_em(const numerics::SpectralSampleSet& samples, int Q, std::uint64_t seed,
                 int max_iterations, double tolerance) {
  if (Q < 1) throw Error(ErrorKind::InvalidArgument, "Q must be >= 1");
  const Eigen::Index n = samples.freqs.rows();
  const Eigen::Index P = samples.freqs.cols();
  if (samples.powers.size() != n || n == 0 || P == 0) {
    throw Error(ErrorKind::DimensionMismatch, "freqs and powers do not match");
  }
  if (!samples.freqs.allFinite() || !samples.powers.allFinite() ||
      (samples.powers.array() < 0.0).any()) {
    throw Error(ErrorKind::InvalidArgument, "powers must be finite and nonnegative");
  }

  const Eigen::VectorXd& pw = samples.powers;
  const double total = pw.sum();
  const double max_power = pw.maxCoeff();
  std::vector<Eigen::Index> support;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (pw[k] > 1e-12 * max_power && max_power > 0.0) support.push_back(k);
  }
  {
    std::vector<Eigen::Index> distinct = support;
    std::sort(distinct.begin(), distinct.end(), [&](Eigen::Index a, Eigen::Index b) {
      for (Eigen::Index p = 0; p < P; ++p) {
        if (samples.freqs(a, p) != samples.freqs(b, p)) {
          return samples.freqs(a, p) < samples.freqs(b, p);
        }
      }
      return false;
    });
    const auto last = std::unique(distinct.begin(), distinct.end(), [&](Eigen::Index a,
                                                                        Eigen::Index b) {
      return samples.freqs.row(a) == samples.freqs.row(b);
    });
    if (std::distance(distinct.begin(), last) < Q) {
      throw Error(ErrorKind::DegenerateInput,
                  "fewer than Q=" + std::to_string(Q) + " distinct frequencies carry power");
    }
  }

  Eigen::VectorXd floor(P);
  for (Eigen::Index p = 0; p < P; ++p) {
    const double range = samples.freqs.col(p).maxCoeff() - samples.freqs.col(p).minCoeff();
    floor[p] = 1e-6 * range * range;
  }

  // k-means++ seeding on the power-weighted samples.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&](const Eigen::VectorXd& weight) {
    const double target = unit(rng) * weight.sum();
    double acc = 0.0;
    Eigen::Index pick = -1;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (weight[k] <= 0.0) continue;
      acc += weight[k];
      pick = k;
      if (acc >= target) break;
    }
    return pick;
  };
  Eigen::MatrixXd centers(Q, P);
  centers.row(0) = samples.freqs.row(draw(pw));
  Eigen::VectorXd d2 = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  for (int q = 1; q < Q; ++q) {
    for (Eigen::Index k = 0; k < n; ++k) {
      d2[k] = std::min(d2[k], (samples.freqs.row(k) - centers.row(q - 1)).squaredNorm());
    }
    centers.row(q) = samples.freqs.row(draw(pw.cwiseProduct(d2)));
  }

  GMMResult g;
  g.weights.resize(Q);
  g.means = centers;
  g.variances.resize(Q, P);
  {
    // Hard assignment to the nearest center gives the starting moments.
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(Q);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(Q, P);
    Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(Q, P);
    for (Eigen::Index k = 0; k < n; ++k) {
      Eigen::Index best = 0;
      (centers.rowwise() - samples.freqs.row(k)).rowwise().squaredNorm().minCoeff(&best);
      mass[best] += pw[k];
      sum.row(best) += pw[k] * samples.freqs.row(k);
      sq.row(best) += pw[k] * samples.freqs.row(k).cwiseAbs2();
    }
    for (int q = 0; q < Q; ++q) {
      if (mass[q] > 0.0) {
        g.means.row(q) = sum.row(q) / mass[q];
        g.variances.row(q) = (sq.row(q) / mass[q] - g.means.row(q).cwiseAbs2()).cwiseMax(0.0);
      } else {
        g.variances.row(q).setZero();
      }
      g.variances.row(q) = g.variances.row(q).cwiseMax(floor.transpose());
      g.weights[q] = std::max(mass[q], 1e-12 * total) / total;
    }
    g.weights /= g.weights.sum();
  }

  Eigen::MatrixXd logr(n, Q);
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 1; it <= max_iterations; ++it) {
    // E-step.
    double ll = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      double top = -std::numeric_limits<double>::infinity();
      for (int q = 0; q < Q; ++q) {
        double lp = std::log(g.weights[q]);
        for (Eigen::Index p = 0; p < P; ++p) {
          const double d = samples.freqs(k, p) - g.means(q, p);
          lp -= 0.5 * (kLog2Pi + std::log(g.variances(q, p)) + d * d / g.variances(q, p));
        }
        logr(k, q) = lp;
        top = std::max(top, lp);
      }
      const double lse = top + std::log((logr.row(k).array() - top).exp().sum());
      logr.row(k).array() -= lse;
      ll += pw[k] * lse;
    }
    ll /= total;
    g.log_likelihood.push_back(ll);
    g.iterations = it;
    if (std::abs(ll - prev) < tolerance) break;
    prev = ll;

    // M-step.
    const Eigen::MatrixXd r = logr.array().exp();
    for (int q = 0; q < Q; ++q) {
      const Eigen::VectorXd wq = r.col(q).cwiseProduct(pw);
      const double mass = wq.sum();
      if (!(mass > 1e-300)) continue;  // empty component keeps its parameters
      g.weights[q] = mass / total;
      g.means.row(q) = (samples.freqs.transpose() * wq).transpose() / mass;
      for (Eigen::Index p = 0; p < P; ++p) {
        const double v =
            ((samples.freqs.col(p).array() - g.means(q, p)).square() * wq.array()).sum() / mass;
        g.variances(q, p) = std::max(v, floor[p]);
      }
    }
    g.weights /= g.weights.sum();
  }

  std::vector<int> order(static_cast<std::size_t>(Q));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return g.means(a, 0) < g.means(b, 0); });
  GMMResult sorted = g;
  for (int q = 0; q < Q; ++q) {
    sorted.weights[q] = g.weights[order[static_cast<std::size_t>(q)]];
    sorted.means.row(q) = g.means.row(order[static_cast<std::size_t>(q)]);
    sorted.variances.row(q) = g.variances.row(order[static_cast<std::size_t>(q)]);
  }
  return sorted;
}

KernelParams init_params(const MultiChannelDataset& d, int Q, Family family, std::uint64_t seed) {
  validate(d);
  if (d.M() < 1) throw Error(ErrorKind::InvalidArgument, "dataset has no channels");
  KernelParams p = make_params(family, Q, d.M(), d.P);

  std::vector<numerics::SpectralSampleSet> spectra;
  std::vector<double> variance;
  for (const auto& c : d.channels) {
    spectra.push_back(empirical_spectral_density(c));
    variance.push_back(std::max(sample_variance(c.y), 1e-6));
  }

  switch (family) {
    case Family::SM:
    case Family::MOCSM:
    case Family::MOSM:
      for (int m = 0; m < d.M(); ++m) {
        const GMMResult g = fit_or_flat(spectra[static_cast<std::size_t>(m)], Q,
                                        seed + static_cast<std::uint64_t>(m));
        const Eigen::VectorXd w = floored_simplex(g.weights);
        for (int q = 0; q < Q; ++q) {
          auto& c = p.spectral[q][m];
          c.w = w[q] * variance[static_cast<std::size_t>(m)];
          c.mu = g.means.row(q).transpose();
          c.sigma2 = g.variances.row(q).transpose();
        }
      }
      break;
    case Family::CSM: {
      const GMMResult g = fit_or_flat(pooled_spectrum(spectra), Q, seed);
      const Eigen::VectorXd w = floored_simplex(g.weights);
      for (int q = 0; q < Q; ++q) {
        auto& c = p.csm[q];
        c.mu = g.means(q, 0);
        c.sigma2 = g.variances(q, 0);
        for (int m = 0; m < d.M(); ++m) {
          c.weight[m] = std::sqrt(w[q] * variance[static_cast<std::size_t>(m)]);
        }
      }
      break;
    }
    case Family::SM_LMC:
    case Family::SE_LMC:
    case Family::MATERN_LMC: {
      const GMMResult g = fit_or_flat(pooled_spectrum(spectra), Q, seed);
      const Eigen::VectorXd w = floored_simplex(g.weights);
      for (int q = 0; q < Q; ++q) {
        auto& c = p.lmc[q];
        c.mixing.setZero();
        for (int m = 0; m < d.M(); ++m) c.mixing(m, m) = std::sqrt(variance[static_cast<std::size_t>(m)]);
        if (family == Family::SM_LMC) {
          c.w = w[q];
          c.mu = g.means.row(q).transpose();
          c.sigma2 = g.variances.row(q).transpose();
        } else {
          c.base.scale = w[q];
          for (int dim = 0; dim < d.P; ++dim) {
            // Lengthscale matching the component's rms frequency.
            const double rms = std::sqrt(g.means(q, dim) * g.means(q, dim) + g.variances(q, dim));
            c.base.lengthscale[dim] = 1.0 / (2.0 * std::numbers::pi * rms);
          }
        }
      }
      break;
    }
  }
  validate(p);
  return p;
}

Eigen::VectorXd init_noise(const MultiChannelDataset& d) {
  Eigen::VectorXd noise(d.M());
  for (int m = 0; m < d.M(); ++m) {
    noise[m] = std::max(0.01 * sample_variance(d.channels[static_cast<std::size_t>(m)].y), 1e-6);
  }
  return noise;
}

}  // namespace mocsm

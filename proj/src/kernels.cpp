#include "mocsm/kernels.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "mocsm/errors.hpp"

namespace mocsm {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kPi2 = kPi * kPi;

bool is_spectral(Family f) {
  return f == Family::SM || f == Family::MOCSM || f == Family::MOSM;
}

bool is_lmc(Family f) {
  return f == Family::SM_LMC || f == Family::SE_LMC || f == Family::MATERN_LMC;
}

void check_channel(const KernelParams& p, int i) {
  if (i < 0 || i >= p.M) {
    throw Error(ErrorKind::ChannelOutOfRange,
                "channel index " + std::to_string(i) + " outside [0," + std::to_string(p.M) + ")");
  }
}

void require_family(const KernelParams& p, Family f) {
  if (p.family != f) {
    throw Error(ErrorKind::InvalidArgument,
                "expected family " + to_string(f) + ", got " + to_string(p.family));
  }
}

void check_tau(const KernelParams& p, const Eigen::VectorXd& tau) {
  if (tau.size() != p.P) {
    throw Error(ErrorKind::DimensionMismatch, "tau has length " + std::to_string(tau.size()) +
                                                  ", expected P=" + std::to_string(p.P));
  }
}

// Everything about a (q, i, j) spectral cross term that does not depend on tau,
// including the tau-independent pieces of its partial derivatives.
struct PairTerm {
  double c = 0.0;  // cross weight times cross amplitude
  Eigen::VectorXd mu;
  Eigen::VectorXd s;  // cross covariance (diagonal)
  Eigen::VectorXd theta;
  double phase = 0.0;  // sum of the phase-delay differences

  double dlogc_dlw_i = 0.0;
  double dlogc_dlw_j = 0.0;
  Eigen::VectorXd dlogc_dmu_i, dlogc_dmu_j;
  Eigen::VectorXd dmu_dmu_i, dmu_dmu_j;
  Eigen::VectorXd dlogc_dls_i, dlogc_dls_j;
  Eigen::VectorXd ds_dls_i, ds_dls_j;
  Eigen::VectorXd dmu_dls_i, dmu_dls_j;
};

PairTerm make_pair_term(const SpectralComponent& ci, const SpectralComponent& cj, bool mosm) {
  const Eigen::Index P = ci.mu.size();
  PairTerm t;
  t.mu.resize(P);
  t.s.resize(P);
  t.theta.resize(P);
  t.dlogc_dmu_i.resize(P);
  t.dlogc_dmu_j.resize(P);
  t.dmu_dmu_i.resize(P);
  t.dmu_dmu_j.resize(P);
  t.dlogc_dls_i.resize(P);
  t.dlogc_dls_j.resize(P);
  t.ds_dls_i.resize(P);
  t.ds_dls_j.resize(P);
  t.dmu_dls_i.resize(P);
  t.dmu_dls_j.resize(P);

  double log_a = 0.0;
  for (Eigen::Index p = 0; p < P; ++p) {
    const double si = ci.sigma2[p];
    const double sj = cj.sigma2[p];
    const double sum = si + sj;
    const double d = ci.mu[p] - cj.mu[p];
    log_a += 0.5 * std::log(2.0 * std::sqrt(si * sj) / sum) - 0.25 * d * d / sum;

    t.mu[p] = (si * cj.mu[p] + sj * ci.mu[p]) / sum;
    t.s[p] = 2.0 * si * sj / sum;
    t.theta[p] = ci.theta[p] - cj.theta[p];

    t.dlogc_dmu_i[p] = -0.5 * d / sum;
    t.dlogc_dmu_j[p] = 0.5 * d / sum;
    t.dmu_dmu_i[p] = sj / sum;
    t.dmu_dmu_j[p] = si / sum;

    const double sum2 = sum * sum;
    const double extra = mosm ? 0.25 : 0.0;
    t.dlogc_dls_i[p] = 0.25 - 0.5 * si / sum + 0.25 * si * d * d / sum2 + extra;
    t.dlogc_dls_j[p] = 0.25 - 0.5 * sj / sum + 0.25 * sj * d * d / sum2 + extra;
    t.ds_dls_i[p] = si * 2.0 * sj * sj / sum2;
    t.ds_dls_j[p] = sj * 2.0 * si * si / sum2;
    t.dmu_dls_i[p] = -si * sj * d / sum2;
    t.dmu_dls_j[p] = sj * si * d / sum2;
  }
  for (Eigen::Index k = 0; k < ci.phi.size(); ++k) t.phase += ci.phi[k] - cj.phi[k];

  const double cross_w = mosm ? mosm_cross_weight(ci, cj) : mocsm_cross_weight(ci, cj);
  t.c = cross_w * std::exp(log_a);
  t.dlogc_dlw_i = mosm ? 1.0 : 0.5;
  t.dlogc_dlw_j = t.dlogc_dlw_i;
  return t;
}

// Pair terms for every ordered channel pair, indexed [(i * M + j) * Q + q].
std::vector<PairTerm> make_pair_terms(const KernelParams& p) {
  const bool mosm = p.family == Family::MOSM;
  std::vector<PairTerm> terms(static_cast<std::size_t>(p.M * p.M * p.Q));
  for (int i = 0; i < p.M; ++i) {
    for (int j = 0; j < p.M; ++j) {
      if (p.family == Family::SM && i != j) continue;
      for (int q = 0; q < p.Q; ++q) {
        terms[static_cast<std::size_t>((i * p.M + j) * p.Q + q)] =
            make_pair_term(p.spectral[q][i], p.spectral[q][j], mosm);
      }
    }
  }
  return terms;
}

template <typename Tau>
double pair_term_value(const PairTerm& t, const Tau& tau) {
  double quad = 0.0;
  double lin = 0.0;
  for (Eigen::Index p = 0; p < tau.size(); ++p) {
    const double u = 2.0 * tau[p] - t.theta[p];
    quad += u * u * t.s[p];
    lin += u * t.mu[p];
  }
  return t.c * std::exp(-0.5 * kPi2 * quad) * std::cos(kPi * (lin - t.phase));
}

// Adds omega * d(term)/d(coords) into the gradient-shaped components gi, gj.
// gi and gj may alias (i == j); both contributions are then summed.
template <typename Tau>
void pair_term_gradient(const PairTerm& t, const Tau& tau, double omega, SpectralComponent& gi,
                        SpectralComponent& gj) {
  const Eigen::Index P = tau.size();
  double quad = 0.0;
  double lin = 0.0;
  for (Eigen::Index p = 0; p < P; ++p) {
    const double u = 2.0 * tau[p] - t.theta[p];
    quad += u * u * t.s[p];
    lin += u * t.mu[p];
  }
  const double env = t.c * std::exp(-0.5 * kPi2 * quad);
  const double arg = kPi * (lin - t.phase);
  const double k1 = omega * env * std::cos(arg);
  const double k2 = -omega * env * std::sin(arg);

  gi.w += k1 * t.dlogc_dlw_i;
  gj.w += k1 * t.dlogc_dlw_j;
  for (Eigen::Index p = 0; p < P; ++p) {
    const double u = 2.0 * tau[p] - t.theta[p];
    gi.mu[p] += k1 * t.dlogc_dmu_i[p] + k2 * kPi * u * t.dmu_dmu_i[p];
    gj.mu[p] += k1 * t.dlogc_dmu_j[p] + k2 * kPi * u * t.dmu_dmu_j[p];
    gi.sigma2[p] += k1 * (t.dlogc_dls_i[p] - 0.5 * kPi2 * u * u * t.ds_dls_i[p]) +
                    k2 * kPi * u * t.dmu_dls_i[p];
    gj.sigma2[p] += k1 * (t.dlogc_dls_j[p] - 0.5 * kPi2 * u * u * t.ds_dls_j[p]) +
                    k2 * kPi * u * t.dmu_dls_j[p];
    const double dtheta = k1 * kPi2 * u * t.s[p] - k2 * kPi * t.mu[p];
    gi.theta[p] += dtheta;
    gj.theta[p] -= dtheta;
  }
  for (Eigen::Index k = 0; k < gi.phi.size(); ++k) {
    gi.phi[k] -= k2 * kPi;
    gj.phi[k] += k2 * kPi;
  }
}

template <typename Tau>
double spectral_envelope(const Eigen::VectorXd& mu, const Eigen::VectorXd& s, const Tau& tau,
                         double* sin_part = nullptr) {
  double dot = 0.0;
  double quad = 0.0;
  for (Eigen::Index p = 0; p < tau.size(); ++p) {
    dot += tau[p] * mu[p];
    quad += tau[p] * tau[p] * s[p];
  }
  const double e = std::exp(-2.0 * kPi2 * quad);
  if (sin_part) *sin_part = e * std::sin(2.0 * kPi * dot);
  return e * std::cos(2.0 * kPi * dot);
}

template <typename Tau>
double base_value(const BaseKernelParams& b, const Tau& tau, double* radial_factor = nullptr) {
  double r2 = 0.0;
  for (Eigen::Index p = 0; p < tau.size(); ++p) {
    const double z = tau[p] / b.lengthscale[p];
    r2 += z * z;
  }
  if (b.kind == BaseKind::SE) {
    const double v = b.scale * std::exp(-0.5 * r2);
    // d v / d log l_p = v * tau_p^2 / l_p^2
    if (radial_factor) *radial_factor = v;
    return v;
  }
  const double r = std::sqrt(r2);
  const double e = std::exp(-std::sqrt(3.0) * r);
  // d v / d log l_p = 3 * scale * e * tau_p^2 / l_p^2
  if (radial_factor) *radial_factor = 3.0 * b.scale * e;
  return b.scale * (1.0 + std::sqrt(3.0) * r) * e;
}

// Precomputed tau-independent data for one family, shared by the Gram,
// cross-Gram and gradient loops.
struct Evaluator {
  const KernelParams& p;
  std::vector<PairTerm> terms;
  std::vector<Eigen::MatrixXd> coreg;

  explicit Evaluator(const KernelParams& params) : p(params) {
    if (is_spectral(p.family)) terms = make_pair_terms(p);
    if (is_lmc(p.family)) {
      for (const auto& c : p.lmc) coreg.push_back(c.coregionalization());
    }
  }

  template <typename Tau>
  double operator()(int i, int j, const Tau& tau) const {
    double v = 0.0;
    switch (p.family) {
      case Family::SM:
        if (i != j) return 0.0;
        [[fallthrough]];
      case Family::MOCSM:
      case Family::MOSM:
        for (int q = 0; q < p.Q; ++q) {
          v += pair_term_value(terms[static_cast<std::size_t>((i * p.M + j) * p.Q + q)], tau);
        }
        return v;
      case Family::CSM:
        for (const auto& c : p.csm) {
          const double t = tau[0];
          v += c.weight[i] * c.weight[j] * std::exp(-2.0 * kPi2 * t * t * c.sigma2) *
               std::cos(2.0 * kPi * t * c.mu + kPi * (c.phase[i] - c.phase[j]));
        }
        return v;
      case Family::SM_LMC:
        for (int q = 0; q < p.Q; ++q) {
          const auto& c = p.lmc[q];
          v += coreg[q](i, j) * c.w * spectral_envelope(c.mu, c.sigma2, tau);
        }
        return v;
      case Family::SE_LMC:
      case Family::MATERN_LMC:
        for (int q = 0; q < p.Q; ++q) v += coreg[q](i, j) * base_value(p.lmc[q].base, tau);
        return v;
    }
    return v;
  }

  template <typename Tau>
  void accumulate_gradient(int i, int j, const Tau& tau, double omega, KernelParams& g) const {
    switch (p.family) {
      case Family::SM:
        if (i != j) return;
        [[fallthrough]];
      case Family::MOCSM:
      case Family::MOSM:
        for (int q = 0; q < p.Q; ++q) {
          pair_term_gradient(terms[static_cast<std::size_t>((i * p.M + j) * p.Q + q)], tau,
                             omega, g.spectral[q][i], g.spectral[q][j]);
        }
        return;
      case Family::CSM:
        for (int q = 0; q < p.Q; ++q) {
          const auto& c = p.csm[q];
          auto& gc = g.csm[q];
          const double t = tau[0];
          const double e = std::exp(-2.0 * kPi2 * t * t * c.sigma2);
          const double arg = 2.0 * kPi * t * c.mu + kPi * (c.phase[i] - c.phase[j]);
          const double ww = c.weight[i] * c.weight[j];
          const double val = omega * ww * e * std::cos(arg);
          const double dsin = -omega * ww * e * std::sin(arg);
          gc.weight[i] += val;
          gc.weight[j] += val;
          gc.mu += dsin * 2.0 * kPi * t;
          gc.sigma2 += val * (-2.0 * kPi2 * t * t * c.sigma2);
          gc.phase[i] += dsin * kPi;
          gc.phase[j] -= dsin * kPi;
        }
        return;
      case Family::SM_LMC:
        for (int q = 0; q < p.Q; ++q) {
          const auto& c = p.lmc[q];
          auto& gc = g.lmc[q];
          double s = 0.0;
          const double env = spectral_envelope(c.mu, c.sigma2, tau, &s);
          const double b = coreg[q](i, j);
          const double val = omega * b * c.w * env;
          gc.w += val;
          for (Eigen::Index d = 0; d < tau.size(); ++d) {
            gc.mu[d] += -omega * b * c.w * s * 2.0 * kPi * tau[d];
            gc.sigma2[d] += val * (-2.0 * kPi2 * tau[d] * tau[d] * c.sigma2[d]);
          }
          const double scale = omega * c.w * env;
          for (int r = 0; r < p.M; ++r) {
            gc.mixing(i, r) += scale * c.mixing(j, r);
            gc.mixing(j, r) += scale * c.mixing(i, r);
          }
        }
        return;
      case Family::SE_LMC:
      case Family::MATERN_LMC:
        for (int q = 0; q < p.Q; ++q) {
          const auto& c = p.lmc[q];
          auto& gc = g.lmc[q];
          double radial = 0.0;
          const double base = base_value(c.base, tau, &radial);
          const double b = coreg[q](i, j);
          gc.base.scale += omega * b * base;
          for (Eigen::Index d = 0; d < tau.size(); ++d) {
            const double l = c.base.lengthscale[d];
            gc.base.lengthscale[d] += omega * b * radial * tau[d] * tau[d] / (l * l);
          }
          for (int r = 0; r < p.M; ++r) {
            gc.mixing(i, r) += omega * base * c.mixing(j, r);
            gc.mixing(j, r) += omega * base * c.mixing(i, r);
          }
        }
        return;
    }
  }
};

// Visits every free coordinate in a fixed order.
// f(double& value, bool log_transformed, const auto& name_fn)
template <typename Params, typename F>
void for_each_free(Params& p, F&& f) {
  auto nm = [](int q, int m, const char* field, Eigen::Index d) {
    return [=] {
      std::string s = "q" + std::to_string(q);
      if (m >= 0) s += ".m" + std::to_string(m);
      s += std::string(".") + field;
      if (d >= 0) s += "[" + std::to_string(d) + "]";
      return s;
    };
  };
  switch (p.family) {
    case Family::SM:
    case Family::MOCSM:
    case Family::MOSM:
      for (int q = 0; q < p.Q; ++q) {
        for (int m = 0; m < p.M; ++m) {
          auto& c = p.spectral[q][m];
          f(c.w, true, nm(q, m, "w", -1));
          for (Eigen::Index d = 0; d < c.mu.size(); ++d) f(c.mu[d], false, nm(q, m, "mu", d));
          for (Eigen::Index d = 0; d < c.sigma2.size(); ++d) {
            f(c.sigma2[d], true, nm(q, m, "sigma2", d));
          }
          if (p.family == Family::SM || m == 0) continue;
          for (Eigen::Index d = 0; d < c.theta.size(); ++d) {
            f(c.theta[d], false, nm(q, m, "theta", d));
          }
          for (Eigen::Index d = 0; d < c.phi.size(); ++d) f(c.phi[d], false, nm(q, m, "phi", d));
        }
      }
      return;
    case Family::CSM:
      for (int q = 0; q < p.Q; ++q) {
        auto& c = p.csm[q];
        f(c.mu, false, nm(q, -1, "mu", -1));
        f(c.sigma2, true, nm(q, -1, "sigma2", -1));
        for (int m = 0; m < p.M; ++m) f(c.weight[m], true, nm(q, m, "weight", -1));
        for (int m = 1; m < p.M; ++m) f(c.phase[m], false, nm(q, m, "phase", -1));
      }
      return;
    case Family::SM_LMC:
    case Family::SE_LMC:
    case Family::MATERN_LMC:
      for (int q = 0; q < p.Q; ++q) {
        auto& c = p.lmc[q];
        if (p.family == Family::SM_LMC) {
          f(c.w, true, nm(q, -1, "w", -1));
          for (Eigen::Index d = 0; d < c.mu.size(); ++d) f(c.mu[d], false, nm(q, -1, "mu", d));
          for (Eigen::Index d = 0; d < c.sigma2.size(); ++d) {
            f(c.sigma2[d], true, nm(q, -1, "sigma2", d));
          }
        } else {
          f(c.base.scale, true, nm(q, -1, "scale", -1));
          for (Eigen::Index d = 0; d < c.base.lengthscale.size(); ++d) {
            f(c.base.lengthscale[d], true, nm(q, -1, "lengthscale", d));
          }
        }
        for (int r = 0; r < p.M; ++r) {
          for (int s = 0; s <= r; ++s) {
            f(c.mixing(r, s), false, [=] {
              return "q" + std::to_string(q) + ".A[" + std::to_string(r) + "," +
                     std::to_string(s) + "]";
            });
          }
        }
      }
      return;
  }
}

KernelParams zero_like(const KernelParams& p) {
  KernelParams g = p;
  for (auto& row : g.spectral) {
    for (auto& c : row) {
      c.w = 0.0;
      c.mu.setZero();
      c.sigma2.setZero();
      c.theta.setZero();
      c.phi.setZero();
    }
  }
  for (auto& c : g.csm) {
    c.mu = 0.0;
    c.sigma2 = 0.0;
    c.weight.setZero();
    c.phase.setZero();
  }
  for (auto& c : g.lmc) {
    c.w = 0.0;
    c.mu.setZero();
    c.sigma2.setZero();
    c.base.scale = 0.0;
    c.base.lengthscale.setZero();
    c.mixing.setZero();
  }
  return g;
}

void check_vec(const Eigen::VectorXd& v, Eigen::Index n, const std::string& what) {
  if (v.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, what + " has length " + std::to_string(v.size()) +
                                                  ", expected " + std::to_string(n));
  }
  if (!v.allFinite()) throw Error(ErrorKind::InvalidArgument, what + " is not finite");
}

void check_positive(const Eigen::VectorXd& v, const std::string& what) {
  if ((v.array() <= 0.0).any()) throw Error(ErrorKind::InvalidArgument, what + " must be > 0");
}

void check_inputs(const KernelParams& p, const StackedInputs& in) {
  if (static_cast<Eigen::Index>(in.channel.size()) != in.x.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "channel labels and input rows differ in count");
  }
  if (in.x.cols() != p.P) {
    throw Error(ErrorKind::DimensionMismatch, "inputs have " + std::to_string(in.x.cols()) +
                                                  " columns, kernel expects P=" +
                                                  std::to_string(p.P));
  }
  for (int c : in.channel) check_channel(p, c);
}

}  // namespace

std::string to_string(Family f) {
  switch (f) {
    case Family::SM: return "SM";
    case Family::MOCSM: return "MOCSM";
    case Family::MOSM: return "MOSM";
    case Family::CSM: return "CSM";
    case Family::SM_LMC: return "SM_LMC";
    case Family::SE_LMC: return "SE_LMC";
    case Family::MATERN_LMC: return "MATERN_LMC";
  }
  return "?";
}

Family family_from_string(std::string_view name) {
  for (Family f : all_families()) {
    if (to_string(f) == name) return f;
  }
  if (name == "SM-LMC") return Family::SM_LMC;
  if (name == "SE-LMC") return Family::SE_LMC;
  if (name == "MATERN-LMC" || name == "Matern-LMC") return Family::MATERN_LMC;
  throw Error(ErrorKind::InvalidArgument, "unknown kernel family '" + std::string(name) + "'");
}

const std::vector<Family>& all_families() {
  static const std::vector<Family> families = {Family::SM,     Family::MOCSM,  Family::MOSM,
                                               Family::CSM,    Family::SM_LMC, Family::SE_LMC,
                                               Family::MATERN_LMC};
  return families;
}

CrossSpectralParams cross_params(const SpectralComponent& ci, const SpectralComponent& cj) {
  const Eigen::Index P = ci.mu.size();
  if (ci.sigma2.size() != P || cj.mu.size() != P || cj.sigma2.size() != P ||
      ci.theta.size() != P || cj.theta.size() != P || ci.phi.size() != cj.phi.size()) {
    throw Error(ErrorKind::DimensionMismatch, "components have different dimensions");
  }
  CrossSpectralParams x;
  x.w = mocsm_cross_weight(ci, cj);
  x.mu.resize(P);
  x.sigma2.resize(P);
  double log_a = 0.0;
  for (Eigen::Index p = 0; p < P; ++p) {
    const double sum = ci.sigma2[p] + cj.sigma2[p];
    const double d = ci.mu[p] - cj.mu[p];
    log_a += 0.5 * std::log(2.0 * std::sqrt(ci.sigma2[p] * cj.sigma2[p]) / sum) -
             0.25 * d * d / sum;
    x.mu[p] = (ci.sigma2[p] * cj.mu[p] + cj.sigma2[p] * ci.mu[p]) / sum;
    x.sigma2[p] = 2.0 * ci.sigma2[p] * cj.sigma2[p] / sum;
  }
  x.a = std::exp(log_a);
  x.theta = ci.theta - cj.theta;
  x.phi = ci.phi - cj.phi;
  return x;
}

double mocsm_cross_weight(const SpectralComponent& ci, const SpectralComponent& cj) {
  return std::sqrt(ci.w * cj.w);
}

double mosm_cross_weight(const SpectralComponent& ci, const SpectralComponent& cj) {
  double v = ci.w * cj.w;
  for (Eigen::Index p = 0; p < ci.sigma2.size(); ++p) {
    v *= std::sqrt(2.0 * kPi) * std::pow(ci.sigma2[p] * cj.sigma2[p], 0.25);
  }
  return v;
}

void validate(const KernelParams& p) {
  if (p.Q < 1 || p.M < 1 || p.P < 1) {
    throw Error(ErrorKind::InvalidArgument, "Q, M and P must all be >= 1");
  }
  const auto Q = static_cast<std::size_t>(p.Q);
  if (is_spectral(p.family)) {
    if (p.spectral.size() != Q) {
      throw Error(ErrorKind::DimensionMismatch, "expected " + std::to_string(p.Q) +
                                                    " spectral component rows");
    }
    const Eigen::Index phi_len = p.family == Family::MOSM ? 1 : p.P;
    for (int q = 0; q < p.Q; ++q) {
      if (static_cast<int>(p.spectral[q].size()) != p.M) {
        throw Error(ErrorKind::DimensionMismatch, "component row " + std::to_string(q) +
                                                      " does not have M entries");
      }
      for (int m = 0; m < p.M; ++m) {
        const auto& c = p.spectral[q][m];
        const std::string at = "component (q=" + std::to_string(q) + ", m=" + std::to_string(m) + ")";
        if (!std::isfinite(c.w) || c.w < 0.0) {
          throw Error(ErrorKind::InvalidArgument, at + " weight must be finite and >= 0");
        }
        check_vec(c.mu, p.P, at + " mu");
        check_vec(c.sigma2, p.P, at + " sigma2");
        check_positive(c.sigma2, at + " sigma2");
        check_vec(c.theta, p.P, at + " theta");
        check_vec(c.phi, phi_len, at + " phi");
        if (p.family != Family::SM && m == 0 &&
            (c.theta.cwiseAbs().maxCoeff() != 0.0 || c.phi.cwiseAbs().maxCoeff() != 0.0)) {
          throw Error(ErrorKind::InvalidArgument,
                      at + ": reference channel delays must be exactly 0");
        }
      }
    }
  } else if (p.family == Family::CSM) {
    if (p.P != 1) {
      throw Error(ErrorKind::UnsupportedDimension, "CSM is only defined for P == 1");
    }
    if (p.csm.size() != Q) throw Error(ErrorKind::DimensionMismatch, "expected Q CSM components");
    for (const auto& c : p.csm) {
      if (!std::isfinite(c.mu) || !std::isfinite(c.sigma2) || c.sigma2 <= 0.0) {
        throw Error(ErrorKind::InvalidArgument, "CSM mean/variance invalid");
      }
      check_vec(c.weight, p.M, "CSM weight");
      check_vec(c.phase, p.M, "CSM phase");
      if ((c.weight.array() < 0.0).any()) {
        throw Error(ErrorKind::InvalidArgument, "CSM weights must be >= 0");
      }
      if (c.phase[0] != 0.0) {
        throw Error(ErrorKind::InvalidArgument, "CSM reference channel phase must be exactly 0");
      }
    }
  } else {
    if (p.lmc.size() != Q) throw Error(ErrorKind::DimensionMismatch, "expected Q LMC components");
    for (const auto& c : p.lmc) {
      if (c.mixing.rows() != p.M || c.mixing.cols() != p.M) {
        throw Error(ErrorKind::DimensionMismatch, "mixing factor must be M x M");
      }
      if (!c.mixing.allFinite()) throw Error(ErrorKind::InvalidArgument, "mixing not finite");
      if (c.mixing.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().cwiseAbs().maxCoeff() !=
          0.0) {
        throw Error(ErrorKind::InvalidArgument, "mixing factor must be lower-triangular");
      }
      if (p.family == Family::SM_LMC) {
        if (!std::isfinite(c.w) || c.w < 0.0) {
          throw Error(ErrorKind::InvalidArgument, "SM-LMC weight must be >= 0");
        }
        check_vec(c.mu, p.P, "SM-LMC mu");
        check_vec(c.sigma2, p.P, "SM-LMC sigma2");
        check_positive(c.sigma2, "SM-LMC sigma2");
      } else {
        const BaseKind want = p.family == Family::SE_LMC ? BaseKind::SE : BaseKind::Matern32;
        if (c.base.kind != want) throw Error(ErrorKind::InvalidArgument, "base kernel kind");
        if (!(c.base.scale > 0.0) || !std::isfinite(c.base.scale)) {
          throw Error(ErrorKind::InvalidArgument, "base kernel scale must be > 0");
        }
        check_vec(c.base.lengthscale, p.P, "lengthscale");
        check_positive(c.base.lengthscale, "lengthscale");
      }
    }
  }
}

KernelParams make_params(Family family, int Q, int M, int P) {
  if (Q < 1 || M < 1 || P < 1) {
    throw Error(ErrorKind::InvalidArgument, "Q, M and P must all be >= 1");
  }
  if (family == Family::CSM && P != 1) {
    throw Error(ErrorKind::UnsupportedDimension, "CSM is only defined for P == 1");
  }
  KernelParams p;
  p.family = family;
  p.Q = Q;
  p.M = M;
  p.P = P;
  if (is_spectral(family)) {
    SpectralComponent c;
    c.mu = Eigen::VectorXd::Zero(P);
    c.sigma2 = Eigen::VectorXd::Ones(P);
    c.theta = Eigen::VectorXd::Zero(P);
    c.phi = Eigen::VectorXd::Zero(family == Family::MOSM ? 1 : P);
    p.spectral.assign(static_cast<std::size_t>(Q),
                      std::vector<SpectralComponent>(static_cast<std::size_t>(M), c));
  } else if (family == Family::CSM) {
    CsmComponent c;
    c.weight = Eigen::VectorXd::Ones(M);
    c.phase = Eigen::VectorXd::Zero(M);
    p.csm.assign(static_cast<std::size_t>(Q), c);
  } else {
    LmcComponent c;
    c.mu = Eigen::VectorXd::Zero(P);
    c.sigma2 = Eigen::VectorXd::Ones(P);
    c.base.kind = family == Family::MATERN_LMC ? BaseKind::Matern32 : BaseKind::SE;
    c.base.lengthscale = Eigen::VectorXd::Ones(P);
    c.mixing = Eigen::MatrixXd::Identity(M, M);
    p.lmc.assign(static_cast<std::size_t>(Q), c);
  }
  return p;
}

int param_count(Family family, int Q, int M, int P) {
  switch (family) {
    case Family::SM: return Q * M * (2 * P + 1);
    case Family::MOCSM: return Q * M * (4 * P + 1);
    case Family::MOSM: return Q * M * (3 * P + 2);
    case Family::CSM: return 2 * Q + M * (2 * Q - 1);
    case Family::SM_LMC: return Q * ((M * M + M) / 2 + 2 * P + 1);
    case Family::SE_LMC:
    case Family::MATERN_LMC: return Q * ((M * M + M) / 2 + P + 1);
  }
  return 0;
}

double sm_eval(const std::vector<SpectralComponent>& components, const Eigen::VectorXd& tau) {
  if (components.empty()) throw Error(ErrorKind::InvalidArgument, "no components");
  double v = 0.0;
  for (const auto& c : components) {
    if (c.mu.size() != tau.size() || c.sigma2.size() != tau.size()) {
      throw Error(ErrorKind::DimensionMismatch, "component dimension differs from tau");
    }
    v += c.w * spectral_envelope(c.mu, c.sigma2, tau);
  }
  return v;
}

double base_kernel_eval(const BaseKernelParams& p, const Eigen::VectorXd& tau) {
  if (p.lengthscale.size() != tau.size()) {
    throw Error(ErrorKind::DimensionMismatch, "lengthscale dimension differs from tau");
  }
  return base_value(p, tau);
}

double mocsm_eval(const KernelParams& p, int i, int j, const Eigen::VectorXd& tau) {
  require_family(p, Family::MOCSM);
  check_channel(p, i);
  check_channel(p, j);
  check_tau(p, tau);
  double v = 0.0;
  for (int q = 0; q < p.Q; ++q) {
    v += pair_term_value(make_pair_term(p.spectral[q][i], p.spectral[q][j], false), tau);
  }
  return v;
}

double mosm_eval(const KernelParams& p, int i, int j, const Eigen::VectorXd& tau) {
  require_family(p, Family::MOSM);
  check_channel(p, i);
  check_channel(p, j);
  check_tau(p, tau);
  double v = 0.0;
  for (int q = 0; q < p.Q; ++q) {
    v += pair_term_value(make_pair_term(p.spectral[q][i], p.spectral[q][j], true), tau);
  }
  return v;
}

double csm_eval(const KernelParams& p, int i, int j, const Eigen::VectorXd& tau) {
  require_family(p, Family::CSM);
  if (p.P != 1) throw Error(ErrorKind::UnsupportedDimension, "CSM is only defined for P == 1");
  check_channel(p, i);
  check_channel(p, j);
  check_tau(p, tau);
  return Evaluator(p)(i, j, tau);
}

double smlmc_eval(const KernelParams& p, int i, int j, const Eigen::VectorXd& tau) {
  require_family(p, Family::SM_LMC);
  check_channel(p, i);
  check_channel(p, j);
  check_tau(p, tau);
  return Evaluator(p)(i, j, tau);
}

double lmc_base_eval(const KernelParams& p, int i, int j, const Eigen::VectorXd& tau) {
  if (p.family != Family::SE_LMC && p.family != Family::MATERN_LMC) {
    throw Error(ErrorKind::InvalidArgument, "expected SE_LMC or MATERN_LMC");
  }
  check_channel(p, i);
  check_channel(p, j);
  check_tau(p, tau);
  return Evaluator(p)(i, j, tau);
}

double kernel_eval(const KernelParams& p, int i, int j, const Eigen::VectorXd& tau) {
  check_channel(p, i);
  check_channel(p, j);
  check_tau(p, tau);
  if (p.family == Family::CSM && p.P != 1) {
    throw Error(ErrorKind::UnsupportedDimension, "CSM is only defined for P == 1");
  }
  return Evaluator(p)(i, j, tau);
}

numerics::SymMatrix gram_matrix(const KernelParams& p, const StackedInputs& inputs) {
  check_inputs(p, inputs);
  const Evaluator k(p);
  const Eigen::Index n = inputs.size();
  numerics::SymMatrix g(n, n);
  Eigen::VectorXd tau(p.P);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b <= a; ++b) {
      tau = inputs.x.row(a) - inputs.x.row(b);
      const double v = k(inputs.channel[a], inputs.channel[b], tau);
      g(a, b) = v;
      g(b, a) = v;
    }
  }
  return g;
}

Eigen::MatrixXd cross_gram(const KernelParams& p, const StackedInputs& rows,
                           const StackedInputs& cols) {
  check_inputs(p, rows);
  check_inputs(p, cols);
  const Evaluator k(p);
  Eigen::MatrixXd g(rows.size(), cols.size());
  Eigen::VectorXd tau(p.P);
  for (Eigen::Index a = 0; a < rows.size(); ++a) {
    for (Eigen::Index b = 0; b < cols.size(); ++b) {
      tau = rows.x.row(a) - cols.x.row(b);
      g(a, b) = k(rows.channel[a], cols.channel[b], tau);
    }
  }
  return g;
}

Eigen::VectorXd prior_variance(const KernelParams& p, const StackedInputs& inputs) {
  check_inputs(p, inputs);
  const Evaluator k(p);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(p.P);
  Eigen::VectorXd v(inputs.size());
  for (Eigen::Index a = 0; a < inputs.size(); ++a) v[a] = k(inputs.channel[a], inputs.channel[a], zero);
  return v;
}

Eigen::VectorXd pack(const KernelParams& p) {
  std::vector<double> out;
  for_each_free(p, [&](const double& v, bool log_t, const auto&) {
    out.push_back(log_t ? std::log(v) : v);
  });
  return Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

KernelParams unpack(const KernelParams& shape, const Eigen::VectorXd& coords) {
  KernelParams p = shape;
  Eigen::Index k = 0;
  const Eigen::Index n = free_param_count(shape);
  if (coords.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "expected " + std::to_string(n) +
                                                  " coordinates, got " +
                                                  std::to_string(coords.size()));
  }
  for_each_free(p, [&](double& v, bool log_t, const auto&) {
    v = log_t ? std::exp(coords[k]) : coords[k];
    ++k;
  });
  return p;
}

std::vector<std::string> free_param_names(const KernelParams& p) {
  std::vector<std::string> names;
  for_each_free(p, [&](const double&, bool, const auto& name) { names.push_back(name()); });
  return names;
}

Eigen::Index free_param_count(const KernelParams& p) {
  Eigen::Index n = 0;
  for_each_free(p, [&](const double&, bool, const auto&) { ++n; });
  return n;
}

Eigen::VectorXd gram_gradient(const KernelParams& p, const StackedInputs& inputs,
                              const Eigen::MatrixXd& weights) {
  check_inputs(p, inputs);
  const Eigen::Index n = inputs.size();
  if (weights.rows() != n || weights.cols() != n) {
    throw Error(ErrorKind::DimensionMismatch, "weight matrix must be N x N");
  }
  const Evaluator k(p);
  KernelParams g = zero_like(p);
  Eigen::VectorXd tau(p.P);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b <= a; ++b) {
      const double omega = (a == b) ? weights(a, a) : weights(a, b) + weights(b, a);
      if (omega == 0.0) continue;
      tau = inputs.x.row(a) - inputs.x.row(b);
      k.accumulate_gradient(inputs.channel[a], inputs.channel[b], tau, omega, g);
    }
  }
  std::vector<double> out;
  for_each_free(g, [&](const double& v, bool, const auto&) { out.push_back(v); });
  return Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

}  // namespace mocsm

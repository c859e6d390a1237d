#include "mocsm/gp.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <optional>
#include <random>

#include "mocsm/errors.hpp"

namespace mocsm {

namespace {

struct Factorized {
  numerics::CholFactor chol;
  Eigen::VectorXd resid;  // y - offset
  Eigen::VectorXd alpha;
};

Factorized factorize(const MOGPModel& m) {
  if (m.train.y.size() == 0) throw Error(ErrorKind::InvalidArgument, "training data is empty");
  numerics::SymMatrix k = gram_matrix(m.kernel, m.train.inputs);
  Eigen::VectorXd resid = m.train.y;
  for (Eigen::Index a = 0; a < k.rows(); ++a) {
    const int ch = m.train.inputs.channel[static_cast<std::size_t>(a)];
    k(a, a) += m.noise[ch];
    resid[a] -= m.offset[ch];
  }
  Factorized f{numerics::cholesky(k), std::move(resid), {}};
  f.alpha = numerics::solve_psd(f.chol, f.resid);
  return f;
}

double nlml_from(const Factorized& f) {
  const double n = static_cast<double>(f.resid.size());
  return 0.5 * f.resid.dot(f.alpha) + 0.5 * numerics::log_det(f.chol) +
         0.5 * n * std::log(2.0 * std::numbers::pi);
}

struct Evaluation {
  double value;
  Eigen::VectorXd grad;
};

// nlml and gradient at coords, or nullopt when the model is numerically invalid there.
std::optional<Evaluation> try_evaluate(const MOGPModel& shape, const Eigen::VectorXd& coords,
                                       bool tie_noise) {
  if (!coords.allFinite()) return std::nullopt;
  try {
    const MOGPModel m = with_coords(shape, coords, tie_noise);
    NlmlWithGrad r = nlml_and_grad(m, tie_noise);
    if (!std::isfinite(r.value) || !r.grad.allFinite()) return std::nullopt;
    return Evaluation{r.value, std::move(r.grad)};
  } catch (const Error& e) {
    if (is_numerical(e.kind())) return std::nullopt;
    throw;
  }
}

struct RunResult {
  Eigen::VectorXd coords;
  double value;
  std::vector<double> trace;
  int iterations = 0;
  bool converged = false;
};

std::optional<RunResult> run_adam(const MOGPModel& shape, Eigen::VectorXd x,
                                  const OptimizerConfig& cfg) {
  auto cur = try_evaluate(shape, x, cfg.tie_noise);
  if (!cur) return std::nullopt;
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;

  RunResult r{x, cur->value, {cur->value}, 0, false};
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(x.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(x.size());
  Eigen::VectorXd g = cur->grad;
  double lr = cfg.step_size;
  int t = 0;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    ++t;
    m1 = beta1 * m1 + (1.0 - beta1) * g;
    m2 = beta2 * m2 + (1.0 - beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    const Eigen::VectorXd step =
        (m1 / c1).array() / ((m2 / c2).array().sqrt() + eps);
    Eigen::VectorXd next = x - lr * step;
    auto e = try_evaluate(shape, next, cfg.tie_noise);
    r.iterations = it;
    if (!e) {
      // Step into an invalid region: fall back to the best point with a smaller step.
      x = r.coords;
      auto back = try_evaluate(shape, x, cfg.tie_noise);
      g = back->grad;
      m1.setZero();
      m2.setZero();
      t = 0;
      lr *= 0.5;
      r.trace.push_back(r.value);
      if (lr < 1e-10) break;
      continue;
    }
    x = std::move(next);
    g = e->grad;
    if (e->value < r.value) {
      r.value = e->value;
      r.coords = x;
    }
    r.trace.push_back(r.value);
    const auto n = r.trace.size();
    if (static_cast<int>(n) > cfg.patience &&
        r.trace[n - 1 - static_cast<std::size_t>(cfg.patience)] - r.value < cfg.tolerance) {
      r.converged = true;
      break;
    }
  }
  return r;
}

Eigen::VectorXd lbfgs_direction(const Eigen::VectorXd& g, const std::deque<Eigen::VectorXd>& s,
                                const std::deque<Eigen::VectorXd>& y) {
  const std::size_t k = s.size();
  Eigen::VectorXd q = g;
  std::vector<double> alpha(k);
  std::vector<double> rho(k);
  for (std::size_t i = k; i-- > 0;) {
    rho[i] = 1.0 / y[i].dot(s[i]);
    alpha[i] = rho[i] * s[i].dot(q);
    q -= alpha[i] * y[i];
  }
  const double gamma = s.back().dot(y.back()) / y.back().squaredNorm();
  Eigen::VectorXd r = gamma * q;
  for (std::size_t i = 0; i < k; ++i) {
    const double beta = rho[i] * y[i].dot(r);
    r += s[i] * (alpha[i] - beta);
  }
  return -r;
}

std::optional<RunResult> run_lbfgs(const MOGPModel& shape, Eigen::VectorXd x,
                                   const OptimizerConfig& cfg) {
  auto cur = try_evaluate(shape, x, cfg.tie_noise);
  if (!cur) return std::nullopt;
  RunResult r{x, cur->value, {cur->value}, 0, false};
  double f = cur->value;
  Eigen::VectorXd g = cur->grad;
  std::deque<Eigen::VectorXd> S;
  std::deque<Eigen::VectorXd> Y;

  for (int it = 1; it <= cfg.max_iterations; ++it) {
    r.iterations = it;
    if (g.lpNorm<Eigen::Infinity>() <= cfg.tolerance) {
      r.converged = true;
      break;
    }
    Eigen::VectorXd d;
    if (S.empty()) {
      d = -g * std::min(1.0, cfg.step_size * 10.0 / g.lpNorm<Eigen::Infinity>());
    } else {
      d = lbfgs_direction(g, S, Y);
    }
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      S.clear();
      Y.clear();
      d = -g * std::min(1.0, cfg.step_size * 10.0 / g.lpNorm<Eigen::Infinity>());
      slope = g.dot(d);
    }

    double step = 1.0;
    std::optional<Evaluation> next;
    Eigen::VectorXd xn;
    while (step > 1e-12) {
      xn = x + step * d;
      next = try_evaluate(shape, xn, cfg.tie_noise);
      if (next && next->value <= f + 1e-4 * step * slope) break;
      next.reset();
      step *= 0.5;
    }
    if (!next) {
      if (S.empty()) break;  // no descent even along -g
      S.clear();
      Y.clear();
      r.trace.push_back(f);
      continue;
    }

    Eigen::VectorXd s = xn - x;
    Eigen::VectorXd yv = next->grad - g;
    if (s.dot(yv) > 1e-12 * s.norm() * yv.norm()) {
      S.push_back(std::move(s));
      Y.push_back(std::move(yv));
      if (static_cast<int>(S.size()) > cfg.lbfgs_memory) {
        S.pop_front();
        Y.pop_front();
      }
    }
    const double df = f - next->value;
    x = std::move(xn);
    f = next->value;
    g = std::move(next->grad);
    r.coords = x;
    r.value = f;
    r.trace.push_back(f);
    if (df <= 1e-14 * std::max(1.0, std::abs(f))) {
      r.converged = g.lpNorm<Eigen::Infinity>() <= cfg.tolerance;
      break;
    }
  }
  return r;
}

}  // namespace

MOGPModel make_model(const KernelParams& kernel, const Eigen::VectorXd& noise,
                     const MultiChannelDataset& train) {
  MOGPModel m;
  m.kernel = kernel;
  m.noise = noise;
  m.offset = Eigen::VectorXd::Zero(train.M());
  m.train = stack(train);
  validate(m);
  return m;
}

MOGPModel make_centered_model(const KernelParams& kernel, const Eigen::VectorXd& noise,
                              const MultiChannelDataset& train) {
  MOGPModel m = make_model(kernel, noise, train);
  for (int c = 0; c < train.M(); ++c) {
    const auto& y = train.channels[static_cast<std::size_t>(c)].y;
    m.offset[c] = y.size() > 0 ? y.mean() : 0.0;
  }
  return m;
}

void validate(const MOGPModel& m) {
  validate(m.kernel);
  if (m.noise.size() != m.kernel.M || m.offset.size() != m.kernel.M) {
    throw Error(ErrorKind::DimensionMismatch, "noise and offset need one entry per channel");
  }
  if (!m.noise.allFinite() || (m.noise.array() <= 0.0).any()) {
    throw Error(ErrorKind::InvalidArgument, "noise variances must be finite and > 0");
  }
  if (m.train.inputs.x.cols() != m.kernel.P) {
    throw Error(ErrorKind::DimensionMismatch, "training inputs do not match kernel P");
  }
  for (int c : m.train.inputs.channel) {
    if (c < 0 || c >= m.kernel.M) {
      throw Error(ErrorKind::ChannelOutOfRange, "training point on channel outside the kernel");
    }
  }
}

double nlml(const MOGPModel& m) { return nlml_from(factorize(m)); }

Eigen::VectorXd model_coords(const MOGPModel& m, bool tie_noise) {
  const Eigen::VectorXd k = pack(m.kernel);
  const Eigen::Index nn = tie_noise ? 1 : m.noise.size();
  Eigen::VectorXd out(k.size() + nn);
  out.head(k.size()) = k;
  if (tie_noise) {
    out[k.size()] = std::log(m.noise.mean());
  } else {
    out.tail(nn) = m.noise.array().log();
  }
  return out;
}

MOGPModel with_coords(const MOGPModel& m, const Eigen::VectorXd& coords, bool tie_noise) {
  const Eigen::Index nk = free_param_count(m.kernel);
  const Eigen::Index nn = tie_noise ? 1 : m.noise.size();
  if (coords.size() != nk + nn) {
    throw Error(ErrorKind::DimensionMismatch, "coordinate vector has the wrong length");
  }
  MOGPModel out = m;
  out.kernel = unpack(m.kernel, coords.head(nk));
  if (tie_noise) {
    out.noise.setConstant(std::exp(coords[nk]));
  } else {
    out.noise = coords.tail(nn).array().exp();
  }
  return out;
}

NlmlWithGrad nlml_and_grad(const MOGPModel& model, bool tie_noise) {
  // With tied noise the gradient is taken at the point the coordinates describe.
  const MOGPModel m = tie_noise ? with_coords(model, model_coords(model, true), true) : model;
  const Factorized f = factorize(m);
  Eigen::MatrixXd w = numerics::inverse_psd(f.chol);
  w.noalias() -= f.alpha * f.alpha.transpose();

  const Eigen::VectorXd gk = 0.5 * gram_gradient(m.kernel, m.train.inputs, w);
  const Eigen::Index nn = tie_noise ? 1 : m.noise.size();
  Eigen::VectorXd g(gk.size() + nn);
  g.head(gk.size()) = gk;
  g.tail(nn).setZero();
  for (Eigen::Index a = 0; a < w.rows(); ++a) {
    const int ch = m.train.inputs.channel[static_cast<std::size_t>(a)];
    g[gk.size() + (tie_noise ? 0 : ch)] += 0.5 * w(a, a) * m.noise[ch];
  }
  return {nlml_from(f), std::move(g)};
}

Eigen::VectorXd nlml_grad(const MOGPModel& m, bool tie_noise) {
  return nlml_and_grad(m, tie_noise).grad;
}

void validate(const OptimizerConfig& cfg) {
  if (cfg.algorithm != "adam" && cfg.algorithm != "lbfgs") {
    throw Error(ErrorKind::InvalidArgument, "unknown optimizer '" + cfg.algorithm + "'");
  }
  if (!(cfg.step_size > 0.0) || cfg.max_iterations < 1 || !(cfg.tolerance > 0.0) ||
      cfg.restarts < 1 || cfg.patience < 1 || cfg.lbfgs_memory < 1 || cfg.restart_scale < 0.0) {
    throw Error(ErrorKind::InvalidArgument, "optimizer settings must be positive");
  }
}

FitResult fit(const MOGPModel& m, const OptimizerConfig& cfg) {
  validate(cfg);
  const Eigen::VectorXd x0 = model_coords(m, cfg.tie_noise);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::optional<RunResult> best;
  FitReport report;
  for (int run = 0; run < cfg.restarts; ++run) {
    Eigen::VectorXd x = x0;
    if (run > 0) {
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        x[i] += cfg.restart_scale * (1.0 + std::abs(x0[i])) * normal(rng);
      }
    }
    auto r = cfg.algorithm == "lbfgs" ? run_lbfgs(m, x, cfg) : run_adam(m, x, cfg);
    report.restarts_used = run + 1;
    report.restart_nlml.push_back(r ? r->value : std::numeric_limits<double>::quiet_NaN());
    if (r && (!best || r->value < best->value)) best = std::move(r);
  }
  if (!best) {
    throw Error(ErrorKind::AllRestartsFailed,
                "NLML was not finite at the starting point of any of " +
                    std::to_string(cfg.restarts) + " runs");
  }

  FitResult out;
  out.model = with_coords(m, best->coords, cfg.tie_noise);
  report.nlml_trace = std::move(best->trace);
  report.final_params = out.model.kernel;
  report.final_noise = out.model.noise;
  report.iterations = best->iterations;
  report.converged = best->converged;
  out.report = std::move(report);
  return out;
}

GPPosterior predict(const MOGPModel& m, const StackedInputs& x_star, bool include_noise) {
  const Factorized f = factorize(m);
  const Eigen::MatrixXd ks = cross_gram(m.kernel, m.train.inputs, x_star);
  GPPosterior post;
  post.mean = ks.transpose() * f.alpha;
  const Eigen::MatrixXd v = f.chol.lower.triangularView<Eigen::Lower>().solve(ks);
  post.variance = prior_variance(m.kernel, x_star) - v.colwise().squaredNorm().transpose();
  for (Eigen::Index s = 0; s < x_star.size(); ++s) {
    const int ch = x_star.channel[static_cast<std::size_t>(s)];
    post.mean[s] += m.offset[ch];
    if (post.variance[s] < 0.0) {
      post.variance[s] = 0.0;
      ++post.clamped;
    }
    if (include_noise) post.variance[s] += m.noise[ch];
  }
  return post;
}

}  // namespace mocsm

#include "mocsm/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "mocsm/errors.hpp"

namespace mocsm {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size() && std::isfinite(out);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Eigen::Index MultiChannelDataset::total_points() const {
  Eigen::Index n = 0;
  for (const auto& c : channels) n += c.size();
  return n;
}

void validate(const MultiChannelDataset& d) {
  if (d.P < 1) throw Error(ErrorKind::InvalidArgument, "dataset P must be >= 1");
  for (std::size_t m = 0; m < d.channels.size(); ++m) {
    const auto& c = d.channels[m];
    if (c.channel_id != static_cast<int>(m) + 1) {
      throw Error(ErrorKind::InvalidArgument, "channel ids must be contiguous from 1");
    }
    if (c.X.rows() != c.y.size()) {
      throw Error(ErrorKind::DimensionMismatch, "channel " + std::to_string(c.channel_id) +
                                                    " has mismatched X and y");
    }
    if (c.y.size() > 0 && c.X.cols() != d.P) {
      throw Error(ErrorKind::DimensionMismatch, "channel " + std::to_string(c.channel_id) +
                                                    " has the wrong input dimension");
    }
    if (!c.X.allFinite() || !c.y.allFinite()) {
      throw Error(ErrorKind::InvalidArgument, "channel " + std::to_string(c.channel_id) +
                                                  " has non-finite values");
    }
  }
}

StackedData stack(const MultiChannelDataset& d) {
  StackedData s;
  const Eigen::Index n = d.total_points();
  s.inputs.x.resize(n, d.P);
  s.inputs.channel.reserve(static_cast<std::size_t>(n));
  s.y.resize(n);
  Eigen::Index row = 0;
  for (std::size_t m = 0; m < d.channels.size(); ++m) {
    const auto& c = d.channels[m];
    for (Eigen::Index i = 0; i < c.size(); ++i, ++row) {
      s.inputs.x.row(row) = c.X.row(i);
      s.inputs.channel.push_back(static_cast<int>(m));
      s.y[row] = c.y[i];
    }
  }
  return s;
}

Eigen::VectorXd numerical_integral(const Eigen::VectorXd& y, double dx) {
  if (y.size() < 3) throw Error(ErrorKind::TooFewPoints, "need at least 3 samples");
  if (!(dx > 0.0)) throw Error(ErrorKind::InvalidArgument, "dx must be positive");
  Eigen::VectorXd out(y.size());
  out[0] = 0.0;
  for (Eigen::Index i = 1; i < y.size(); ++i) out[i] = out[i - 1] + 0.5 * dx * (y[i - 1] + y[i]);
  return out;
}

Eigen::VectorXd numerical_derivative(const Eigen::VectorXd& y, double dx) {
  if (y.size() < 3) throw Error(ErrorKind::TooFewPoints, "need at least 3 samples");
  if (!(dx > 0.0)) throw Error(ErrorKind::InvalidArgument, "dx must be positive");
  const Eigen::Index n = y.size();
  Eigen::VectorXd out(n);
  out[0] = (y[1] - y[0]) / dx;
  out[n - 1] = (y[n - 1] - y[n - 2]) / dx;
  for (Eigen::Index i = 1; i + 1 < n; ++i) out[i] = (y[i + 1] - y[i - 1]) / (2.0 * dx);
  return out;
}

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n < 16) throw Error(ErrorKind::TooFewPoints, "synthetic data needs n >= 16");
  if (cfg.Q < 1) throw Error(ErrorKind::InvalidArgument, "Q must be >= 1");
  if (!(cfg.hi > cfg.lo)) throw Error(ErrorKind::InvalidArgument, "interval is empty");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Frequencies well inside the Nyquist band of the default grid, lengthscales
  // of a few input units.
  SyntheticDataset out;
  double total_w = 0.0;
  for (int q = 0; q < cfg.Q; ++q) {
    SpectralComponent c;
    c.w = 0.5 + unit(rng);
    c.mu = Eigen::VectorXd::Constant(1, 0.05 + 0.45 * unit(rng));
    const double sd = 0.02 + 0.06 * unit(rng);
    c.sigma2 = Eigen::VectorXd::Constant(1, sd * sd);
    c.theta = Eigen::VectorXd::Zero(1);
    c.phi = Eigen::VectorXd::Zero(1);
    total_w += c.w;
    out.source.push_back(c);
  }
  for (auto& c : out.source) c.w /= total_w;

  KernelParams sm = make_params(Family::SM, cfg.Q, 1, 1);
  for (int q = 0; q < cfg.Q; ++q) sm.spectral[q][0] = out.source[q];

  const double dx = (cfg.hi - cfg.lo) / static_cast<double>(cfg.n - 1);
  StackedInputs grid;
  grid.x.resize(cfg.n, 1);
  grid.channel.assign(static_cast<std::size_t>(cfg.n), 0);
  for (int i = 0; i < cfg.n; ++i) grid.x(i, 0) = cfg.lo + dx * i;

  numerics::SymMatrix k = gram_matrix(sm, grid);
  k.diagonal().array() += 1e-6;
  const numerics::CholFactor f = numerics::cholesky(k);

  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(cfg.n);
  for (int i = 0; i < cfg.n; ++i) z[i] = normal(rng);
  const Eigen::VectorXd signal = f.lower.triangularView<Eigen::Lower>() * z;

  const Eigen::VectorXd series[3] = {signal, numerical_integral(signal, dx),
                                     numerical_derivative(signal, dx)};
  out.data.P = 1;
  for (int m = 0; m < 3; ++m) {
    ChannelSeries c;
    c.channel_id = m + 1;
    c.X = grid.x;
    c.y = series[m];
    out.data.channels.push_back(std::move(c));
  }
  return out;
}

MultiChannelDataset parse_csv(const std::string& text, int P) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_fields(line);
      break;
    }
  }
  if (header.empty()) throw Error(ErrorKind::EmptyFile, "no header row");
  const int cols = static_cast<int>(header.size());
  if (P == 0) P = cols - 2;
  if (P < 1 || cols != P + 2 || trim(header.front()) != "channel" || trim(header.back()) != "y") {
    throw Error(ErrorKind::MalformedRow,
                "line " + std::to_string(line_no) + ": header must be channel,x1..x" +
                    std::to_string(std::max(P, 1)) + ",y");
  }

  std::map<std::string, int> remap;
  std::vector<std::vector<double>> xs;
  std::vector<std::vector<double>> ys;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (static_cast<int>(fields.size()) != cols) {
      throw Error(ErrorKind::MalformedRow, "line " + std::to_string(line_no) + ": expected " +
                                               std::to_string(cols) + " fields, got " +
                                               std::to_string(fields.size()));
    }
    const std::string label = trim(fields[0]);
    double probe = 0.0;
    if (label.empty() || !parse_double(label, probe)) {
      throw Error(ErrorKind::MalformedRow,
                  "line " + std::to_string(line_no) + ": channel label is not numeric");
    }
    auto [it, inserted] = remap.emplace(label, static_cast<int>(remap.size()));
    if (inserted) {
      xs.emplace_back();
      ys.emplace_back();
    }
    const auto m = static_cast<std::size_t>(it->second);
    for (int c = 1; c < cols; ++c) {
      double v = 0.0;
      if (!parse_double(fields[static_cast<std::size_t>(c)], v)) {
        throw Error(ErrorKind::MalformedRow, "line " + std::to_string(line_no) + ": field " +
                                                 std::to_string(c + 1) + " is not a number");
      }
      if (c < cols - 1) {
        xs[m].push_back(v);
      } else {
        ys[m].push_back(v);
      }
    }
  }
  if (remap.empty()) throw Error(ErrorKind::EmptyFile, "no data rows");

  MultiChannelDataset d;
  d.P = P;
  for (std::size_t m = 0; m < ys.size(); ++m) {
    ChannelSeries c;
    c.channel_id = static_cast<int>(m) + 1;
    const auto n = static_cast<Eigen::Index>(ys[m].size());
    c.X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        xs[m].data(), n, P);
    c.y = Eigen::Map<const Eigen::VectorXd>(ys[m].data(), n);
    d.channels.push_back(std::move(c));
  }
  return d;
}

MultiChannelDataset load_csv(const std::string& path, int P) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::EmptyFile, "cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_csv(ss.str(), P);
}

std::string to_csv(const MultiChannelDataset& d) {
  std::string out = "channel";
  for (int p = 1; p <= d.P; ++p) out += ",x" + std::to_string(p);
  out += ",y\n";
  for (const auto& c : d.channels) {
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      out += std::to_string(c.channel_id);
      for (int p = 0; p < d.P; ++p) out += "," + format_double(c.X(i, p));
      out += "," + format_double(c.y[i]) + "\n";
    }
  }
  return out;
}

void save_csv(const MultiChannelDataset& d, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::InvalidArgument, "cannot write " + path);
  f << to_csv(d);
}

SplitScheme parse_scheme(const std::string& text) {
  const std::string t = trim(text);
  if (t == "first") return SplitScheme::first_half();
  if (t == "last") return SplitScheme::last_half();
  if (t == "all") return SplitScheme::all();
  if (t == "random") return SplitScheme::random_half(0);
  if (t.rfind("random:", 0) == 0) {
    const std::string s = t.substr(7);
    char* end = nullptr;
    const unsigned long long seed = std::strtoull(s.c_str(), &end, 10);
    if (!s.empty() && end == s.c_str() + s.size()) return SplitScheme::random_half(seed);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown split scheme '" + t + "'");
}

std::string to_string(const SplitScheme& s) {
  switch (s.kind) {
    case SplitScheme::Kind::RandomHalf: return "random:" + std::to_string(s.seed);
    case SplitScheme::Kind::FirstHalf: return "first";
    case SplitScheme::Kind::LastHalf: return "last";
    case SplitScheme::Kind::All: return "all";
  }
  return "?";
}

std::vector<SplitScheme> parse_schemes(const std::string& text) {
  std::vector<SplitScheme> out;
  for (const auto& f : split_fields(text)) out.push_back(parse_scheme(f));
  return out;
}

std::pair<MultiChannelDataset, MultiChannelDataset> split(
    const MultiChannelDataset& d, const std::vector<SplitScheme>& schemes) {
  if (static_cast<int>(schemes.size()) != d.M()) {
    throw Error(ErrorKind::DimensionMismatch, "need one split scheme per channel");
  }
  MultiChannelDataset train{{}, d.P};
  MultiChannelDataset test{{}, d.P};
  for (int m = 0; m < d.M(); ++m) {
    const auto& c = d.channels[static_cast<std::size_t>(m)];
    const auto n = static_cast<std::size_t>(c.size());
    const std::size_t n_train = (n + 1) / 2;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;
    const auto& s = schemes[static_cast<std::size_t>(m)];
    switch (s.kind) {
      case SplitScheme::Kind::All:
        train_idx = order;
        break;
      case SplitScheme::Kind::RandomHalf: {
        std::mt19937_64 rng(s.seed);
        std::shuffle(order.begin(), order.end(), rng);
        train_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
        test_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
        break;
      }
      case SplitScheme::Kind::FirstHalf:
      case SplitScheme::Kind::LastHalf: {
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) {
                           return c.X(static_cast<Eigen::Index>(a), 0) <
                                  c.X(static_cast<Eigen::Index>(b), 0);
                         });
        const std::size_t cut = s.kind == SplitScheme::Kind::FirstHalf ? n_train : n - n_train;
        auto lo = std::vector<std::size_t>(order.begin(),
                                           order.begin() + static_cast<std::ptrdiff_t>(cut));
        auto hi = std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(cut),
                                           order.end());
        train_idx = s.kind == SplitScheme::Kind::FirstHalf ? lo : hi;
        test_idx = s.kind == SplitScheme::Kind::FirstHalf ? hi : lo;
        break;
      }
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    auto take = [&](const std::vector<std::size_t>& idx) {
      ChannelSeries out;
      out.channel_id = c.channel_id;
      out.X.resize(static_cast<Eigen::Index>(idx.size()), d.P);
      out.y.resize(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t k = 0; k < idx.size(); ++k) {
        out.X.row(static_cast<Eigen::Index>(k)) = c.X.row(static_cast<Eigen::Index>(idx[k]));
        out.y[static_cast<Eigen::Index>(k)] = c.y[static_cast<Eigen::Index>(idx[k])];
      }
      return out;
    };
    train.channels.push_back(take(train_idx));
    test.channels.push_back(take(test_idx));
  }
  return {std::move(train), std::move(test)};
}

}  // namespace mocsm

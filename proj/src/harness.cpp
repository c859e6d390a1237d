#include "mocsm/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>

#include "mocsm/errors.hpp"
#include "mocsm/init.hpp"
#include "mocsm/io.hpp"

namespace mocsm {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Keeps error text on one CSV field.
std::string one_field(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double from_num_or_null(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

double parse_double(const std::string& s) {
  if (s == "nan" || s.empty()) return kNaN;
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw Error(ErrorKind::MalformedRow, "not a number: '" + s + "'");
  }
  return v;
}

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

bool same_double(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

ComparisonRow baseline_row(const MultiChannelDataset& train, const MultiChannelDataset& test,
                           const std::vector<int>& task_channels) {
  ComparisonRow row;
  row.family = "MEAN";
  row.nlml = kNaN;
  row.param_count = train.M();
  for (int id : task_channels) {
    const auto& tr = train.channels[static_cast<std::size_t>(id - 1)].y;
    const auto& te = test.channels[static_cast<std::size_t>(id - 1)].y;
    const double c = tr.size() > 0 ? tr.mean() : 0.0;
    row.mae.push_back(mae(te, Eigen::VectorXd::Constant(te.size(), c)));
  }
  return row;
}

}  // namespace

double mae(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
  if (y_true.size() != y_pred.size() || y_true.size() == 0) {
    throw Error(ErrorKind::DimensionMismatch, "mae needs two vectors of equal nonzero length");
  }
  return (y_true - y_pred).cwiseAbs().sum() / static_cast<double>(y_true.size());
}

bool ComparisonReport::operator==(const ComparisonReport& o) const {
  if (dataset != o.dataset || seed != o.seed || Q != o.Q || schemes != o.schemes ||
      tasks != o.tasks || task_channels != o.task_channels || rows.size() != o.rows.size()) {
    return false;
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& a = rows[i];
    const auto& b = o.rows[i];
    if (a.family != b.family || a.param_count != b.param_count || a.error != b.error ||
        a.mae.size() != b.mae.size() || !same_double(a.nlml, b.nlml) ||
        !same_double(a.fit_seconds, b.fit_seconds)) {
      return false;
    }
    for (std::size_t k = 0; k < a.mae.size(); ++k) {
      if (!same_double(a.mae[k], b.mae[k])) return false;
    }
  }
  return true;
}

ComparisonReport compare(const MultiChannelDataset& d, const std::vector<SplitScheme>& schemes,
                         const std::vector<Family>& families, int Q, const OptimizerConfig& cfg,
                         std::uint64_t seed, const CompareOptions& opts) {
  if (families.empty()) throw Error(ErrorKind::InvalidArgument, "no kernel families to compare");
  if (Q < 1) throw Error(ErrorKind::InvalidArgument, "Q must be >= 1");
  validate(d);
  validate(cfg);
  if (!opts.channel_names.empty() && static_cast<int>(opts.channel_names.size()) != d.M()) {
    throw Error(ErrorKind::DimensionMismatch, "need one channel name per channel");
  }
  const auto [train, test] = split(d, schemes);

  ComparisonReport report;
  report.dataset = opts.dataset;
  report.seed = seed;
  report.Q = Q;
  for (const auto& s : schemes) report.schemes.push_back(to_string(s));
  for (int m = 0; m < d.M(); ++m) {
    if (test.channels[static_cast<std::size_t>(m)].size() == 0) continue;
    report.task_channels.push_back(m + 1);
    report.tasks.push_back(opts.channel_names.empty() ? "ch" + std::to_string(m + 1)
                                                      : opts.channel_names[static_cast<std::size_t>(m)]);
  }
  if (report.tasks.empty()) {
    throw Error(ErrorKind::InvalidArgument, "split leaves no test points on any channel");
  }

  StackedData test_stack = stack(test);
  OptimizerConfig run_cfg = cfg;
  run_cfg.seed = seed;

  for (Family fam : families) {
    ComparisonRow row;
    row.family = to_string(fam);
    row.param_count = param_count(fam, Q, d.M(), d.P);
    row.nlml = kNaN;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const KernelParams k0 = init_params(train, Q, fam, seed);
      const MOGPModel m0 = make_centered_model(k0, init_noise(train), train);
      const FitResult fitted = fit(m0, run_cfg);
      row.nlml = fitted.report.nlml_trace.empty() ? nlml(fitted.model) : fitted.report.nlml_trace.back();
      const GPPosterior post = predict(fitted.model, test_stack.inputs);
      for (int id : report.task_channels) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index s = 0; s < test_stack.inputs.size(); ++s) {
          if (test_stack.inputs.channel[static_cast<std::size_t>(s)] == id - 1) idx.push_back(s);
        }
        Eigen::VectorXd yt(static_cast<Eigen::Index>(idx.size()));
        Eigen::VectorXd yp(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) {
          yt[static_cast<Eigen::Index>(k)] = test_stack.y[idx[k]];
          yp[static_cast<Eigen::Index>(k)] = post.mean[idx[k]];
        }
        row.mae.push_back(mae(yt, yp));
      }
    } catch (const std::exception& e) {
      row.error = one_field(e.what());
      row.mae.assign(report.tasks.size(), kNaN);
    }
    if (opts.timing) {
      row.fit_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    report.rows.push_back(std::move(row));
  }
  if (opts.include_baseline) report.rows.push_back(baseline_row(train, test, report.task_channels));
  return report;
}

json report_to_json(const ComparisonReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    json mae_j = json::array();
    for (double v : row.mae) mae_j.push_back(num_or_null(v));
    rows.push_back({{"family", row.family},
                    {"param_count", row.param_count},
                    {"nlml", num_or_null(row.nlml)},
                    {"fit_seconds", row.fit_seconds},
                    {"mae", mae_j},
                    {"error", row.error}});
  }
  return {{"dataset", r.dataset}, {"seed", r.seed},   {"Q", r.Q},
          {"schemes", r.schemes}, {"tasks", r.tasks}, {"task_channels", r.task_channels},
          {"rows", rows}};
}

ComparisonReport report_from_json(const json& j) {
  ComparisonReport r;
  try {
    r.dataset = j.at("dataset").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.Q = j.at("Q").get<int>();
    r.schemes = j.at("schemes").get<std::vector<std::string>>();
    r.tasks = j.at("tasks").get<std::vector<std::string>>();
    r.task_channels = j.at("task_channels").get<std::vector<int>>();
    for (const auto& row_j : j.at("rows")) {
      ComparisonRow row;
      row.family = row_j.at("family").get<std::string>();
      row.param_count = row_j.at("param_count").get<int>();
      row.nlml = from_num_or_null(row_j.at("nlml"));
      row.fit_seconds = row_j.at("fit_seconds").get<double>();
      for (const auto& v : row_j.at("mae")) row.mae.push_back(from_num_or_null(v));
      row.error = row_j.at("error").get<std::string>();
      r.rows.push_back(std::move(row));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("bad report: ") + e.what());
  }
  return r;
}

std::string report_to_csv(const ComparisonReport& r) {
  std::ostringstream out;
  out << "# dataset=" << r.dataset << "\n";
  out << "# seed=" << r.seed << "\n";
  out << "# Q=" << r.Q << "\n";
  out << "# schemes=";
  for (std::size_t i = 0; i < r.schemes.size(); ++i) out << (i ? ";" : "") << r.schemes[i];
  out << "\n# task_channels=";
  for (std::size_t i = 0; i < r.task_channels.size(); ++i) out << (i ? ";" : "") << r.task_channels[i];
  out << "\nfamily,param_count,nlml,fit_seconds";
  for (const auto& t : r.tasks) out << "," << t;
  out << ",error\n";
  for (const auto& row : r.rows) {
    out << row.family << "," << row.param_count << "," << io::format_double(row.nlml) << ","
        << io::format_double(row.fit_seconds);
    for (double v : row.mae) out << "," << io::format_double(v);
    out << "," << row.error << "\n";
  }
  return out.str();
}

ComparisonReport report_from_csv(const std::string& text) {
  ComparisonReport r;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2);
      const std::string val = line.substr(eq + 1);
      if (key == "dataset") {
        r.dataset = val;
      } else if (key == "seed") {
        r.seed = std::stoull(val);
      } else if (key == "Q") {
        r.Q = std::stoi(val);
      } else if (key == "schemes") {
        if (!val.empty()) r.schemes = split_fields(val, ';');
      } else if (key == "task_channels") {
        if (!val.empty()) {
          for (const auto& s : split_fields(val, ';')) r.task_channels.push_back(std::stoi(s));
        }
      }
      continue;
    }
    const auto f = split_fields(line, ',');
    if (!header) {
      if (f.size() < 5 || f[0] != "family" || f.back() != "error") {
        throw Error(ErrorKind::MalformedRow, "line " + std::to_string(lineno) + ": bad report header");
      }
      r.tasks.assign(f.begin() + 4, f.end() - 1);
      header = true;
      continue;
    }
    if (f.size() != r.tasks.size() + 5) {
      throw Error(ErrorKind::MalformedRow, "line " + std::to_string(lineno) + ": wrong field count");
    }
    ComparisonRow row;
    row.family = f[0];
    row.param_count = std::stoi(f[1]);
    row.nlml = parse_double(f[2]);
    row.fit_seconds = parse_double(f[3]);
    for (std::size_t k = 0; k < r.tasks.size(); ++k) row.mae.push_back(parse_double(f[4 + k]));
    row.error = f.back();
    r.rows.push_back(std::move(row));
  }
  if (!header) throw Error(ErrorKind::EmptyFile, "report has no header");
  return r;
}

KernelParams spectral_counterpart(const KernelParams& p) {
  if (p.family != Family::MOCSM && p.family != Family::MOSM) {
    throw Error(ErrorKind::InvalidArgument, "only MOCSM and MOSM kernels have a counterpart");
  }
  KernelParams out = p;
  out.family = p.family == Family::MOCSM ? Family::MOSM : Family::MOCSM;
  for (auto& row : out.spectral) {
    for (auto& c : row) {
      if (out.family == Family::MOSM) {
        c.phi = Eigen::VectorXd::Constant(1, c.phi.sum());
      } else {
        const double s = c.phi.size() > 0 ? c.phi[0] : 0.0;
        c.phi = Eigen::VectorXd::Zero(p.P);
        c.phi[0] = s;
      }
    }
  }
  validate(out);
  return out;
}

std::vector<CurvePoint> export_cross_covariance(const KernelParams& p,
                                                const std::vector<std::pair<int, int>>& pairs,
                                                const std::vector<double>& tau_grid,
                                                bool with_counterpart) {
  validate(p);
  for (const auto& [i, j] : pairs) {
    if (i < 0 || i >= p.M || j < 0 || j >= p.M) {
      throw Error(ErrorKind::ChannelOutOfRange,
                  "pair (" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ") outside 1.." +
                      std::to_string(p.M));
    }
  }
  std::vector<KernelParams> kernels{p};
  if (with_counterpart) kernels.push_back(spectral_counterpart(p));

  std::vector<CurvePoint> out;
  Eigen::VectorXd tau = Eigen::VectorXd::Zero(p.P);
  for (const auto& k : kernels) {
    for (const auto& [i, j] : pairs) {
      const std::string label =
          to_string(k.family) + ":" + std::to_string(i + 1) + "x" + std::to_string(j + 1);
      for (double t : tau_grid) {
        tau[0] = t;
        out.push_back({t, label, kernel_eval(k, i, j, tau)});
      }
    }
  }
  return out;
}

std::string curves_to_csv(const std::vector<CurvePoint>& curves) {
  std::string out = "tau,pair_label,value\n";
  for (const auto& c : curves) {
    out += io::format_double(c.tau) + "," + c.label + "," + io::format_double(c.value) + "\n";
  }
  return out;
}

}  // namespace mocsm

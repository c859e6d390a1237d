// mocsm command line tool.
//
// Exit codes: 0 success, 2 input error, 3 numerical failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "mocsm/data.hpp"
#include "mocsm/errors.hpp"
#include "mocsm/gp.hpp"
#include "mocsm/harness.hpp"
#include "mocsm/init.hpp"
#include "mocsm/io.hpp"
#include "mocsm/kernels.hpp"

using namespace mocsm;

namespace {

constexpr int kInputError = 2;
constexpr int kNumericalError = 3;

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidArgument, "bad number '" + s + "' in " + what);
  }
}

int to_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidArgument, "bad integer '" + s + "' in " + what);
  }
}

// One scheme per channel; a single scheme applies to every channel.
std::vector<SplitScheme> expand_schemes(std::vector<SplitScheme> s, int M) {
  if (s.empty()) return std::vector<SplitScheme>(static_cast<std::size_t>(M), SplitScheme::all());
  if (s.size() == 1 && M > 1) s.assign(static_cast<std::size_t>(M), s.front());
  return s;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    io::write_text_file(path, text);
  }
}

// "channel,x1,...,xP" with 1-based channel ids; a trailing y column is ignored.
StackedInputs load_points(const std::string& path, int P, int M) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::EmptyFile, path + " is empty");
  std::vector<std::vector<double>> rows;
  std::vector<int> channel;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_on(line, ',');
    if (static_cast<int>(f.size()) < P + 1) {
      throw Error(ErrorKind::MalformedRow, path + " line " + std::to_string(lineno) + ": too few fields");
    }
    const int id = to_int(f[0], path + " line " + std::to_string(lineno));
    if (id < 1 || id > M) {
      throw Error(ErrorKind::ChannelOutOfRange,
                  path + " line " + std::to_string(lineno) + ": channel " + std::to_string(id));
    }
    channel.push_back(id - 1);
    std::vector<double> x;
    for (int p = 0; p < P; ++p) x.push_back(to_double(f[static_cast<std::size_t>(p + 1)], path));
    rows.push_back(std::move(x));
  }
  if (rows.empty()) throw Error(ErrorKind::EmptyFile, path + " has no points");
  StackedInputs s;
  s.channel = channel;
  s.x.resize(static_cast<Eigen::Index>(rows.size()), P);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (int p = 0; p < P; ++p) s.x(static_cast<Eigen::Index>(r), p) = rows[r][static_cast<std::size_t>(p)];
  }
  return s;
}

std::string predictions_csv(const StackedInputs& pts, const GPPosterior& post, int P) {
  std::string out = "channel";
  for (int p = 0; p < P; ++p) out += ",x" + std::to_string(p + 1);
  out += ",mean,variance\n";
  for (Eigen::Index s = 0; s < pts.size(); ++s) {
    out += std::to_string(pts.channel[static_cast<std::size_t>(s)] + 1);
    for (int p = 0; p < P; ++p) out += "," + io::format_double(pts.x(s, p));
    out += "," + io::format_double(post.mean[s]) + "," + io::format_double(post.variance[s]) + "\n";
  }
  return out;
}

std::vector<double> parse_grid(const std::string& spec) {
  // "lo:hi:n" or a comma-separated list.
  std::vector<double> grid;
  if (spec.find(':') != std::string::npos) {
    const auto f = split_on(spec, ':');
    if (f.size() != 3) throw Error(ErrorKind::InvalidArgument, "grid must be lo:hi:n");
    const double lo = to_double(f[0], "grid");
    const double hi = to_double(f[1], "grid");
    const int n = to_int(f[2], "grid");
    if (n < 1) throw Error(ErrorKind::InvalidArgument, "grid needs at least one point");
    for (int k = 0; k < n; ++k) grid.push_back(n == 1 ? lo : lo + (hi - lo) * k / (n - 1));
  } else {
    for (const auto& s : split_on(spec, ',')) grid.push_back(to_double(s, "grid"));
  }
  if (grid.empty()) throw Error(ErrorKind::InvalidArgument, "empty grid");
  return grid;
}

std::vector<std::pair<int, int>> parse_pairs(const std::string& spec) {
  // "1:2,3:4", 1-based.
  std::vector<std::pair<int, int>> pairs;
  for (const auto& item : split_on(spec, ',')) {
    const auto f = split_on(item, ':');
    if (f.size() != 2) throw Error(ErrorKind::InvalidArgument, "pairs must look like 1:2,3:4");
    pairs.emplace_back(to_int(f[0], "pairs") - 1, to_int(f[1], "pairs") - 1);
  }
  if (pairs.empty()) throw Error(ErrorKind::InvalidArgument, "no channel pairs given");
  return pairs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-output spectral mixture Gaussian processes"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Draw the three-channel synthetic dataset");
  SyntheticConfig gcfg;
  std::vector<double> interval{-10.0, 10.0};
  std::string gen_out;
  gen->add_option("--seed", gcfg.seed, "Random seed");
  gen->add_option("--q", gcfg.Q, "Spectral components of the source kernel");
  gen->add_option("--n", gcfg.n, "Points per channel");
  gen->add_option("--interval", interval, "Input interval, two values")->expected(2)->delimiter(',');
  gen->add_option("--out", gen_out, "Output CSV (default stdout)");

  // init
  auto* ini = app.add_subcommand("init", "Spectral initialization of kernel parameters");
  std::string ini_data, ini_family = "MOCSM", ini_out;
  int ini_q = 3;
  std::uint64_t ini_seed = 0;
  ini->add_option("--data", ini_data, "Dataset CSV")->required();
  ini->add_option("--q", ini_q, "Number of components");
  ini->add_option("--family", ini_family, "Kernel family");
  ini->add_option("--seed", ini_seed, "EM seed");
  ini->add_option("--out", ini_out, "Output parameter JSON (default stdout)");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Optimize the marginal likelihood");
  std::string fit_data, fit_params, fit_config, fit_out, fit_report, fit_trace;
  fit_cmd->add_option("--data", fit_data, "Dataset CSV")->required();
  fit_cmd->add_option("--params", fit_params, "Initial parameter JSON")->required();
  fit_cmd->add_option("--config", fit_config, "Optimizer and split JSON");
  fit_cmd->add_option("--out", fit_out, "Output model JSON (default stdout)");
  fit_cmd->add_option("--report", fit_report, "Fit report JSON");
  fit_cmd->add_option("--trace", fit_trace, "NLML trace CSV");

  // predict
  auto* pred = app.add_subcommand("predict", "Posterior mean and variance at new points");
  std::string pred_model, pred_points, pred_out;
  bool pred_noise = false;
  pred->add_option("--model", pred_model, "Model JSON")->required();
  pred->add_option("--points", pred_points, "CSV channel,x1..xP")->required();
  pred->add_option("--out", pred_out, "Output CSV (default stdout)");
  pred->add_flag("--with-noise", pred_noise, "Add the channel noise variance");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "MAE of a fitted model on held-out points");
  std::string eval_model, eval_data, eval_scheme = "all";
  eval->add_option("--model", eval_model, "Model JSON")->required();
  eval->add_option("--data", eval_data, "Dataset CSV")->required();
  eval->add_option("--scheme", eval_scheme,
                   "Per-channel schemes (random:SEED, first, last, all); the test side is scored, "
                   "all scores every point");

  // compare
  auto* cmp = app.add_subcommand("compare", "Fit and score several kernel families");
  std::string cmp_data, cmp_families = "SM_LMC,CSM,MOSM,MOCSM", cmp_out, cmp_csv, cmp_config,
                        cmp_scheme, cmp_names;
  int cmp_q = 3;
  std::uint64_t cmp_seed = 0;
  bool cmp_timing = false;
  cmp->add_option("--data", cmp_data, "Dataset CSV")->required();
  cmp->add_option("--families", cmp_families, "Comma-separated kernel families");
  cmp->add_option("--q", cmp_q, "Number of components");
  cmp->add_option("--seed", cmp_seed, "Seed for initialization and restarts");
  cmp->add_option("--out", cmp_out, "Report JSON (default stdout)");
  cmp->add_option("--csv", cmp_csv, "Report CSV");
  cmp->add_option("--config", cmp_config, "Optimizer and split JSON");
  cmp->add_option("--scheme", cmp_scheme, "Per-channel schemes, overriding the config");
  cmp->add_option("--names", cmp_names, "Comma-separated channel names");
  cmp->add_flag("--timing", cmp_timing, "Record wall time per family");

  // crosscov
  auto* cc = app.add_subcommand("crosscov", "Export cross-covariance curves");
  std::string cc_params, cc_pairs, cc_grid = "-5:5:201", cc_out;
  bool cc_counterpart = false;
  cc->add_option("--params", cc_params, "Parameter JSON")->required();
  cc->add_option("--pairs", cc_pairs, "Channel pairs, e.g. 1:2,3:4")->required();
  cc->add_option("--grid", cc_grid, "lo:hi:n or a comma-separated list");
  cc->add_option("--out", cc_out, "Output CSV (default stdout)");
  cc->add_flag("--with-counterpart", cc_counterpart,
               "Also export the MOSM (or MOCSM) kernel with the same components");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInputError;
  }

  try {
    if (*gen) {
      gcfg.lo = interval[0];
      gcfg.hi = interval[1];
      emit(gen_out, to_csv(generate_synthetic(gcfg).data));
    } else if (*ini) {
      const auto d = load_csv(ini_data);
      const auto p = init_params(d, ini_q, family_from_string(ini_family), ini_seed);
      emit(ini_out, io::params_to_json(p, init_noise(d)).dump(2) + "\n");
    } else if (*fit_cmd) {
      const auto d = load_csv(fit_data);
      const auto doc = io::params_from_json(io::read_json_file(fit_params));
      io::RunConfig rc;
      if (!fit_config.empty()) rc = io::run_config_from_json(io::read_json_file(fit_config));
      const auto train = split(d, expand_schemes(rc.split, d.M())).first;
      const auto m0 = make_centered_model(doc.kernel, doc.noise, train);
      const auto result = fit(m0, rc.optimizer);
      emit(fit_out, io::model_to_json(result.model).dump(2) + "\n");
      if (!fit_report.empty()) {
        io::write_text_file(fit_report, io::fit_report_to_json(result.report).dump(2) + "\n");
      }
      if (!fit_trace.empty()) io::write_text_file(fit_trace, io::trace_to_csv(result.report.nlml_trace));
    } else if (*pred) {
      const auto m = io::model_from_json(io::read_json_file(pred_model));
      const auto pts = load_points(pred_points, m.kernel.P, m.kernel.M);
      emit(pred_out, predictions_csv(pts, predict(m, pts, pred_noise), m.kernel.P));
    } else if (*eval) {
      const auto m = io::model_from_json(io::read_json_file(eval_model));
      const auto d = load_csv(eval_data, m.kernel.P);
      if (d.M() != m.kernel.M) throw Error(ErrorKind::DimensionMismatch, "dataset and model channel counts differ");
      const auto schemes = expand_schemes(parse_schemes(eval_scheme), d.M());
      const auto test = split(d, schemes).second;
      nlohmann::json out = nlohmann::json::object();
      for (int c = 0; c < d.M(); ++c) {
        const auto& series = schemes[static_cast<std::size_t>(c)].kind == SplitScheme::Kind::All
                                 ? d.channels[static_cast<std::size_t>(c)]
                                 : test.channels[static_cast<std::size_t>(c)];
        if (series.size() == 0) continue;
        StackedInputs pts;
        pts.channel.assign(static_cast<std::size_t>(series.size()), c);
        pts.x = series.X;
        out["ch" + std::to_string(c + 1)] = mae(series.y, predict(m, pts).mean);
      }
      std::cout << out.dump(2) << "\n";
    } else if (*cmp) {
      const auto d = load_csv(cmp_data);
      io::RunConfig rc;
      if (!cmp_config.empty()) rc = io::run_config_from_json(io::read_json_file(cmp_config));
      if (!cmp_scheme.empty()) rc.split = parse_schemes(cmp_scheme);
      if (rc.split.empty()) rc.split = {SplitScheme::random_half(cmp_seed)};
      std::vector<Family> families;
      for (const auto& f : split_on(cmp_families, ',')) families.push_back(family_from_string(f));
      CompareOptions opts;
      opts.dataset = cmp_data;
      opts.timing = cmp_timing;
      if (!cmp_names.empty()) opts.channel_names = split_on(cmp_names, ',');
      const auto report =
          compare(d, expand_schemes(rc.split, d.M()), families, cmp_q, rc.optimizer, cmp_seed, opts);
      emit(cmp_out, report_to_json(report).dump(2) + "\n");
      if (!cmp_csv.empty()) io::write_text_file(cmp_csv, report_to_csv(report));
    } else if (*cc) {
      const auto doc = io::params_from_json(io::read_json_file(cc_params));
      const auto curves =
          export_cross_covariance(doc.kernel, parse_pairs(cc_pairs), parse_grid(cc_grid), cc_counterpart);
      emit(cc_out, curves_to_csv(curves));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_numerical(e.kind()) ? kNumericalError : kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  return 0;
}

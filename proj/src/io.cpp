#include "mocsm/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mocsm/errors.hpp"

namespace mocsm::io {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorKind::InvalidArgument, what); }

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json mat_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vec_json(m.row(r).transpose()));
  return a;
}

double num(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) bad(std::string("missing numeric field '") + key + "'");
  return j.at(key).get<double>();
}

int int_field(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number_integer())
    bad(std::string("missing integer field '") + key + "'");
  return j.at(key).get<int>();
}

Eigen::VectorXd vec(const json& j, Eigen::Index expected, const std::string& what) {
  if (!j.is_array()) bad(what + " must be an array");
  if (expected >= 0 && static_cast<Eigen::Index>(j.size()) != expected)
    throw Error(ErrorKind::DimensionMismatch,
                what + " has " + std::to_string(j.size()) + " entries, expected " +
                    std::to_string(expected));
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) bad(what + " must contain numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Eigen::VectorXd vec_field(const json& j, const char* key, Eigen::Index expected) {
  if (!j.contains(key)) bad(std::string("missing field '") + key + "'");
  return vec(j.at(key), expected, key);
}

Eigen::MatrixXd mat(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw Error(ErrorKind::DimensionMismatch, what + " must have " + std::to_string(rows) + " rows");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) m.row(r) = vec(j[r], cols, what).transpose();
  return m;
}

bool is_spectral(Family f) { return f == Family::SM || f == Family::MOCSM || f == Family::MOSM; }

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

json params_to_json(const KernelParams& p, const Eigen::VectorXd& noise) {
  json j;
  j["family"] = to_string(p.family);
  j["Q"] = p.Q;
  j["M"] = p.M;
  j["P"] = p.P;
  json comps = json::array();
  if (is_spectral(p.family)) {
    for (const auto& row : p.spectral) {
      json r = json::array();
      for (const auto& c : row)
        r.push_back({{"w", c.w},
                     {"mu", vec_json(c.mu)},
                     {"sigma2", vec_json(c.sigma2)},
                     {"theta", vec_json(c.theta)},
                     {"phi", vec_json(c.phi)}});
      comps.push_back(r);
    }
  } else if (p.family == Family::CSM) {
    for (const auto& c : p.csm)
      comps.push_back({{"mu", c.mu},
                       {"sigma2", c.sigma2},
                       {"weights", vec_json(c.weight)},
                       {"phases", vec_json(c.phase)}});
  } else {
    for (const auto& c : p.lmc) {
      json o;
      if (p.family == Family::SM_LMC) {
        o["w"] = c.w;
        o["mu"] = vec_json(c.mu);
        o["sigma2"] = vec_json(c.sigma2);
      } else {
        o["scale"] = c.base.scale;
        o["lengthscale"] = vec_json(c.base.lengthscale);
      }
      o["A"] = mat_json(c.mixing);
      comps.push_back(o);
    }
  }
  j["components"] = comps;
  j["noise"] = vec_json(noise);
  return j;
}

ParamsDocument params_from_json(const json& j) {
  if (!j.is_object()) bad("parameter document must be a JSON object");
  if (!j.contains("family") || !j.at("family").is_string()) bad("missing field 'family'");
  const Family family = family_from_string(j.at("family").get<std::string>());
  const int Q = int_field(j, "Q");
  const int M = int_field(j, "M");
  const int P = int_field(j, "P");
  if (Q < 1 || M < 1 || P < 1) bad("Q, M and P must be positive");

  KernelParams p = make_params(family, Q, M, P);
  if (!j.contains("components") || !j.at("components").is_array() ||
      static_cast<int>(j.at("components").size()) != Q)
    throw Error(ErrorKind::DimensionMismatch, "'components' must have Q entries");
  const json& comps = j.at("components");

  for (int q = 0; q < Q; ++q) {
    const json& cq = comps[q];
    if (is_spectral(family)) {
      if (!cq.is_array() || static_cast<int>(cq.size()) != M)
        throw Error(ErrorKind::DimensionMismatch, "each spectral component row must have M entries");
      for (int m = 0; m < M; ++m) {
        auto& c = p.spectral[q][m];
        const json& o = cq[m];
        c.w = num(o, "w");
        c.mu = vec_field(o, "mu", P);
        c.sigma2 = vec_field(o, "sigma2", P);
        if (o.contains("theta")) c.theta = vec_field(o, "theta", c.theta.size());
        if (o.contains("phi")) c.phi = vec_field(o, "phi", c.phi.size());
      }
    } else if (family == Family::CSM) {
      auto& c = p.csm[q];
      c.mu = num(cq, "mu");
      c.sigma2 = num(cq, "sigma2");
      c.weight = vec_field(cq, "weights", M);
      c.phase = vec_field(cq, "phases", M);
    } else {
      auto& c = p.lmc[q];
      if (family == Family::SM_LMC) {
        c.w = num(cq, "w");
        c.mu = vec_field(cq, "mu", P);
        c.sigma2 = vec_field(cq, "sigma2", P);
      } else {
        c.base.scale = num(cq, "scale");
        c.base.lengthscale = vec_field(cq, "lengthscale", P);
      }
      if (!cq.contains("A")) bad("missing field 'A'");
      c.mixing = mat(cq.at("A"), M, M, "A");
    }
  }
  validate(p);

  Eigen::VectorXd noise = Eigen::VectorXd::Constant(M, 1e-2);
  if (j.contains("noise")) {
    noise = vec(j.at("noise"), M, "noise");
    for (Eigen::Index m = 0; m < noise.size(); ++m)
      if (!(noise(m) > 0.0) || !std::isfinite(noise(m))) bad("noise variances must be positive");
  }
  return {p, noise};
}

json model_to_json(const MOGPModel& m) {
  json j = params_to_json(m.kernel, m.noise);
  j["offset"] = vec_json(m.offset);
  json ch = json::array();
  for (int c : m.train.inputs.channel) ch.push_back(c + 1);
  j["train"] = {{"channel", ch}, {"x", mat_json(m.train.inputs.x)}, {"y", vec_json(m.train.y)}};
  return j;
}

MOGPModel model_from_json(const json& j) {
  ParamsDocument doc = params_from_json(j);
  MOGPModel m;
  m.kernel = doc.kernel;
  m.noise = doc.noise;
  const int M = doc.kernel.M;
  const int P = doc.kernel.P;
  m.offset = j.contains("offset") ? vec(j.at("offset"), M, "offset") : Eigen::VectorXd::Zero(M);
  if (!j.contains("train") || !j.at("train").is_object()) bad("model is missing 'train'");
  const json& t = j.at("train");
  if (!t.contains("channel") || !t.at("channel").is_array()) bad("train is missing 'channel'");
  const json& ch = t.at("channel");
  const auto n = static_cast<Eigen::Index>(ch.size());
  m.train.inputs.channel.resize(static_cast<std::size_t>(n));
  for (Eigen::Index a = 0; a < n; ++a) {
    if (!ch[a].is_number_integer()) bad("train channels must be integers");
    const int id = ch[a].get<int>();
    if (id < 1 || id > M)
      throw Error(ErrorKind::ChannelOutOfRange, "train channel " + std::to_string(id) + " out of range");
    m.train.inputs.channel[static_cast<std::size_t>(a)] = id - 1;
  }
  if (!t.contains("x")) bad("train is missing 'x'");
  m.train.inputs.x = mat(t.at("x"), n, P, "train.x");
  if (!t.contains("y")) bad("train is missing 'y'");
  m.train.y = vec(t.at("y"), n, "train.y");
  validate(m);
  return m;
}

json fit_report_to_json(const FitReport& r) {
  json j;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["restarts_used"] = r.restarts_used;
  json rn = json::array();
  for (double v : r.restart_nlml) rn.push_back(std::isfinite(v) ? json(v) : json(nullptr));
  j["restart_nlml"] = rn;
  j["final_nlml"] = r.nlml_trace.empty() ? json(nullptr) : json(r.nlml_trace.back());
  j["params"] = params_to_json(r.final_params, r.final_noise);
  return j;
}

std::string trace_to_csv(const std::vector<double>& trace) {
  std::string out = "iteration,nlml\n";
  for (std::size_t i = 0; i < trace.size(); ++i)
    out += std::to_string(i) + "," + format_double(trace[i]) + "\n";
  return out;
}

OptimizerConfig optimizer_from_json(const json& j) {
  OptimizerConfig c;
  if (!j.is_object()) bad("optimizer settings must be a JSON object");
  try {
    if (j.contains("algorithm")) c.algorithm = j.at("algorithm").get<std::string>();
    if (j.contains("step_size")) c.step_size = j.at("step_size").get<double>();
    if (j.contains("max_iterations")) c.max_iterations = j.at("max_iterations").get<int>();
    if (j.contains("tolerance")) c.tolerance = j.at("tolerance").get<double>();
    if (j.contains("restarts")) c.restarts = j.at("restarts").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("tie_noise")) c.tie_noise = j.at("tie_noise").get<bool>();
    if (j.contains("restart_scale")) c.restart_scale = j.at("restart_scale").get<double>();
    if (j.contains("patience")) c.patience = j.at("patience").get<int>();
    if (j.contains("lbfgs_memory")) c.lbfgs_memory = j.at("lbfgs_memory").get<int>();
  } catch (const json::exception& e) {
    bad(std::string("bad optimizer setting: ") + e.what());
  }
  validate(c);
  return c;
}

json optimizer_to_json(const OptimizerConfig& c) {
  return {{"algorithm", c.algorithm},         {"step_size", c.step_size},
          {"max_iterations", c.max_iterations}, {"tolerance", c.tolerance},
          {"restarts", c.restarts},           {"seed", c.seed},
          {"tie_noise", c.tie_noise},         {"restart_scale", c.restart_scale},
          {"patience", c.patience},           {"lbfgs_memory", c.lbfgs_memory}};
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) bad("config must be a JSON object");
  RunConfig rc;
  if (j.contains("optimizer")) rc.optimizer = optimizer_from_json(j.at("optimizer"));
  if (j.contains("split")) {
    const json& s = j.at("split");
    if (s.is_string()) {
      rc.split = parse_schemes(s.get<std::string>());
    } else if (s.is_array()) {
      for (const auto& e : s) {
        if (!e.is_string()) bad("split entries must be strings");
        rc.split.push_back(parse_scheme(e.get<std::string>()));
      }
    } else {
      bad("split must be a string or an array of strings");
    }
  }
  return rc;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) bad("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    bad(path + ": " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) bad("cannot write " + path);
  out << text;
  if (!out) bad("failed writing " + path);
}

}  // namespace mocsm::io

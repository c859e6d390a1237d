#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mocsm/data.hpp"
#include "mocsm/gp.hpp"
#include "mocsm/kernels.hpp"

namespace mocsm::io {

using nlohmann::json;

// {"family","Q","M","P","components":[...],"noise":[...]}
//
// components, by family:
//   SM, MOCSM, MOSM: Q arrays of M objects {"w","mu","sigma2","theta","phi"}
//   CSM:             Q objects {"mu","sigma2","weights":[M],"phases":[M]}
//   SM_LMC:          Q objects {"w","mu","sigma2","A":[[M x M]]}
//   SE_LMC, MATERN_LMC: Q objects {"scale","lengthscale","A":[[M x M]]}
// A is the lower-triangular factor of the coregionalization matrix A A^T.
json params_to_json(const KernelParams& p, const Eigen::VectorXd& noise);

struct ParamsDocument {
  KernelParams kernel;
  Eigen::VectorXd noise;
};
ParamsDocument params_from_json(const json& j);

// Params document plus "offset" and the stacked training set
// {"train":{"channel":[1-based],"x":[[...]],"y":[...]}}.
json model_to_json(const MOGPModel& m);
MOGPModel model_from_json(const json& j);

json fit_report_to_json(const FitReport& r);
// "iteration,nlml" rows.
std::string trace_to_csv(const std::vector<double>& trace);

// Optional keys: algorithm, step_size, max_iterations, tolerance, restarts,
// seed, tie_noise, restart_scale, patience, lbfgs_memory.
OptimizerConfig optimizer_from_json(const json& j);
json optimizer_to_json(const OptimizerConfig& c);

// A config file holds {"optimizer": {...}, "split": ["random:1","first",...]}.
struct RunConfig {
  OptimizerConfig optimizer;
  std::vector<SplitScheme> split;  // empty: every channel trains on all of its points
};
RunConfig run_config_from_json(const json& j);

json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);

}  // namespace mocsm::io

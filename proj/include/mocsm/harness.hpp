#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mocsm/data.hpp"
#include "mocsm/gp.hpp"
#include "mocsm/kernels.hpp"

namespace mocsm {

double mae(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred);

struct ComparisonRow {
  std::string family;  // a Family name, or "MEAN" for the constant-mean baseline
  std::vector<double> mae;  // one per task, NaN when the row failed
  double nlml = 0.0;         // NaN for the baseline and for failed rows
  double fit_seconds = 0.0;  // 0 unless timing was requested
  int param_count = 0;
  std::string error;  // empty on success
};

struct ComparisonReport {
  std::string dataset;
  std::uint64_t seed = 0;
  int Q = 0;
  std::vector<std::string> schemes;
  std::vector<std::string> tasks;  // test channels, in channel order
  std::vector<int> task_channels;  // 1-based
  std::vector<ComparisonRow> rows;

  bool operator==(const ComparisonReport&) const;
};

struct CompareOptions {
  std::string dataset = "dataset";
  // Names for the channels (1..M); defaults to "ch1", "ch2", ...
  std::vector<std::string> channel_names;
  bool include_baseline = true;
  // Measure wall time per family. Off by default so reports are reproducible.
  bool timing = false;
};

// For each family: spectral initialization, fit on the training side, then
// MAE of the posterior mean on each channel's test side. A failing family
// records its error message in its row; the other rows still run.
ComparisonReport compare(const MultiChannelDataset& d, const std::vector<SplitScheme>& schemes,
                         const std::vector<Family>& families, int Q, const OptimizerConfig& cfg,
                         std::uint64_t seed, const CompareOptions& opts = {});

nlohmann::json report_to_json(const ComparisonReport& r);
ComparisonReport report_from_json(const nlohmann::json& j);

// "# key=value" metadata lines followed by
// family,param_count,nlml,fit_seconds,<task>...,error
std::string report_to_csv(const ComparisonReport& r);
ComparisonReport report_from_csv(const std::string& text);

struct CurvePoint {
  double tau;
  std::string label;  // e.g. "MOCSM:3x4", channels 1-based
  double value;
};

// Cross-covariance curves k_ij(tau) along the first input axis (the other
// coordinates of tau are 0). pairs are 0-based. With with_counterpart, an
// MOCSM kernel also exports the MOSM kernel built from the same components
// and vice versa.
std::vector<CurvePoint> export_cross_covariance(const KernelParams& p,
                                                const std::vector<std::pair<int, int>>& pairs,
                                                const std::vector<double>& tau_grid,
                                                bool with_counterpart = false);
std::string curves_to_csv(const std::vector<CurvePoint>& curves);

// MOCSM <-> MOSM with identical weights, means, variances and delays. The
// MOSM scalar phase is the sum of the MOCSM phase vector; going the other
// way the scalar phase goes into the first coordinate.
KernelParams spectral_counterpart(const KernelParams& p);

}  // namespace mocsm

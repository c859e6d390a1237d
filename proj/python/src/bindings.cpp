// Python bindings. Structured values (parameters, models, configs, reports)
// cross the boundary as JSON text; arrays as numpy via Eigen.

#include <string>
#include <tuple>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mocsm/data.hpp"
#include "mocsm/errors.hpp"
#include "mocsm/gp.hpp"
#include "mocsm/harness.hpp"
#include "mocsm/init.hpp"
#include "mocsm/io.hpp"
#include "mocsm/kernels.hpp"

namespace py = pybind11;
using namespace mocsm;
using nlohmann::json;

namespace {

using Channel = std::pair<Eigen::MatrixXd, Eigen::VectorXd>;

MultiChannelDataset to_dataset(const std::vector<Channel>& channels) {
  MultiChannelDataset d;
  d.P = channels.empty() ? 1 : static_cast<int>(channels.front().first.cols());
  for (std::size_t m = 0; m < channels.size(); ++m) {
    ChannelSeries c;
    c.channel_id = static_cast<int>(m) + 1;
    c.X = channels[m].first;
    c.y = channels[m].second;
    d.channels.push_back(std::move(c));
  }
  validate(d);
  return d;
}

std::vector<Channel> from_dataset(const MultiChannelDataset& d) {
  std::vector<Channel> out;
  for (const auto& c : d.channels) out.emplace_back(c.X, c.y);
  return out;
}

StackedInputs to_inputs(const std::vector<int>& channel, const Eigen::MatrixXd& x) {
  if (channel.size() != static_cast<std::size_t>(x.rows())) {
    throw Error(ErrorKind::DimensionMismatch, "channel and x lengths differ");
  }
  StackedInputs in;
  in.channel = channel;
  in.x = x;
  return in;
}

std::vector<SplitScheme> to_schemes(const std::vector<std::string>& s, int M) {
  std::vector<SplitScheme> out;
  for (const auto& t : s) out.push_back(parse_scheme(t));
  if (out.size() == 1) out.assign(static_cast<std::size_t>(M), out.front());
  return out;
}

io::ParamsDocument params(const std::string& text) { return io::params_from_json(json::parse(text)); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-output spectral mixture Gaussian processes";

  static py::exception<Error> exc(m, "MocsmError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = py::reinterpret_borrow<py::object>(exc)(e.what());
      err.attr("kind") = to_string(e.kind());
      PyErr_SetObject(exc.ptr(), err.ptr());
    } catch (const json::exception& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def("families", [] {
    std::vector<std::string> out;
    for (Family f : all_families()) out.push_back(to_string(f));
    return out;
  });

  m.def("param_count", [](const std::string& family, int Q, int M, int P) {
    return param_count(family_from_string(family), Q, M, P);
  }, py::arg("family"), py::arg("Q"), py::arg("M"), py::arg("P") = 1);

  m.def("generate_synthetic", [](std::uint64_t seed, int Q, int n, double lo, double hi) {
    SyntheticConfig cfg{seed, Q, n, lo, hi};
    return from_dataset(generate_synthetic(cfg).data);
  }, py::arg("seed") = 0, py::arg("Q") = 4, py::arg("n") = 300, py::arg("lo") = -10.0, py::arg("hi") = 10.0);

  m.def("split", [](const std::vector<Channel>& channels, const std::vector<std::string>& schemes) {
    const auto d = to_dataset(channels);
    const auto [train, test] = split(d, to_schemes(schemes, d.M()));
    return std::make_pair(from_dataset(train), from_dataset(test));
  }, py::arg("channels"), py::arg("schemes"));

  m.def("init_params", [](const std::vector<Channel>& channels, int Q, const std::string& family,
                          std::uint64_t seed) {
    const auto d = to_dataset(channels);
    return io::params_to_json(init_params(d, Q, family_from_string(family), seed), init_noise(d)).dump();
  }, py::arg("channels"), py::arg("Q"), py::arg("family") = "MOCSM", py::arg("seed") = 0);

  m.def("kernel_eval", [](const std::string& p, int i, int j, const Eigen::VectorXd& tau) {
    return kernel_eval(params(p).kernel, i, j, tau);
  }, py::arg("params"), py::arg("i"), py::arg("j"), py::arg("tau"));

  m.def("gram_matrix", [](const std::string& p, const std::vector<int>& channel, const Eigen::MatrixXd& x) {
    return Eigen::MatrixXd(gram_matrix(params(p).kernel, to_inputs(channel, x)));
  }, py::arg("params"), py::arg("channel"), py::arg("x"));

  m.def("nlml", [](const std::string& p, const std::vector<Channel>& channels) {
    const auto doc = params(p);
    return nlml(make_centered_model(doc.kernel, doc.noise, to_dataset(channels)));
  }, py::arg("params"), py::arg("channels"));

  m.def("nlml_grad", [](const std::string& p, const std::vector<Channel>& channels) {
    const auto doc = params(p);
    return nlml_grad(make_centered_model(doc.kernel, doc.noise, to_dataset(channels)));
  }, py::arg("params"), py::arg("channels"));

  m.def("fit", [](const std::string& p, const std::vector<Channel>& channels, const std::string& config) {
    const auto doc = params(p);
    const OptimizerConfig cfg = io::optimizer_from_json(json::parse(config));
    FitResult r;
    {
      py::gil_scoped_release release;
      r = fit(make_centered_model(doc.kernel, doc.noise, to_dataset(channels)), cfg);
    }
    return std::make_pair(io::model_to_json(r.model).dump(), io::fit_report_to_json(r.report).dump());
  }, py::arg("params"), py::arg("channels"), py::arg("config") = "{}");

  m.def("predict", [](const std::string& model, const std::vector<int>& channel, const Eigen::MatrixXd& x,
                      bool include_noise) {
    const GPPosterior post = predict(io::model_from_json(json::parse(model)), to_inputs(channel, x), include_noise);
    return std::make_pair(post.mean, post.variance);
  }, py::arg("model"), py::arg("channel"), py::arg("x"), py::arg("include_noise") = false);

  m.def("compare", [](const std::vector<Channel>& channels, const std::vector<std::string>& schemes,
                      const std::vector<std::string>& families, int Q, const std::string& config,
                      std::uint64_t seed) {
    const auto d = to_dataset(channels);
    std::vector<Family> fams;
    for (const auto& f : families) fams.push_back(family_from_string(f));
    const OptimizerConfig cfg = io::optimizer_from_json(json::parse(config));
    ComparisonReport r;
    {
      py::gil_scoped_release release;
      r = compare(d, to_schemes(schemes, d.M()), fams, Q, cfg, seed);
    }
    return report_to_json(r).dump();
  }, py::arg("channels"), py::arg("schemes"), py::arg("families"), py::arg("Q"), py::arg("config") = "{}",
     py::arg("seed") = 0);

  m.def("cross_covariance", [](const std::string& p, const std::vector<std::pair<int, int>>& pairs,
                               const std::vector<double>& grid, bool with_counterpart) {
    std::vector<std::tuple<double, std::string, double>> out;
    for (const auto& c : export_cross_covariance(params(p).kernel, pairs, grid, with_counterpart)) {
      out.emplace_back(c.tau, c.label, c.value);
    }
    return out;
  }, py::arg("params"), py::arg("pairs"), py::arg("grid"), py::arg("with_counterpart") = false);
}

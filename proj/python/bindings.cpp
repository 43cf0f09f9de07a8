// Copyright 2026 The kfac-bench Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "kfac/diagnostics.hpp"
#include "kfac/engine.hpp"
#include "kfac/experiment.hpp"
#include "kfac/sgd.hpp"

namespace py = pybind11;
using namespace kfac;

namespace {

PassRecord sampled_record(const Architecture& arch, const ParamVector& theta, const Mat& inputs,
                          std::uint64_t seed) {
  Rng rng(seed);
  PassRecord rec = forward(arch, theta, inputs);
  backward(arch, theta, rec, sample_targets(arch, rec, rng));
  return rec;
}

py::dict report_dict(const StepReport& r) {
  py::dict d;
  d["k"] = r.k;
  d["batch_size"] = r.batch_size;
  d["alpha"] = r.alpha;
  d["mu"] = r.mu;
  d["lambda"] = r.lambda;
  d["gamma"] = r.gamma;
  d["model_value"] = r.model_value;
  d["objective"] = r.objective;
  d["rho"] = r.rho ? py::cast(*r.rho) : py::none();
  d["momentum_fallback"] = r.momentum_fallback;
  d["train_error"] = r.train_error;
  d["train_objective"] = r.train_objective;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Kronecker-factored approximate curvature optimizer";

  auto base = py::register_exception<Error>(m, "KfacError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  py::enum_<Activation>(m, "Activation")
      .value("tanh", Activation::tanh)
      .value("logistic", Activation::logistic)
      .value("identity", Activation::identity);
  py::enum_<LossKind>(m, "LossKind")
      .value("squared_error", LossKind::squared_error)
      .value("softmax_cross_entropy", LossKind::softmax_cross_entropy);
  py::enum_<Approx>(m, "Approx")
      .value("block_diag", Approx::block_diag)
      .value("block_tridiag", Approx::block_tridiag);
  py::enum_<TaskKind>(m, "TaskKind")
      .value("autoencoder", TaskKind::autoencoder)
      .value("classification", TaskKind::classification)
      .value("regression", TaskKind::regression);

  py::class_<Architecture>(m, "Architecture")
      .def(py::init([](std::vector<int> dims, Activation hidden, LossKind loss) {
             Architecture a = Architecture::mlp(std::move(dims), hidden, loss);
             a.validate();
             return a;
           }),
           py::arg("dims"), py::arg("hidden") = Activation::tanh,
           py::arg("loss") = LossKind::squared_error)
      .def_readonly("dims", &Architecture::dims)
      .def_readonly("activations", &Architecture::activations)
      .def_readonly("loss", &Architecture::loss)
      .def_property_readonly("num_layers", &Architecture::num_layers)
      .def_property_readonly("param_count", &Architecture::param_count)
      .def("layer_offset", &Architecture::layer_offset)
      .def("layer_size", &Architecture::layer_size)
      .def("__eq__", [](const Architecture& a, const Architecture& b) { return a == b; })
      .def("__repr__", [](const Architecture& a) {
        std::string s = "Architecture([";
        for (std::size_t i = 0; i < a.dims.size(); ++i) s += (i ? ", " : "") + std::to_string(a.dims[i]);
        return s + "], loss=" + std::string(to_string(a.loss)) + ")";
      });

  m.def("init_sparse", &init_sparse, py::arg("arch"), py::arg("seed"), py::arg("k_in") = 15,
        py::arg("scale") = 1.0);
  m.def("devec", &devec, py::arg("arch"), py::arg("theta"));
  m.def("vec", &vec, py::arg("arch"), py::arg("weights"));
  m.def(
      "forward", [](const Architecture& a, const ParamVector& t, const Mat& x) { return forward(a, t, x).output; },
      py::arg("arch"), py::arg("theta"), py::arg("inputs"), "Network outputs a_L, one column per case.");
  m.def(
      "loss_and_gradient",
      [](const Architecture& a, const ParamVector& t, const Mat& x, const Mat& y) {
        PassRecord rec = forward(a, t, x);
        const double loss = mean_loss(a, rec, y);
        return py::make_tuple(loss, backward(a, t, rec, y));
      },
      py::arg("arch"), py::arg("theta"), py::arg("inputs"), py::arg("targets"));
  m.def(
      "fisher_vec",
      [](const Architecture& a, const ParamVector& t, const Mat& x, const ParamVector& v) {
        return fisher_vec(a, t, forward(a, t, x), v);
      },
      py::arg("arch"), py::arg("theta"), py::arg("inputs"), py::arg("v"));
  m.def(
      "dense_fisher",
      [](const Architecture& a, const ParamVector& t, const Mat& x) { return dense_fisher(a, t, forward(a, t, x)); },
      py::arg("arch"), py::arg("theta"), py::arg("inputs"));

  py::class_<FactorSet>(m, "FactorSet")
      .def_readonly("mode", &FactorSet::mode)
      .def_readonly("a", &FactorSet::a)
      .def_readonly("g", &FactorSet::g)
      .def_readonly("a_off", &FactorSet::a_off)
      .def_readonly("g_off", &FactorSet::g_off);
  m.def(
      "sampled_factors",
      [](const Architecture& a, const ParamVector& t, const Mat& x, Approx mode, std::uint64_t seed) {
        return batch_moments(sampled_record(a, t, x, seed), mode);
      },
      py::arg("arch"), py::arg("theta"), py::arg("inputs"), py::arg("mode"), py::arg("seed") = 1,
      "Kronecker factors from targets sampled from the model.");
  m.def("exact_factors", &exact_factors, py::arg("arch"), py::arg("theta"), py::arg("inputs"),
        py::arg("mode"));

  py::class_<InverseCache>(m, "InverseCache")
      .def_readonly("mode", &InverseCache::mode)
      .def_readonly("gamma", &InverseCache::gamma);
  m.def("build_inverse", &build_inverse, py::arg("factors"), py::arg("gamma"), py::arg("mode"));
  m.def("propose", &propose, py::arg("arch"), py::arg("cache"), py::arg("grad"), py::arg("gamma"),
        "Proposal -(approximate damped Fisher)^{-1} grad.");

  py::class_<Dataset>(m, "Dataset")
      .def(py::init([](Mat inputs, Mat targets, TaskKind kind) {
             Dataset d{std::move(inputs), std::move(targets), kind};
             d.validate();
             return d;
           }),
           py::arg("inputs"), py::arg("targets"), py::arg("kind") = TaskKind::regression)
      .def_readonly("inputs", &Dataset::inputs)
      .def_readonly("targets", &Dataset::targets)
      .def_readonly("kind", &Dataset::kind)
      .def_property_readonly("size", &Dataset::size);
  m.def("evaluate",
        [](const Architecture& a, const ParamVector& t, const Dataset& d, double eta) {
          const Evaluation e = evaluate(a, t, d, eta);
          return py::make_tuple(e.objective, e.error);
        },
        py::arg("arch"), py::arg("theta"), py::arg("data"), py::arg("eta") = 1e-5,
        "(objective, error) on the whole set.");

  py::class_<Problem>(m, "Problem")
      .def_readonly("name", &Problem::name)
      .def_readonly("arch", &Problem::arch)
      .def_readonly("data", &Problem::data);
  m.def("make_problem", &make_problem, py::arg("name"), py::arg("size") = 0,
        py::arg("hidden") = std::vector<int>{});
  m.def("list_problems", [] {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& p : list_problems()) out.emplace_back(p.name, p.description);
    return out;
  });

  py::class_<OptimizerConfig>(m, "OptimizerConfig")
      .def(py::init<>())
      .def_readwrite("mode", &OptimizerConfig::mode)
      .def_readwrite("eta", &OptimizerConfig::eta)
      .def_readwrite("lambda0", &OptimizerConfig::lambda0)
      .def_readwrite("T1", &OptimizerConfig::T1)
      .def_readwrite("T2", &OptimizerConfig::T2)
      .def_readwrite("T3", &OptimizerConfig::T3)
      .def_readwrite("momentum", &OptimizerConfig::momentum)
      .def_readwrite("seed", &OptimizerConfig::seed)
      .def_readwrite("lowrank", &OptimizerConfig::lowrank)
      .def_readwrite("track_train_error", &OptimizerConfig::track_train_error)
      .def_property(
          "schedule", [](const OptimizerConfig& c) { return c.schedule.to_string(); },
          [](OptimizerConfig& c, const std::string& s) { c.schedule = BatchSchedule::parse(s); });

  py::class_<KfacOptimizer>(m, "KfacOptimizer")
      .def(py::init<Architecture, OptimizerConfig, ParamVector>(), py::arg("arch"),
           py::arg("config"), py::arg("theta0"))
      .def("step", [](KfacOptimizer& o, const Dataset& d) { return report_dict(o.step(d)); })
      .def_property_readonly("params", &KfacOptimizer::params)
      .def_property_readonly("averaged_params", &KfacOptimizer::averaged_params)
      .def_property_readonly("lam", [](const KfacOptimizer& o) { return o.state().lambda; })
      .def_property_readonly("gamma", [](const KfacOptimizer& o) { return o.state().gamma; });

  py::class_<SgdConfig>(m, "SgdConfig")
      .def(py::init<>())
      .def_readwrite("learn_rate", &SgdConfig::learn_rate)
      .def_readwrite("mu_max", &SgdConfig::mu_max)
      .def_readwrite("eta", &SgdConfig::eta)
      .def_readwrite("seed", &SgdConfig::seed)
      .def_readwrite("track_train_error", &SgdConfig::track_train_error)
      .def_property(
          "schedule", [](const SgdConfig& c) { return c.schedule.to_string(); },
          [](SgdConfig& c, const std::string& s) { c.schedule = BatchSchedule::parse(s); });

  py::class_<SgdOptimizer>(m, "SgdOptimizer")
      .def(py::init<Architecture, SgdConfig, ParamVector>(), py::arg("arch"), py::arg("config"),
           py::arg("theta0"))
      .def("step",
           [](SgdOptimizer& o, const Dataset& d) {
             const SgdReport r = o.step(d);
             py::dict out;
             out["k"] = r.k;
             out["batch_size"] = r.batch_size;
             out["mu"] = r.mu;
             out["objective"] = r.objective;
             out["train_error"] = r.train_error;
             return out;
           })
      .def_property_readonly("params", &SgdOptimizer::params)
      .def_property_readonly("averaged_params", &SgdOptimizer::averaged_params);

  py::class_<FisherComparison>(m, "FisherComparison")
      .def_readonly("fisher", &FisherComparison::fisher)
      .def_readonly("tilde", &FisherComparison::tilde)
      .def_readonly("breve", &FisherComparison::breve)
      .def_readonly("hat", &FisherComparison::hat)
      .def_readonly("fisher_inv", &FisherComparison::fisher_inv)
      .def_readonly("tilde_inv", &FisherComparison::tilde_inv)
      .def_readonly("breve_inv", &FisherComparison::breve_inv)
      .def_readonly("hat_inv", &FisherComparison::hat_inv)
      .def_readonly("err_fisher_tilde", &FisherComparison::err_fisher_tilde)
      .def_readonly("err_tilde_breve_inv", &FisherComparison::err_tilde_breve_inv)
      .def_readonly("err_tilde_hat_inv", &FisherComparison::err_tilde_hat_inv);
  m.def("compare_fisher", &compare_fisher, py::arg("arch"), py::arg("theta"), py::arg("inputs"),
        py::arg("gamma"));

  m.def(
      "run_experiment",
      [](const std::string& config_text, const std::string& out_dir) {
        const ExperimentConfig c = parse_config(config_text);
        c.validate();
        const RunSummary s = run_experiment(c, out_dir);
        py::dict d;
        d["status"] = s.status == RunStatus::ok ? "ok" : "numerical_abort";
        d["message"] = s.message;
        d["iterations"] = s.iterations;
        d["train_error"] = s.train_error;
        d["objective"] = s.objective;
        d["metrics"] = s.metrics_path;
        d["summary"] = s.summary_path;
        d["checkpoint"] = s.checkpoint;
        return d;
      },
      py::arg("config_text"), py::arg("out_dir"),
      "Runs an experiment described by config-file text; returns the summary.");
}

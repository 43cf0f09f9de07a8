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


#include "kfac/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>

#include <json.hpp>

namespace kfac {

namespace {

constexpr std::uint64_t kDataSeed = 20150201;

Dataset teacher_classification(int inputs, int classes, long size, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset d;
  d.kind = TaskKind::classification;
  d.inputs = Mat::NullaryExpr(inputs, size, [&] { return normal(rng); });
  const Mat w = Mat::NullaryExpr(classes, inputs, [&] { return normal(rng); });
  const Mat z = (w * d.inputs).array().tanh().matrix();
  std::vector<int> labels(static_cast<std::size_t>(size));
  for (long j = 0; j < size; ++j) {
    Eigen::Index c = 0;
    z.col(j).maxCoeff(&c);
    labels[static_cast<std::size_t>(j)] = static_cast<int>(c);
  }
  d.targets = one_hot(labels, classes);
  return d;
}

Dataset lowrank_autoencoder(int dim, int rank, long size, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Mat basis = Mat::NullaryExpr(dim, rank, [&] { return normal(rng); });
  const Mat codes = Mat::NullaryExpr(rank, size, [&] { return normal(rng); });
  Dataset d;
  d.kind = TaskKind::autoencoder;
  d.inputs = (basis * codes / std::sqrt(static_cast<double>(rank))).array().tanh().matrix() +
             0.05 * Mat::NullaryExpr(dim, size, [&] { return normal(rng); });
  d.targets = d.inputs;
  return d;
}

}  // namespace

std::vector<ProblemInfo> list_problems() {
  return {
      {"digits16", "256-20-20-20-20-20-10 tanh, softmax; synthetic 16x16 digits, 5000 cases"},
      {"digits16_small", "256-20-20-10 tanh, softmax; synthetic 16x16 digits, 1000 cases"},
      {"digits_autoencoder",
       "256-64-16-64-256 tanh, squared error; synthetic 16x16 digits, 1000 cases"},
      {"tiny_mlp", "6-5-4-3 tanh, softmax; teacher-labelled Gaussian inputs, 64 cases"},
      {"tiny_autoencoder", "6-4-2-4-6 tanh, squared error; low-rank data, 64 cases"},
      {"file:<path>", "dataset file; tanh hidden layers from the `hidden` key (default 20,20)"},
  };
}

Problem make_problem(const std::string& name, long size, const std::vector<int>& hidden) {
  Problem p;
  p.name = name;
  const auto pick = [&](long fallback) { return size > 0 ? size : fallback; };
  if (name == "digits16") {
    p.arch = Architecture::mlp({256, 20, 20, 20, 20, 20, 10}, Activation::tanh,
                               LossKind::softmax_cross_entropy);
    p.data = make_digits16(pick(5000), kDataSeed);
  } else if (name == "digits16_small") {
    p.arch = Architecture::mlp({256, 20, 20, 10}, Activation::tanh, LossKind::softmax_cross_entropy);
    p.data = make_digits16(pick(1000), kDataSeed);
  } else if (name == "digits_autoencoder") {
    p.arch = Architecture::mlp({256, 64, 16, 64, 256}, Activation::tanh, LossKind::squared_error);
    p.data = make_digits16_autoencoder(pick(1000), kDataSeed);
  } else if (name == "tiny_mlp") {
    p.arch = Architecture::mlp({6, 5, 4, 3}, Activation::tanh, LossKind::softmax_cross_entropy);
    p.data = teacher_classification(6, 3, pick(64), kDataSeed);
  } else if (name == "tiny_autoencoder") {
    p.arch = Architecture::mlp({6, 4, 2, 4, 6}, Activation::tanh, LossKind::squared_error);
    p.data = lowrank_autoencoder(6, 2, pick(64), kDataSeed);
  } else if (name.rfind("file:", 0) == 0) {
    p.data = load_dataset(name.substr(5));
    if (size > 0 && size < p.data.size()) {
      std::vector<Eigen::Index> idx(static_cast<std::size_t>(size));
      std::iota(idx.begin(), idx.end(), Eigen::Index{0});
      p.data = p.data.subset(idx);
    }
    std::vector<int> dims{static_cast<int>(p.data.inputs.rows())};
    for (int w : hidden.empty() ? std::vector<int>{20, 20} : hidden) dims.push_back(w);
    dims.push_back(static_cast<int>(p.data.targets.rows()));
    p.arch = Architecture::mlp(dims, Activation::tanh,
                               p.data.kind == TaskKind::classification
                                   ? LossKind::softmax_cross_entropy
                                   : LossKind::squared_error);
  } else {
    throw ConfigError("unknown problem '" + name + "' (see `bench list-problems`)");
  }
  p.data.validate();
  return p;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write checkpoint " + path);
    out << "kfac-checkpoint 1\n";
    out << "problem " << ck.problem << '\n';
    out << "seed " << ck.seed << '\n';
    out << "dataset_size " << ck.dataset_size << '\n';
    out << "dims";
    for (int d : ck.arch.dims) out << ' ' << d;
    out << "\nactivations";
    for (Activation a : ck.arch.activations) out << ' ' << to_string(a);
    out << "\nloss " << to_string(ck.arch.loss) << '\n';
    out << "params " << ck.theta.size() << '\n';
    out << std::setprecision(17);
    for (Eigen::Index i = 0; i < ck.theta.size(); ++i) out << ck.theta(i) << '\n';
    if (!out) throw Error("failed writing checkpoint " + path);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path);
  auto fail = [&](const std::string& what) -> Error {
    return Error("checkpoint " + path + ": " + what);
  };
  std::string line;
  if (!std::getline(in, line) || line != "kfac-checkpoint 1") throw fail("bad magic line");
  auto field = [&](const std::string& key) {
    if (!std::getline(in, line) || line.rfind(key + " ", 0) != 0) throw fail("expected " + key);
    return line.substr(key.size() + 1);
  };
  Checkpoint ck;
  ck.problem = field("problem");
  ck.seed = std::stoull(field("seed"));
  ck.dataset_size = std::stol(field("dataset_size"));
  {
    std::istringstream ss(field("dims"));
    for (int d; ss >> d;) ck.arch.dims.push_back(d);
  }
  {
    std::istringstream ss(field("activations"));
    for (std::string a; ss >> a;) ck.arch.activations.push_back(parse_activation(a));
  }
  ck.arch.loss = parse_loss(field("loss"));
  ck.arch.validate();
  const long n = std::stol(field("params"));
  if (n != ck.arch.param_count()) throw fail("parameter count does not match dims");
  ck.theta.resize(n);
  for (long i = 0; i < n; ++i) {
    if (!(in >> ck.theta(i))) throw fail("truncated parameters");
  }
  return ck;
}

namespace {

struct Row {
  long iter = 0;
  long cases = 0;
  double wall_s = 0.0;
  double objective = std::nan("");
  double train_error = std::nan("");
  double lambda = std::nan("");
  double gamma = std::nan("");
  double alpha = std::nan("");
  double mu = std::nan("");
  long batch_size = 0;
};

void write_row(std::FILE* f, const Row& r) {
  std::fprintf(f, "%ld,%ld,%.6f,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%ld\n", r.iter, r.cases,
               r.wall_s, r.objective, r.train_error, r.lambda, r.gamma, r.alpha, r.mu,
               r.batch_size);
  std::fflush(f);
}

nlohmann::json number_or_null(double x) {
  return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& config, const std::string& out_dir) {
  config.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  RunSummary sum;
  sum.metrics_path = (fs::path(out_dir) / "metrics.csv").string();
  sum.summary_path = (fs::path(out_dir) / "summary.json").string();
  sum.checkpoint = (fs::path(out_dir) / "checkpoint.txt").string();

  const Problem problem = make_problem(config.problem, config.dataset_size, config.hidden);
  const Architecture& arch = problem.arch;
  const Dataset& data = problem.data;
  const ParamVector theta0 = init_sparse(arch, config.seed, config.sparse_k, config.init_scale);

  Checkpoint ck{config.problem, config.seed, config.dataset_size, arch, theta0};
  save_checkpoint(ck, sum.checkpoint);

  std::FILE* csv = std::fopen(sum.metrics_path.c_str(), "w");
  if (!csv) throw Error("cannot write " + sum.metrics_path);
  std::fprintf(csv, "%s\n", kMetricsHeader);
  std::fflush(csv);

  nlohmann::json lr_json;
  const bool is_sgd = config.optimizer == OptimizerKind::sgd;
  SgdConfig sgd_cfg = config.sgd_config();
  if (is_sgd) {
    if (sgd_cfg.learn_rate == 0.0) {
      const long budget =
          std::max(1L, std::lround(config.lr_select_fraction * static_cast<double>(config.max_iters)));
      const LearnRateChoice choice = select_learn_rate(arch, sgd_cfg, theta0, data, budget);
      sgd_cfg.learn_rate = choice.learn_rate;
      lr_json = {{"method", "grid search on training error"},
                 {"budget_iters", budget},
                 {"grid", kSgdLearnRateGrid},
                 {"errors", nlohmann::json::array()}};
      for (double e : choice.errors) lr_json["errors"].push_back(number_or_null(e));
    } else {
      lr_json = {{"method", "fixed"}};
    }
    lr_json["learn_rate"] = sgd_cfg.learn_rate;
    sum.sgd_learn_rate = sgd_cfg.learn_rate;
  }

  std::optional<KfacOptimizer> kfac;
  std::optional<SgdOptimizer> sgd;
  if (is_sgd) {
    sgd.emplace(arch, sgd_cfg, theta0);
  } else {
    kfac.emplace(arch, config.optimizer_config(), theta0);
  }
  const auto params = [&]() -> const ParamVector& { return is_sgd ? sgd->params() : kfac->params(); };
  const auto averaged = [&]() -> const ParamVector& {
    return is_sgd ? sgd->averaged_params() : kfac->averaged_params();
  };

  const auto start = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  for (long k = 1; k <= config.max_iters; ++k) {
    if (config.max_seconds > 0 && elapsed() >= config.max_seconds) break;
    Row row;
    row.iter = k;
    try {
      if (is_sgd) {
        const SgdReport r = sgd->step(data);
        row.objective = r.objective;
        row.alpha = sgd_cfg.learn_rate;
        row.mu = r.mu;
        row.batch_size = r.batch_size;
      } else {
        const StepReport r = kfac->step(data);
        row.objective = r.objective;
        row.lambda = r.lambda;
        row.gamma = r.gamma;
        row.alpha = r.alpha;
        row.mu = r.mu;
        row.batch_size = r.batch_size;
      }
      if (!params().allFinite()) throw NumericalError("non-finite parameters after iteration " + std::to_string(k));
    } catch (const NumericalError& e) {
      sum.status = RunStatus::numerical_abort;
      sum.message = e.what();
      break;
    }
    sum.iterations = k;
    sum.cases += row.batch_size;
    row.cases = sum.cases;
    if (k % config.eval_every == 0 || k == config.max_iters) {
      const Evaluation raw = evaluate(arch, params(), data, config.eta);
      const Evaluation avg = evaluate(arch, averaged(), data, config.eta);
      sum.train_error_raw = raw.error;
      sum.train_error_avg = avg.error;
      sum.train_error = std::min(raw.error, avg.error);
      sum.objective = raw.objective;
      row.objective = raw.objective;
      row.train_error = sum.train_error;
    }
    row.wall_s = elapsed();
    write_row(csv, row);
    if (k % config.checkpoint_every == 0) {
      ck.theta = params();
      save_checkpoint(ck, sum.checkpoint);
    }
  }
  std::fclose(csv);
  sum.wall_s = elapsed();
  if (sum.status == RunStatus::ok) {
    ck.theta = params();
    save_checkpoint(ck, sum.checkpoint);
    if (sum.iterations > 0 && !std::isfinite(sum.train_error)) {
      const Evaluation raw = evaluate(arch, params(), data, config.eta);
      const Evaluation avg = evaluate(arch, averaged(), data, config.eta);
      sum.train_error_raw = raw.error;
      sum.train_error_avg = avg.error;
      sum.train_error = std::min(raw.error, avg.error);
      sum.objective = raw.objective;
    }
  } else {
    // The failed step never touched the parameters.
    ck.theta = params();
    if (ck.theta.allFinite()) save_checkpoint(ck, sum.checkpoint);
  }

  nlohmann::json j;
  j["status"] = sum.status == RunStatus::ok ? "ok" : "numerical_abort";
  if (!sum.message.empty()) j["message"] = sum.message;
  j["iterations"] = sum.iterations;
  j["cases"] = sum.cases;
  j["wall_s"] = sum.wall_s;
  j["final"] = {{"train_error", number_or_null(sum.train_error)},
                {"train_error_raw", number_or_null(sum.train_error_raw)},
                {"train_error_averaged", number_or_null(sum.train_error_avg)},
                {"objective", number_or_null(sum.objective)}};
  j["problem"] = {{"name", problem.name},
                  {"dims", arch.dims},
                  {"params", arch.param_count()},
                  {"cases", data.size()}};
  j["checkpoint"] = sum.checkpoint;
  if (is_sgd) j["sgd_learn_rate"] = lr_json;
  nlohmann::json echo = nlohmann::json::object();
  for (const auto& [key, value] : config.echo()) echo[key] = value;
  j["config"] = echo;
  std::ofstream out(sum.summary_path);
  out << j.dump(2) << '\n';
  return sum;
}

}  // namespace kfac

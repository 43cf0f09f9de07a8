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


// bench: run K-FAC / SGD experiments and dump Fisher diagnostics.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "kfac/diagnostics.hpp"
#include "kfac/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

int cmd_run(const std::string& config_path, const std::string& out_dir,
            const std::optional<std::uint64_t>& seed) {
  kfac::ExperimentConfig config;
  try {
    config = kfac::load_config(config_path);
    if (seed) config.seed = *seed;
    config.validate();
    kfac::make_problem(config.problem, config.dataset_size, config.hidden);
  } catch (const kfac::Error& e) {
    std::cerr << "bench: bad config: " << e.what() << '\n';
    return kExitConfig;
  }
  const kfac::RunSummary s = kfac::run_experiment(config, out_dir);
  if (s.status == kfac::RunStatus::numerical_abort) {
    std::cerr << "bench: numerical abort after " << s.iterations << " iterations: " << s.message
              << "\nlast good checkpoint: " << s.checkpoint << '\n';
    return kExitNumerical;
  }
  std::printf("iterations %ld  train_error %.6g  objective %.6g  wall %.2fs\n", s.iterations,
              s.train_error, s.objective, s.wall_s);
  std::printf("metrics %s\nsummary %s\n", s.metrics_path.c_str(), s.summary_path.c_str());
  return 0;
}

int cmd_diag(const std::string& checkpoint, double gamma, const std::string& out_dir) {
  const kfac::Checkpoint ck = kfac::load_checkpoint(checkpoint);
  const kfac::Problem p = kfac::make_problem(ck.problem, ck.dataset_size);
  if (!(p.arch == ck.arch)) {
    throw kfac::Error("checkpoint architecture does not match problem " + ck.problem);
  }
  const kfac::FisherComparison c =
      kfac::dump_fisher_diagnostics(ck.arch, ck.theta, p.data.inputs, gamma, out_dir);
  std::printf("|F - F_tilde|_F                 %.6g\n", c.err_fisher_tilde);
  std::printf("|F_tilde^-1 - F_breve^-1|_F     %.6g\n", c.err_tilde_breve_inv);
  std::printf("|F_tilde^-1 - F_hat^-1|_F       %.6g\n", c.err_tilde_hat_inv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"K-FAC benchmark harness"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  auto* run = app.add_subcommand("run", "run an experiment from a config file");
  run->add_option("--config", config_path, "config file")->required();
  run->add_option("--out", out_dir, "output directory")->required();
  auto* seed_opt = run->add_option("--seed", seed, "override the config seed");

  std::string ck_path, diag_out;
  double gamma = 0.0;
  auto* diag = app.add_subcommand("diag", "dump dense Fisher comparisons for a checkpoint");
  diag->add_option("--checkpoint", ck_path, "checkpoint file")->required();
  diag->add_option("--gamma", gamma, "damping strength")->required()->check(CLI::NonNegativeNumber);
  diag->add_option("--out", diag_out, "output directory")->required();

  auto* list = app.add_subcommand("list-problems", "list built-in problems");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) {
      std::optional<std::uint64_t> s;
      if (*seed_opt) s = seed;
      return cmd_run(config_path, out_dir, s);
    }
    if (*diag) return cmd_diag(ck_path, gamma, diag_out);
    if (*list) {
      for (const auto& p : kfac::list_problems()) {
        std::printf("%-20s %s\n", p.name.c_str(), p.description.c_str());
      }
      return 0;
    }
  } catch (const kfac::Error& e) {
    std::cerr << "bench: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

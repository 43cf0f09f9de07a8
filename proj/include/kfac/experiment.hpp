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


#ifndef KFAC_EXPERIMENT_HPP
#define KFAC_EXPERIMENT_HPP

#include <cmath>
#include <string>
#include <vector>

#include "kfac/config.hpp"
#include "kfac/dataset.hpp"

namespace kfac {

struct Problem {
  std::string name;
  Architecture arch;
  Dataset data;
};

struct ProblemInfo {
  std::string name;
  std::string description;
};

std::vector<ProblemInfo> list_problems();

/// Built-in problem by name, or "file:<path>" for a dataset file trained with
/// tanh hidden layers of widths `hidden` (empty = 20,20). size = 0 picks the
/// default size. Built-in data does not depend on the run seed.
Problem make_problem(const std::string& name, long size = 0,
                     const std::vector<int>& hidden = {});

struct Checkpoint {
  std::string problem;
  std::uint64_t seed = 0;
  long dataset_size = 0;
  Architecture arch;
  ParamVector theta;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

inline const char* const kMetricsHeader =
    "iter,cases,wall_s,objective,train_error,lambda,gamma,alpha,mu,batch_size";

enum class RunStatus { ok, numerical_abort };

struct RunSummary {
  RunStatus status = RunStatus::ok;
  std::string message;
  long iterations = 0;
  long cases = 0;
  double wall_s = 0.0;
  double train_error = std::nan("");
  double train_error_raw = std::nan("");
  double train_error_avg = std::nan("");
  double objective = std::nan("");
  double sgd_learn_rate = std::nan("");
  std::string checkpoint;  // last good parameters
  std::string metrics_path;
  std::string summary_path;
};

/// Runs the configured optimizer, writing metrics.csv (one flushed row per
/// iteration), checkpoint.txt and summary.json into out_dir.
RunSummary run_experiment(const ExperimentConfig& config, const std::string& out_dir);

}  // namespace kfac

#endif

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


#ifndef KFAC_CONFIG_HPP
#define KFAC_CONFIG_HPP

#include <string>
#include <utility>
#include <vector>

#include "kfac/engine.hpp"
#include "kfac/sgd.hpp"

namespace kfac {

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class OptimizerKind { kfac_bd, kfac_btd, sgd };

std::string_view to_string(OptimizerKind o);

/// Experiment description read from a line-oriented `key = value` file.
/// Blank lines and lines starting with '#' are ignored.
struct ExperimentConfig {
  std::string problem = "digits16";
  OptimizerKind optimizer = OptimizerKind::kfac_btd;
  bool momentum = true;
  double eta = 1e-5;
  double lambda0 = 150.0;
  int T1 = 5;
  int T2 = 20;
  int T3 = 20;
  double tau1 = 1.0 / 8.0;
  double tau2 = 1.0 / 4.0;
  BatchSchedule batch_schedule;  // full batch
  long max_iters = 100;
  double max_seconds = 0.0;  // 0 = no limit
  std::uint64_t seed = 1;

  double init_scale = 1.0;
  int sparse_k = 15;
  long dataset_size = 0;  // 0 = problem default
  double learn_rate = 0.0;  // sgd; 0 = pick from the grid
  double lr_select_fraction = 0.2;
  double mu_max = 0.99;
  double xi = 0.99;
  bool lowrank = false;
  std::vector<int> hidden;  // hidden widths for file: problems
  long eval_every = 1;
  long checkpoint_every = 10;

  void validate() const;
  OptimizerConfig optimizer_config() const;
  SgdConfig sgd_config() const;
  /// Every key with its current value, in file order.
  std::vector<std::pair<std::string, std::string>> echo() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

}  // namespace kfac

#endif

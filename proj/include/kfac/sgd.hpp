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


#ifndef KFAC_SGD_HPP
#define KFAC_SGD_HPP

#include <vector>

#include "kfac/dataset.hpp"
#include "kfac/engine.hpp"

namespace kfac {

/// mu_k = min(1 - 2^(-1 - log2(floor(k / 250) + 1)), mu_max).
double nesterov_momentum(long k, double mu_max);

/// v <- mu v - lr grad(theta + mu v); theta <- theta + v. The caller supplies
/// the gradient evaluated at the look-ahead point.
void sgd_nesterov_step(ParamVector& theta, ParamVector& velocity,
                       const ParamVector& grad_at_lookahead, double learn_rate, double mu);

/// avg <- xi avg + (1 - xi) iterate.
void polyak_average(ParamVector& avg, const ParamVector& iterate, double xi = 0.99);

struct SgdConfig {
  double learn_rate = 0.01;
  double mu_max = 0.99;
  double eta = 1e-5;
  BatchSchedule schedule = BatchSchedule::parse("fixed:100");
  double xi = 0.99;
  std::uint64_t seed = 1;
  bool track_train_error = true;

  void validate() const;
};

struct SgdReport {
  long k = 0;
  long batch_size = 0;
  double mu = 0.0;
  double objective = 0.0;  // mini-batch objective at the look-ahead point
  double train_error = std::nan("");
  double train_error_raw = std::nan("");
  double train_error_avg = std::nan("");
  double train_objective = std::nan("");
};

class SgdOptimizer {
 public:
  SgdOptimizer(Architecture arch, SgdConfig config, ParamVector theta0);

  SgdReport step(const Dataset& data);

  const ParamVector& params() const { return theta_; }
  const ParamVector& averaged_params() const { return averaged_; }
  const SgdConfig& config() const { return config_; }
  long iteration() const { return k_; }

 private:
  Architecture arch_;
  SgdConfig config_;
  ParamVector theta_;
  ParamVector velocity_;
  ParamVector averaged_;
  long k_ = 1;
  Rng rng_;
};

inline const std::vector<double> kSgdLearnRateGrid = {0.1, 0.03, 0.01, 0.003, 0.001};

struct LearnRateChoice {
  double learn_rate = 0.0;
  std::vector<double> errors;  // one per grid entry, min(raw, averaged) at the end
};

/// Runs `iters` SGD steps for each grid entry from theta0 and keeps the rate
/// with the lowest final training error (first wins ties). Diverged runs
/// count as error +inf.
LearnRateChoice select_learn_rate(const Architecture& arch, const SgdConfig& base,
                                  const ParamVector& theta0, const Dataset& data, long iters,
                                  const std::vector<double>& grid = kSgdLearnRateGrid);

}  // namespace kfac

#endif

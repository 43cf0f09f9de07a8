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


#include "kfac/sgd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace kfac {

double nesterov_momentum(long k, double mu_max) {
  const double steps = std::floor(static_cast<double>(k) / 250.0) + 1.0;
  return std::min(1.0 - std::pow(2.0, -1.0 - std::log2(steps)), mu_max);
}

void sgd_nesterov_step(ParamVector& theta, ParamVector& velocity,
                       const ParamVector& grad_at_lookahead, double learn_rate, double mu) {
  if (theta.size() != velocity.size() || theta.size() != grad_at_lookahead.size()) {
    throw ShapeError("sgd_nesterov_step: size mismatch");
  }
  velocity = mu * velocity - learn_rate * grad_at_lookahead;
  theta += velocity;
}

void polyak_average(ParamVector& avg, const ParamVector& iterate, double xi) {
  if (avg.size() != iterate.size()) throw ShapeError("polyak_average: size mismatch");
  avg = xi * avg + (1.0 - xi) * iterate;
}

void SgdConfig::validate() const {
  if (!(learn_rate > 0.0)) throw Error("learn_rate must be > 0");
  if (!(mu_max >= 0.0 && mu_max < 1.0)) throw Error("mu_max must lie in [0, 1)");
  if (!(eta >= 0.0)) throw Error("eta must be >= 0");
  if (!(xi >= 0.0 && xi < 1.0)) throw Error("xi must lie in [0, 1)");
}

SgdOptimizer::SgdOptimizer(Architecture arch, SgdConfig config, ParamVector theta0)
    : arch_(std::move(arch)), config_(std::move(config)), theta_(std::move(theta0)),
      rng_(config_.seed) {
  arch_.validate();
  config_.validate();
  if (theta_.size() != arch_.param_count()) throw ShapeError("initial parameters have the wrong length");
  velocity_ = ParamVector::Zero(theta_.size());
  averaged_ = theta_;
}

SgdReport SgdOptimizer::step(const Dataset& data) {
  const long n = data.size();
  const long m = batch_size(config_.schedule, k_, n);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (m < n) {
    for (long j = 0; j < m; ++j) {
      std::uniform_int_distribution<long> pick(j, n - 1);
      std::swap(idx[static_cast<std::size_t>(j)], idx[static_cast<std::size_t>(pick(rng_))]);
    }
    idx.resize(static_cast<std::size_t>(m));
  }
  const Dataset mini = m == n ? data : data.subset(idx);

  SgdReport r;
  r.k = k_;
  r.batch_size = m;
  r.mu = nesterov_momentum(k_, config_.mu_max);
  const ParamVector lookahead = theta_ + r.mu * velocity_;
  PassRecord rec = forward(arch_, lookahead, mini.inputs);
  r.objective = mean_loss(arch_, rec, mini.targets) + 0.5 * config_.eta * lookahead.squaredNorm();
  const ParamVector grad = backward(arch_, lookahead, rec, mini.targets) + config_.eta * lookahead;
  if (!std::isfinite(r.objective) || !grad.allFinite()) {
    throw NumericalError("non-finite objective or gradient at iteration " + std::to_string(k_));
  }
  sgd_nesterov_step(theta_, velocity_, grad, config_.learn_rate, r.mu);
  if (k_ == 1) {
    averaged_ = theta_;
  } else {
    polyak_average(averaged_, theta_, config_.xi);
  }
  if (config_.track_train_error) {
    const Evaluation raw = evaluate(arch_, theta_, data, config_.eta);
    const Evaluation avg = evaluate(arch_, averaged_, data, config_.eta);
    r.train_error_raw = raw.error;
    r.train_error_avg = avg.error;
    r.train_error = std::min(raw.error, avg.error);
    r.train_objective = raw.objective;
  }
  ++k_;
  return r;
}

LearnRateChoice select_learn_rate(const Architecture& arch, const SgdConfig& base,
                                  const ParamVector& theta0, const Dataset& data, long iters,
                                  const std::vector<double>& grid) {
  if (grid.empty()) throw Error("select_learn_rate: empty grid");
  LearnRateChoice out;
  double best = std::numeric_limits<double>::infinity();
  for (double lr : grid) {
    SgdConfig cfg = base;
    cfg.learn_rate = lr;
    cfg.track_train_error = false;
    SgdOptimizer opt(arch, cfg, theta0);
    double err = std::numeric_limits<double>::infinity();
    try {
      for (long k = 0; k < iters; ++k) opt.step(data);
      const double raw = evaluate(arch, opt.params(), data, cfg.eta).error;
      const double avg = evaluate(arch, opt.averaged_params(), data, cfg.eta).error;
      err = std::min(raw, avg);
      if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
    } catch (const NumericalError&) {
    }
    out.errors.push_back(err);
    if (err < best || out.learn_rate == 0.0) {
      best = err;
      out.learn_rate = lr;
    }
  }
  return out;
}

}  // namespace kfac

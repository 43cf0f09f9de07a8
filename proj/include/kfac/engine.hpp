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

#ifndef KFAC_ENGINE_HPP
#define KFAC_ENGINE_HPP

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "kfac/dataset.hpp"
#include "kfac/exact_fisher.hpp"
#include "kfac/factor_stats.hpp"
#include "kfac/kron.hpp"

namespace kfac {

/// Mini-batch size schedule: a fixed size, or m_k = min(m1 exp((k-1)/b), |S|)
/// with b chosen so that m reaches |S| at iteration full_at.
struct BatchSchedule {
  enum class Kind { fixed, exponential };
  Kind kind = Kind::fixed;
  long m = 0;  // fixed size or m1; 0 means the whole training set
  long full_at = 500;

  /// "full", "fixed:M" or "exp:M1:to_full_at:K".
  static BatchSchedule parse(const std::string& text);
  std::string to_string() const;
};

/// Rate constant b of the exponential schedule.
double exponential_rate(long m1, long full_at, long dataset_size);

long batch_size(const BatchSchedule& schedule, long k, long dataset_size);

struct OptimizerConfig {
  Approx mode = Approx::block_tridiag;
  double eta = 1e-5;
  double lambda0 = 150.0;
  int T1 = 5;
  int T2 = 20;
  int T3 = 20;
  double omega1 = std::pow(19.0 / 20.0, 5);
  double omega2 = std::pow(std::sqrt(19.0 / 20.0), 20);
  double tau1 = 1.0 / 8.0;
  double tau2 = 1.0 / 4.0;
  bool momentum = true;
  BatchSchedule schedule;
  double xi = 0.99;
  std::uint64_t seed = 1;

  /// Block-diagonal mode only: form the proposal from the per-case factors
  /// of the gradient instead of the gradient matrix.
  bool lowrank = false;
  /// Evaluate raw and averaged training error on the full set each step.
  bool track_train_error = true;

  double lambda_min = 1e-8;
  double lambda_max = 1e8;
  double alpha_cap = 1e4;

  void validate() const;
};

/// Damped approximate-Fisher inverse for one gamma.
struct InverseCache {
  Approx mode = Approx::block_diag;
  double gamma = 0.0;
  BlockDiagCache bd;
  TridiagCache td;
};

InverseCache build_inverse(const FactorSet& factors, double gamma, Approx mode);

/// Delta = -(approximate damped Fisher)^{-1} grad. `gamma` must be the value
/// the cache was built with.
ParamVector propose(const Architecture& arch, const InverseCache& cache,
                    const ParamVector& grad, double gamma);

/// Records the shape of every matrix product performed, for cost checks.
struct ProductLog {
  struct Product {
    Eigen::Index rows, inner, cols;
  };
  std::vector<Product> products;
  double flops() const;
};

/// Block-diagonal proposal from the per-case factors of the mini-batch
/// gradient (record.g from the training-target backward pass):
///   U_l = -(1/m) (G_l^{-1} Gcal_l)(Acal_l^T A_l^{-1}).
/// No l2 term is included.
ParamVector lowrank_propose(const Architecture& arch, const InverseCache& cache,
                            const PassRecord& record, ProductLog* log = nullptr);

/// Same product taken the direct way, G^{-1} (grad matrix) A^{-1}; used as
/// the cost reference for lowrank_propose.
ParamVector direct_propose_logged(const Architecture& arch, const InverseCache& cache,
                                  const ParamVector& grad, ProductLog* log);

struct UpdateChoice {
  double alpha = 0.0;
  double mu = 0.0;
  ParamVector delta;
  double model_value = 0.0;  // M(delta), including h(theta)
  bool momentum_fallback = false;
};

/// alpha* = -grad^T Delta / (Delta^T F Delta + lambda_eta |Delta|^2), with F
/// products on `record`. |alpha*| is capped at alpha_cap.
UpdateChoice rescale(const Architecture& arch, const ParamVector& theta,
                     const PassRecord& record, const ParamVector& proposal,
                     const ParamVector& grad, double lambda_eta, double h_theta,
                     double alpha_cap = 1e4);

/// Jointly optimal (alpha, mu) for delta = alpha Delta + mu delta0 under the
/// exact quadratic model. Falls back to rescale when the 2x2 system is
/// degenerate (delta0 = 0 or parallel to Delta).
UpdateChoice momentum_solve(const Architecture& arch, const ParamVector& theta,
                            const PassRecord& record, const ParamVector& proposal,
                            const ParamVector& prev_delta, const ParamVector& grad,
                            double lambda_eta, double h_theta, double alpha_cap = 1e4);

/// Levenberg-Marquardt rule: rho > 3/4 shrinks by omega1, rho < 1/4 grows
/// by 1/omega1. Result clamped to [lambda_min, lambda_max].
double adapt_lambda(double lambda, double rho, double omega1, double lambda_min = 1e-8,
                    double lambda_max = 1e8);

/// {gamma0} off-schedule, else {gamma0, omega2 gamma0, gamma0 / omega2}.
/// The current value comes first so ties keep it.
std::vector<double> gamma_candidates(long k, double gamma0, int T2, double omega2);

struct Evaluation {
  double objective = 0.0;  // mean loss + eta/2 |theta|^2
  double error = 0.0;      // classification error or reconstruction error
};

Evaluation evaluate(const Architecture& arch, const ParamVector& theta, const Dataset& data,
                    double eta);

struct StepReport {
  long k = 0;
  long batch_size = 0;
  double alpha = 0.0;
  double mu = 0.0;
  double lambda = 0.0;  // value after this step's adaptation
  double gamma = 0.0;   // value chosen at this step
  double model_value = 0.0;
  double objective = 0.0;  // h(theta) on the mini-batch, before the update
  std::optional<double> rho;
  bool cache_rebuilt = false;
  bool momentum_fallback = false;
  double train_error = std::nan("");  // min(raw, averaged)
  double train_error_raw = std::nan("");
  double train_error_avg = std::nan("");
  double train_objective = std::nan("");  // full-set objective of the new iterate
};

struct OptimizerState {
  long k = 1;
  double lambda = 0.0;
  double gamma = 0.0;
  ParamVector delta0;
  FactorSet factors;
  std::optional<InverseCache> cache;
  ParamVector averaged;
  long prev_batch = 0;
};

/// K-FAC with factored Tikhonov damping, exact-Fisher rescaling (or
/// momentum), lambda/gamma adaptation and periodic inverse refresh.
class KfacOptimizer {
 public:
  KfacOptimizer(Architecture arch, OptimizerConfig config, ParamVector theta0);

  StepReport step(const Dataset& data);

  const Architecture& architecture() const { return arch_; }
  const OptimizerConfig& config() const { return config_; }
  const ParamVector& params() const { return theta_; }
  const ParamVector& averaged_params() const { return state_.averaged; }
  const OptimizerState& state() const { return state_; }

 private:
  std::vector<Eigen::Index> draw_subset(const std::vector<Eigen::Index>& from, long size);

  Architecture arch_;
  OptimizerConfig config_;
  ParamVector theta_;
  OptimizerState state_;
  Rng rng_;
};

}  // namespace kfac

#endif

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

#include "kfac/engine.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace kfac {

// --- mini-batch schedule ------------------------------------------------------

BatchSchedule BatchSchedule::parse(const std::string& text) {
  BatchSchedule s;
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  auto to_long = [&](const std::string& v) {
    std::size_t pos = 0;
    long x = 0;
    try {
      x = std::stol(v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != v.size() || x < 1) throw Error("bad batch schedule: " + text);
    return x;
  };
  if (parts.size() == 1 && parts[0] == "full") {
    s.kind = Kind::fixed;
    s.m = 0;
  } else if (parts.size() == 2 && parts[0] == "fixed") {
    s.kind = Kind::fixed;
    s.m = to_long(parts[1]);
  } else if (parts.size() == 4 && parts[0] == "exp" && parts[2] == "to_full_at") {
    s.kind = Kind::exponential;
    s.m = to_long(parts[1]);
    s.full_at = to_long(parts[3]);
    if (s.full_at < 2) throw Error("bad batch schedule: to_full_at must be >= 2");
  } else {
    throw Error("bad batch schedule: " + text +
                " (expected full, fixed:M or exp:M1:to_full_at:K)");
  }
  return s;
}

std::string BatchSchedule::to_string() const {
  if (kind == Kind::fixed) return m == 0 ? "full" : "fixed:" + std::to_string(m);
  return "exp:" + std::to_string(m) + ":to_full_at:" + std::to_string(full_at);
}

double exponential_rate(long m1, long full_at, long dataset_size) {
  return static_cast<double>(full_at - 1) /
         std::log(static_cast<double>(dataset_size) / static_cast<double>(m1));
}

long batch_size(const BatchSchedule& schedule, long k, long dataset_size) {
  if (dataset_size < 1) throw Error("batch_size: empty training set");
  if (schedule.m == 0) return dataset_size;
  if (schedule.kind == BatchSchedule::Kind::fixed || schedule.m >= dataset_size) {
    return std::clamp(schedule.m, 1L, dataset_size);
  }
  const double b = exponential_rate(schedule.m, schedule.full_at, dataset_size);
  const double mk = static_cast<double>(schedule.m) * std::exp(static_cast<double>(k - 1) / b);
  if (!(mk < static_cast<double>(dataset_size))) return dataset_size;
  return std::clamp(std::lround(mk), 1L, dataset_size);
}

void OptimizerConfig::validate() const {
  if (T1 < 1 || T2 < 1 || T3 < 1) throw Error("T1, T2, T3 must be >= 1");
  if (T2 % T3 != 0) throw Error("T2 must be a multiple of T3");
  if (!(omega1 > 0.0 && omega1 < 1.0) || !(omega2 > 0.0 && omega2 < 1.0)) {
    throw Error("omega1 and omega2 must lie in (0, 1)");
  }
  if (!(tau1 > 0.0 && tau1 <= 1.0) || !(tau2 > 0.0 && tau2 <= 1.0)) {
    throw Error("tau1 and tau2 must lie in (0, 1]");
  }
  if (!(eta >= 0.0)) throw Error("eta must be >= 0");
  if (!(lambda0 > 0.0)) throw Error("lambda0 must be > 0");
  if (!(xi >= 0.0 && xi < 1.0)) throw Error("xi must lie in [0, 1)");
  if (lowrank && mode != Approx::block_diag) {
    throw Error("the low-rank proposal is only available in block-diagonal mode");
  }
}

// --- proposals -------------------------------------------------------------------

InverseCache build_inverse(const FactorSet& factors, double gamma, Approx mode) {
  InverseCache c;
  c.mode = mode;
  c.gamma = gamma;
  if (mode == Approx::block_diag) {
    c.bd = blockdiag_build(factors, gamma);
  } else {
    c.td = tridiag_build(factors, gamma);
  }
  return c;
}

ParamVector propose(const Architecture& arch, const InverseCache& cache,
                    const ParamVector& grad, double gamma) {
  if (cache.gamma != gamma) {
    throw Error("propose: inverse cache was built for gamma = " + std::to_string(cache.gamma) +
                ", not " + std::to_string(gamma));
  }
  if (cache.mode == Approx::block_diag) return -blockdiag_apply(arch, cache.bd, grad);
  return -tridiag_apply(arch, cache.td, grad);
}

double ProductLog::flops() const {
  double f = 0.0;
  for (const auto& p : products) {
    f += 2.0 * static_cast<double>(p.rows) * static_cast<double>(p.inner) *
         static_cast<double>(p.cols);
  }
  return f;
}

namespace {

Mat logged_product(const Mat& x, const Mat& y, ProductLog* log) {
  if (log) log->products.push_back({x.rows(), x.cols(), y.cols()});
  return x * y;
}

}  // namespace

ParamVector lowrank_propose(const Architecture& arch, const InverseCache& cache,
                            const PassRecord& record, ProductLog* log) {
  if (cache.mode != Approx::block_diag) {
    throw Error("lowrank_propose: only supported for the block-diagonal approximation");
  }
  if (!record.has_gradients()) throw Error("lowrank_propose: record has no g");
  const double inv_m = 1.0 / static_cast<double>(record.cases());
  ParamVector delta(arch.param_count());
  for (int l = 0; l < arch.num_layers(); ++l) {
    const Mat left = logged_product(cache.bd.g_inv[l], record.g[l], log);              // d_out x m
    const Mat right = logged_product(record.abar[l].transpose(), cache.bd.a_inv[l], log);  // m x d_in
    layer_block(arch, delta, l) = -inv_m * logged_product(left, right, log);
  }
  return delta;
}

ParamVector direct_propose_logged(const Architecture& arch, const InverseCache& cache,
                                  const ParamVector& grad, ProductLog* log) {
  if (cache.mode != Approx::block_diag) throw Error("direct_propose_logged: block-diagonal only");
  ParamVector delta(arch.param_count());
  for (int l = 0; l < arch.num_layers(); ++l) {
    const Mat gw = logged_product(cache.bd.g_inv[l], Mat(layer_block(arch, grad, l)), log);
    layer_block(arch, delta, l) = -logged_product(gw, cache.bd.a_inv[l], log);
  }
  return delta;
}

// --- step-size selection -------------------------------------------------------------

UpdateChoice rescale(const Architecture& arch, const ParamVector& theta,
                     const PassRecord& record, const ParamVector& proposal,
                     const ParamVector& grad, double lambda_eta, double h_theta,
                     double alpha_cap) {
  UpdateChoice out;
  out.model_value = h_theta;
  if (proposal.isZero(0.0)) {
    out.delta = ParamVector::Zero(proposal.size());
    return out;
  }
  const QuadScalars q =
      quad_scalars(arch, theta, record, proposal, proposal, grad, lambda_eta);
  const double curv = q.vCv();
  if (!(curv > 0.0)) throw NumericalError("rescale: non-positive curvature along the proposal");
  double alpha = -q.grad_dot_v / curv;
  if (std::abs(alpha) > alpha_cap) {
    std::fprintf(stderr, "warning: rescale step %.3g capped at %.3g\n", alpha, alpha_cap);
    alpha = std::copysign(alpha_cap, alpha);
  }
  out.alpha = alpha;
  out.delta = alpha * proposal;
  out.model_value = h_theta + alpha * q.grad_dot_v + 0.5 * alpha * alpha * curv;
  return out;
}

UpdateChoice momentum_solve(const Architecture& arch, const ParamVector& theta,
                            const PassRecord& record, const ParamVector& proposal,
                            const ParamVector& prev_delta, const ParamVector& grad,
                            double lambda_eta, double h_theta, double alpha_cap) {
  auto fallback = [&] {
    UpdateChoice r = rescale(arch, theta, record, proposal, grad, lambda_eta, h_theta, alpha_cap);
    r.momentum_fallback = true;
    return r;
  };
  if (prev_delta.size() != proposal.size() || prev_delta.isZero(0.0)) return fallback();
  if (proposal.isZero(0.0)) {
    // Only the momentum direction is available.
    const QuadScalars q =
        quad_scalars(arch, theta, record, prev_delta, prev_delta, grad, lambda_eta);
    UpdateChoice r;
    r.model_value = h_theta;
    r.delta = ParamVector::Zero(proposal.size());
    if (q.vCv() > 0.0) {
      r.mu = -q.grad_dot_v / q.vCv();
      r.delta = r.mu * prev_delta;
      r.model_value = h_theta + r.mu * q.grad_dot_v + 0.5 * r.mu * r.mu * q.vCv();
    }
    return r;
  }
  // v = Delta, u = delta0
  const QuadScalars q =
      quad_scalars(arch, theta, record, proposal, prev_delta, grad, lambda_eta);
  const double a11 = q.vCv(), a12 = q.uCv(), a22 = q.uCu();
  const double det = a11 * a22 - a12 * a12;
  if (!(a11 > 0.0) || !(a22 > 0.0) || !(det > 1e-12 * a11 * a22)) return fallback();
  const double b1 = q.grad_dot_v, b2 = q.grad_dot_u;
  double alpha = -(a22 * b1 - a12 * b2) / det;
  double mu = -(a11 * b2 - a12 * b1) / det;
  const double biggest = std::max(std::abs(alpha), std::abs(mu));
  if (biggest > alpha_cap) {
    std::fprintf(stderr, "warning: momentum step (%.3g, %.3g) capped at %.3g\n", alpha, mu,
                 alpha_cap);
    alpha *= alpha_cap / biggest;
    mu *= alpha_cap / biggest;
  }
  UpdateChoice r;
  r.alpha = alpha;
  r.mu = mu;
  r.delta = alpha * proposal + mu * prev_delta;
  r.model_value = h_theta + alpha * b1 + mu * b2 +
                  0.5 * (alpha * alpha * a11 + 2.0 * alpha * mu * a12 + mu * mu * a22);
  return r;
}

double adapt_lambda(double lambda, double rho, double omega1, double lambda_min,
                    double lambda_max) {
  if (rho > 0.75) {
    lambda *= omega1;
  } else if (rho < 0.25) {
    lambda /= omega1;
  }
  return std::clamp(lambda, lambda_min, lambda_max);
}

std::vector<double> gamma_candidates(long k, double gamma0, int T2, double omega2) {
  if (k % T2 != 0) return {gamma0};
  return {gamma0, omega2 * gamma0, gamma0 / omega2};
}

Evaluation evaluate(const Architecture& arch, const ParamVector& theta, const Dataset& data,
                    double eta) {
  const PassRecord rec = forward(arch, theta, data.inputs);
  Evaluation e;
  e.objective = mean_loss(arch, rec, data.targets) + 0.5 * eta * theta.squaredNorm();
  e.error = data.kind == TaskKind::classification
                ? classification_error(rec.output, data.targets)
                : reconstruction_error(rec.output, data.targets);
  return e;
}

// --- optimizer -----------------------------------------------------------------------

KfacOptimizer::KfacOptimizer(Architecture arch, OptimizerConfig config, ParamVector theta0)
    : arch_(std::move(arch)), config_(std::move(config)), theta_(std::move(theta0)),
      rng_(config_.seed) {
  arch_.validate();
  config_.validate();
  if (theta_.size() != arch_.param_count()) throw ShapeError("initial parameters have the wrong length");
  state_.lambda = config_.lambda0;
  state_.gamma = std::sqrt(config_.lambda0 + config_.eta);
  state_.delta0 = ParamVector::Zero(theta_.size());
  state_.factors = FactorSet::zeros(arch_, config_.mode);
  state_.averaged = theta_;
}

std::vector<Eigen::Index> KfacOptimizer::draw_subset(const std::vector<Eigen::Index>& from,
                                                     long size) {
  std::vector<Eigen::Index> pool = from;
  const auto n = static_cast<long>(pool.size());
  size = std::clamp(size, 1L, n);
  for (long j = 0; j < size; ++j) {
    std::uniform_int_distribution<long> pick(j, n - 1);
    std::swap(pool[static_cast<std::size_t>(j)], pool[static_cast<std::size_t>(pick(rng_))]);
  }
  pool.resize(static_cast<std::size_t>(size));
  return pool;
}

StepReport KfacOptimizer::step(const Dataset& data) {
  const long k = state_.k;
  const long n = data.size();
  const long m = batch_size(config_.schedule, k, n);
  const double lambda_eta = state_.lambda + config_.eta;

  if (config_.momentum && state_.prev_batch > 0 &&
      (m > 4 * state_.prev_batch || 4 * m < state_.prev_batch)) {
    state_.delta0.setZero();
  }

  std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  const std::vector<Eigen::Index> batch = m == n ? all : draw_subset(all, m);
  const auto sub1 = draw_subset(batch, std::lround(config_.tau1 * static_cast<double>(m)));
  const auto sub2 = draw_subset(batch, std::lround(config_.tau2 * static_cast<double>(m)));
  const Dataset mini = m == n ? data : data.subset(batch);

  // gradient and objective on the mini-batch
  PassRecord rec = forward(arch_, theta_, mini.inputs);
  const double h = mean_loss(arch_, rec, mini.targets) + 0.5 * config_.eta * theta_.squaredNorm();
  ParamVector grad = backward(arch_, theta_, rec, mini.targets);
  ParamVector grad_total = grad + config_.eta * theta_;
  if (!std::isfinite(h) || !grad_total.allFinite()) {
    throw NumericalError("non-finite objective or gradient at iteration " + std::to_string(k));
  }

  // curvature statistics from sampled targets on S1
  {
    const Dataset s1 = data.subset(sub1);
    PassRecord rec1 = forward(arch_, theta_, s1.inputs);
    const Mat sampled = sample_targets(arch_, rec1, rng_);
    backward(arch_, theta_, rec1, sampled);
    update_running_inplace(state_.factors, batch_moments(rec1, config_.mode), k);
  }

  const Dataset s2 = data.subset(sub2);
  const PassRecord rec2 = forward(arch_, theta_, s2.inputs);

  const bool refresh = k % config_.T3 == 0 || k <= 3 || !state_.cache;
  StepReport report;
  report.k = k;
  report.batch_size = m;
  report.objective = h;

  std::optional<UpdateChoice> best;
  std::optional<InverseCache> best_cache;
  double best_gamma = state_.gamma;
  for (double gamma : gamma_candidates(k, state_.gamma, config_.T2, config_.omega2)) {
    std::optional<InverseCache> fresh;
    const InverseCache* cache = nullptr;
    if (!refresh && state_.cache && state_.cache->gamma == gamma) {
      cache = &*state_.cache;
    } else {
      fresh = build_inverse(state_.factors, gamma, config_.mode);
      cache = &*fresh;
      report.cache_rebuilt = true;
    }
    ParamVector proposal;
    if (config_.lowrank) {
      proposal = lowrank_propose(arch_, *cache, rec);
      if (config_.eta > 0.0) proposal += propose(arch_, *cache, config_.eta * theta_, gamma);
    } else {
      proposal = propose(arch_, *cache, grad_total, gamma);
    }
    UpdateChoice choice =
        config_.momentum
            ? momentum_solve(arch_, theta_, rec2, proposal, state_.delta0, grad_total, lambda_eta,
                             h, config_.alpha_cap)
            : rescale(arch_, theta_, rec2, proposal, grad_total, lambda_eta, h,
                      config_.alpha_cap);
    if (!best || choice.model_value < best->model_value) {
      best = std::move(choice);
      best_gamma = gamma;
      best_cache = std::move(fresh);
    }
  }
  if (best_cache) state_.cache = std::move(best_cache);
  if (!best->delta.allFinite()) {
    throw NumericalError("non-finite update at iteration " + std::to_string(k));
  }

  if (k % config_.T1 == 0) {
    const ParamVector trial = theta_ + best->delta;
    const PassRecord rec_new = forward(arch_, trial, mini.inputs);
    const double h_new =
        mean_loss(arch_, rec_new, mini.targets) + 0.5 * config_.eta * trial.squaredNorm();
    report.rho = reduction_ratio(h_new, h, best->model_value);
    if (report.rho && std::isfinite(*report.rho)) {
      state_.lambda = adapt_lambda(state_.lambda, *report.rho, config_.omega1, config_.lambda_min,
                                   config_.lambda_max);
    }
  }

  theta_ += best->delta;
  state_.delta0 = best->delta;
  state_.gamma = best_gamma;
  state_.prev_batch = m;
  state_.averaged = k == 1 ? theta_ : ParamVector(config_.xi * state_.averaged + (1.0 - config_.xi) * theta_);

  report.alpha = best->alpha;
  report.mu = best->mu;
  report.lambda = state_.lambda;
  report.gamma = best_gamma;
  report.model_value = best->model_value;
  report.momentum_fallback = best->momentum_fallback;
  if (config_.track_train_error) {
    const Evaluation raw = evaluate(arch_, theta_, data, config_.eta);
    const Evaluation avg = evaluate(arch_, state_.averaged, data, config_.eta);
    report.train_error_raw = raw.error;
    report.train_error_avg = avg.error;
    report.train_error = std::min(raw.error, avg.error);
    report.train_objective = raw.objective;
  }
  ++state_.k;
  return report;
}

}  // namespace kfac

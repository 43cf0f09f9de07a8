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

#include "kfac/factor_stats.hpp"

#include <algorithm>

namespace kfac {

std::string_view to_string(Approx a) {
  return a == Approx::block_diag ? "block_diag" : "block_tridiag";
}

FactorSet FactorSet::zeros(const Architecture& arch, Approx mode) {
  FactorSet f;
  f.mode = mode;
  const int L = arch.num_layers();
  for (int l = 0; l < L; ++l) {
    f.a.push_back(Mat::Zero(arch.cols(l), arch.cols(l)));
    f.g.push_back(Mat::Zero(arch.rows(l), arch.rows(l)));
  }
  if (mode == Approx::block_tridiag) {
    for (int l = 0; l + 1 < L; ++l) {
      f.a_off.push_back(Mat::Zero(arch.cols(l), arch.cols(l + 1)));
      f.g_off.push_back(Mat::Zero(arch.rows(l), arch.rows(l + 1)));
    }
  }
  return f;
}

FactorSet batch_moments(const PassRecord& record, Approx mode) {
  if (!record.has_gradients()) {
    throw Error("batch_moments: record has no back-propagated g (run a sampled-target backward pass)");
  }
  const int L = static_cast<int>(record.abar.size());
  const double inv_m = 1.0 / static_cast<double>(record.cases());
  FactorSet f;
  f.mode = mode;
  for (int l = 0; l < L; ++l) {
    Mat a = Mat::Zero(record.abar[l].rows(), record.abar[l].rows());
    a.selfadjointView<Eigen::Lower>().rankUpdate(record.abar[l], inv_m);
    f.a.push_back(a.selfadjointView<Eigen::Lower>());
    Mat g = Mat::Zero(record.g[l].rows(), record.g[l].rows());
    g.selfadjointView<Eigen::Lower>().rankUpdate(record.g[l], inv_m);
    f.g.push_back(g.selfadjointView<Eigen::Lower>());
  }
  if (mode == Approx::block_tridiag) {
    for (int l = 0; l + 1 < L; ++l) {
      f.a_off.push_back(inv_m * record.abar[l] * record.abar[l + 1].transpose());
      f.g_off.push_back(inv_m * record.g[l] * record.g[l + 1].transpose());
    }
  }
  return f;
}

double running_decay(long k) {
  if (k < 1) throw Error("running_decay: iteration must be >= 1");
  return std::min(1.0 - 1.0 / static_cast<double>(k), 0.95);
}

namespace {

void blend(std::vector<Mat>& dst, const std::vector<Mat>& src, double eps) {
  if (dst.size() != src.size()) throw ShapeError("factor sets have different layouts");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].rows() != src[i].rows() || dst[i].cols() != src[i].cols()) {
      throw ShapeError("factor shape mismatch");
    }
    dst[i] = eps * dst[i] + (1.0 - eps) * src[i];
  }
}

}  // namespace

void update_running_inplace(FactorSet& running, const FactorSet& fresh, long k) {
  if (running.mode != fresh.mode) throw ShapeError("factor sets use different modes");
  const double eps = running_decay(k);
  blend(running.a, fresh.a, eps);
  blend(running.g, fresh.g, eps);
  blend(running.a_off, fresh.a_off, eps);
  blend(running.g_off, fresh.g_off, eps);
  running.last_update = k;
}

FactorSet update_running(const FactorSet& old, const FactorSet& fresh, long k) {
  FactorSet out = old;
  update_running_inplace(out, fresh, k);
  return out;
}

}  // namespace kfac

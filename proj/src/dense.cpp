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

#include "kfac/dense.hpp"

#include <cstdlib>

#include "kfac/exact_fisher.hpp"

namespace kfac::dense {

namespace {

void guard(const Architecture& arch) {
  if (arch.param_count() > kDenseFisherLimit) {
    throw Error("dense assembly limited to " + std::to_string(kDenseFisherLimit) +
                " parameters");
  }
}

}  // namespace

Mat assemble(Eigen::Index n, const std::function<Vec(const Vec&)>& op) {
  Mat m(n, n);
  Vec e = Vec::Zero(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    e(c) = 1.0;
    m.col(c) = op(e);
    e(c) = 0.0;
  }
  return m;
}

Mat kron_tilde(const Architecture& arch, const PassRecord& record) {
  guard(arch);
  if (!record.has_gradients()) throw Error("kron_tilde: record has no g");
  const int L = arch.num_layers();
  const double inv_m = 1.0 / static_cast<double>(record.cases());
  Mat f(arch.param_count(), arch.param_count());
  for (int i = 0; i < L; ++i) {
    for (int j = 0; j < L; ++j) {
      const Mat a = inv_m * record.abar[i] * record.abar[j].transpose();
      const Mat g = inv_m * record.g[i] * record.g[j].transpose();
      f.block(arch.layer_offset(i), arch.layer_offset(j), arch.layer_size(i),
              arch.layer_size(j)) = kron_dense(a, g);
    }
  }
  return f;
}

Mat damped_tilde(const Architecture& arch, const Mat& tilde, const DampedFactors& damped) {
  Mat f = tilde;
  for (int l = 0; l < arch.num_layers(); ++l) {
    f.block(arch.layer_offset(l), arch.layer_offset(l), arch.layer_size(l),
            arch.layer_size(l)) = kron_dense(damped.a[l], damped.g[l]);
  }
  return f;
}

Mat block_diagonal(const Architecture& arch, const DampedFactors& damped) {
  guard(arch);
  Mat f = Mat::Zero(arch.param_count(), arch.param_count());
  for (int l = 0; l < arch.num_layers(); ++l) {
    f.block(arch.layer_offset(l), arch.layer_offset(l), arch.layer_size(l),
            arch.layer_size(l)) = kron_dense(damped.a[l], damped.g[l]);
  }
  return f;
}

Mat tridiag_inverse(const Architecture& arch, const TridiagCache& cache) {
  guard(arch);
  return assemble(arch.param_count(),
                  [&](const Vec& v) { return Vec(tridiag_apply(arch, cache, v)); });
}

Mat block(const Architecture& arch, const Mat& m, int i, int j) {
  return m.block(arch.layer_offset(i), arch.layer_offset(j), arch.layer_size(i),
                 arch.layer_size(j));
}

Mat block_mean_abs(const Architecture& arch, const Mat& m) {
  const int L = arch.num_layers();
  Mat out(L, L);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) out(i, j) = block(arch, m, i, j).cwiseAbs().mean();
  return out;
}

double off_tridiagonal_max(const Architecture& arch, const Mat& m) {
  double mx = 0.0;
  const int L = arch.num_layers();
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j)
      if (std::abs(i - j) > 1) mx = std::max(mx, block(arch, m, i, j).cwiseAbs().maxCoeff());
  return mx;
}

}  // namespace kfac::dense

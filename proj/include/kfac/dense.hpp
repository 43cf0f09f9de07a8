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

#ifndef KFAC_DENSE_HPP
#define KFAC_DENSE_HPP

// Dense assemblies of the curvature approximations. Only for networks small
// enough that n x n matrices are cheap; used by the diagnostics dump and the
// test oracles.

#include <functional>

#include "kfac/kron.hpp"

namespace kfac::dense {

/// Applies `op` to every basis vector of R^n and stacks the results.
Mat assemble(Eigen::Index n, const std::function<Vec(const Vec&)>& op);

/// Block-wise Kronecker approximation Ftilde with every block
/// E[abar_i abar_j^T] (x) E[g_i g_j^T] taken from one record.
Mat kron_tilde(const Architecture& arch, const PassRecord& record);

/// Ftilde with its diagonal blocks replaced by the factored-damped ones.
Mat damped_tilde(const Architecture& arch, const Mat& tilde, const DampedFactors& damped);

/// Block-diagonal approximation built from damped factors.
Mat block_diagonal(const Architecture& arch, const DampedFactors& damped);

/// Inverse of the block-tridiagonal-inverse approximation, Xi^T Lambda Xi.
Mat tridiag_inverse(const Architecture& arch, const TridiagCache& cache);

/// Sub-matrix for parameter blocks (i, j).
Mat block(const Architecture& arch, const Mat& m, int i, int j);

/// L x L matrix of per-block mean absolute values.
Mat block_mean_abs(const Architecture& arch, const Mat& m);

/// Largest absolute entry outside the tridiagonal blocks.
double off_tridiagonal_max(const Architecture& arch, const Mat& m);

}  // namespace kfac::dense

#endif

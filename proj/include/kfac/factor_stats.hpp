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

#ifndef KFAC_FACTOR_STATS_HPP
#define KFAC_FACTOR_STATS_HPP

#include <vector>

#include "kfac/net.hpp"

namespace kfac {

/// Which structured inverse the optimizer uses.
enum class Approx { block_diag, block_tridiag };

std::string_view to_string(Approx a);

/// Second-moment Kronecker factors, 0-based by layer:
///   a[l]     = E[abar_l abar_l^T]        ((d_l + 1)^2)
///   g[l]     = E[g_l g_l^T]              (d_{l+1}^2)
///   a_off[l] = E[abar_l abar_{l+1}^T]    (tridiagonal only, l = 0..L-2)
///   g_off[l] = E[g_l g_{l+1}^T]          (tridiagonal only, l = 0..L-2)
struct FactorSet {
  Approx mode = Approx::block_diag;
  std::vector<Mat> a, g, a_off, g_off;
  long last_update = 0;

  static FactorSet zeros(const Architecture& arch, Approx mode);
  int num_layers() const { return static_cast<int>(a.size()); }
  bool tridiagonal() const { return mode == Approx::block_tridiag; }
};

/// Batch means of the outer products. The record's g must come from a
/// backward pass with targets drawn by sample_targets.
FactorSet batch_moments(const PassRecord& record, Approx mode);

/// Decay weight eps = min(1 - 1/k, 0.95).
double running_decay(long k);

/// eps * old + (1 - eps) * fresh with eps = running_decay(k).
FactorSet update_running(const FactorSet& old, const FactorSet& fresh, long k);

/// In-place variant used by the optimizer.
void update_running_inplace(FactorSet& running, const FactorSet& fresh, long k);

}  // namespace kfac

#endif

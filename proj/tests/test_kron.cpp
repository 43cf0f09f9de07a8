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


#include <doctest.h>

#include "kfac/kron.hpp"
#include "support.hpp"

using namespace kfac;
using kfac::testing::kron_loops;
using kfac::testing::random_mat;
using kfac::testing::random_spd;
using kfac::testing::rel_err;
using kfac::testing::as_vec;
using kfac::testing::dense_tilde;
using kfac::testing::random_factors;
using kfac::testing::relative_psd;
using kfac::testing::Tiny;

TEST_CASE("kron products follow the vec convention") {
  Rng rng(73);
  for (int trial = 0; trial < 5; ++trial) {
    const Mat a = random_mat(3, 2, rng), b = random_mat(4, 5, rng);
    const Mat v = random_mat(5, 2, rng);
    CHECK(rel_err(as_vec(kron_apply(a, b, v)), kron_loops(a, b) * as_vec(v)) < 1e-14);
    CHECK(rel_err(kron_mv(a, b, as_vec(v)), kron_loops(a, b) * as_vec(v)) < 1e-14);
    CHECK(rel_err(kron_dense(a, b), kron_loops(a, b)) == 0.0);
  }
}

TEST_CASE("pi balances the factor traces") {
  CHECK(compute_pi(Mat::Identity(3, 3), 4.0 * Mat::Identity(2, 2)).value == doctest::Approx(0.5));
  CHECK_FALSE(compute_pi(Mat::Identity(3, 3), 4.0 * Mat::Identity(2, 2)).fallback);
  const PiValue p = compute_pi(Mat::Zero(2, 2), Mat::Identity(2, 2));
  CHECK(p.fallback);
  CHECK(p.value == 1.0);

  FactorSet f;
  f.a = {Mat::Identity(3, 3)};
  f.g = {4.0 * Mat::Identity(2, 2)};
  const DampedFactors d = damp_factors(f, 2.0);
  CHECK(rel_err(d.a[0], 2.0 * Mat::Identity(3, 3)) < 1e-15);
  CHECK(rel_err(d.g[0], 8.0 * Mat::Identity(2, 2)) < 1e-15);
}

TEST_CASE("block-diagonal inverse on a trivial layer") {
  const auto arch = Architecture::mlp({1, 1}, Activation::tanh, LossKind::squared_error);
  FactorSet f;
  f.a = {2.0 * Mat::Identity(2, 2)};
  f.g = {4.0 * Mat::Identity(1, 1)};
  const BlockDiagCache c = blockdiag_build(f, 0.0);
  CHECK(rel_err(blockdiag_apply(arch, c, Vec::Constant(2, 8.0)), Vec::Ones(2)) < 1e-15);
}

TEST_CASE("blockdiag_apply matches the dense inverse") {
  Rng rng(79);
  for (int trial = 0; trial < 20; ++trial) {
    const Tiny t = random_factors(rng);
    const double gamma = trial % 4 == 0 ? 1e-3 : 0.3;
    const BlockDiagCache c = blockdiag_build(t.factors, gamma);
    const Mat dense = dense_tilde(t.arch, t.factors, gamma, false);
    const Vec v = random_mat(t.arch.param_count(), 1, rng);
    const Vec u = blockdiag_apply(t.arch, c, v);
    CHECK(rel_err(u, dense.lu().solve(v)) < 1e-8);
    CHECK(rel_err(dense * u, v) < 1e-8);
  }
}

TEST_CASE("stein_solve matches dense solves") {
  Rng rng(83);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> dim(1, 6);
    const int n1 = dim(rng), n2 = dim(rng);
    const Mat a = random_spd(n1, rng), b = random_spd(n2, rng);
    const Mat c = relative_psd(a, rng), d = relative_psd(b, rng);
    const Vec v = random_mat(n1 * n2, 1, rng);
    for (KronSign sign : {KronSign::plus, KronSign::minus}) {
      const double s = sign == KronSign::plus ? 1.0 : -1.0;
      const Mat dense = kron_loops(a, b) + s * kron_loops(c, d);
      CHECK(rel_err(stein_solve(a, b, c, d, sign, v), dense.lu().solve(v)) < 1e-9);
    }
    const Mat cs = relative_psd(Mat::Identity(n1, n1), rng), ds = relative_psd(Mat::Identity(n2, n2), rng);
    for (KronSign sign : {KronSign::plus, KronSign::minus}) {
      const double s = sign == KronSign::plus ? 1.0 : -1.0;
      const Mat dense = 1.3 * Mat::Identity(n1 * n2, n1 * n2) + s * kron_loops(cs, ds);
      CHECK(rel_err(stein_solve_scaled(1.3, cs, ds, sign, v), dense.lu().solve(v)) < 1e-9);
    }
  }
}

TEST_CASE("stein solver reuse and singular systems") {
  Rng rng(89);
  const Mat a = random_spd(3, rng), b = random_spd(2, rng);
  const Mat c = relative_psd(a, rng), d = relative_psd(b, rng);
  const SteinSolver s = SteinSolver::general(a, b, c, d, KronSign::plus);
  CHECK(s.a_dim() == 3);
  CHECK(s.b_dim() == 2);
  const Mat v = random_mat(2, 3, rng);
  const Mat u = s.solve(v);
  CHECK(rel_err(kron_apply(a, b, u) + kron_apply(c, d, u), v) < 1e-10);

  CHECK_THROWS_AS(SteinSolver::scaled(1.0, Mat::Identity(2, 2), Mat::Identity(2, 2), KronSign::minus),
                  SingularError);
  CHECK_THROWS_AS(spd_inverse(-Mat::Identity(2, 2), 4), SingularError);
  try {
    spd_inverse(-Mat::Identity(2, 2), 4);
  } catch (const SingularError& e) {
    CHECK(e.layer() == 4);
  }
}

TEST_CASE("tridiagonal inverse matches the dense graphical-model construction") {
  Rng rng(97);
  for (int trial = 0; trial < 20; ++trial) {
    const Tiny t = random_factors(rng);
    const double gamma = 0.2;
    const TridiagCache c = tridiag_build(t.factors, gamma);
    const Mat tilde = dense_tilde(t.arch, t.factors, gamma, true);
    const Mat oracle = kfac::testing::tridiag_inverse_oracle(t.arch, tilde);
    const Vec v = random_mat(t.arch.param_count(), 1, rng);
    CHECK(rel_err(tridiag_apply(t.arch, c, v), oracle * v) < 1e-8);

    // assemble the applied operator column by column
    const Eigen::Index n = t.arch.param_count();
    Mat hat_inv(n, n);
    for (Eigen::Index j = 0; j < n; ++j) hat_inv.col(j) = tridiag_apply(t.arch, c, Vec::Unit(n, j));
    const Mat hat = hat_inv.inverse();
    for (int i = 0; i < t.arch.num_layers(); ++i) {
      for (int j = 0; j < t.arch.num_layers(); ++j) {
        const auto blk = [&](const Mat& m) {
          return Mat(m.block(t.arch.layer_offset(i), t.arch.layer_offset(j), t.arch.layer_size(i),
                             t.arch.layer_size(j)));
        };
        if (std::abs(i - j) <= 1) {
          CHECK(rel_err(blk(hat), blk(tilde)) < 1e-6);
        } else {
          CHECK(blk(hat_inv).cwiseAbs().maxCoeff() < 1e-10);
        }
      }
    }
  }
}

TEST_CASE("tridiagonal cache without coupling equals the block-diagonal one") {
  Rng rng(101);
  Tiny t = random_factors(rng);
  for (auto& m : t.factors.a_off) m.setZero();
  for (auto& m : t.factors.g_off) m.setZero();
  const Vec v = random_mat(t.arch.param_count(), 1, rng);
  const Vec bd = blockdiag_apply(t.arch, blockdiag_build(t.factors, 0.4), v);
  const Vec td = tridiag_apply(t.arch, tridiag_build(t.factors, 0.4), v);
  CHECK(rel_err(td, bd) < 1e-10);
}

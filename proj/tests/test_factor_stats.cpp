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

#include "kfac/factor_stats.hpp"
#include "support.hpp"

using namespace kfac;
using kfac::testing::rel_err;

namespace {

PassRecord sampled_record(const Architecture& arch, const ParamVector& theta, const Mat& x,
                          Rng& rng) {
  PassRecord rec = forward(arch, theta, x);
  backward(arch, theta, rec, sample_targets(arch, rec, rng));
  return rec;
}

}  // namespace

TEST_CASE("batch moments equal per-case outer-product sums") {
  Rng rng(61);
  for (int trial = 0; trial < 10; ++trial) {
    const auto loss = trial % 2 ? LossKind::softmax_cross_entropy : LossKind::squared_error;
    const Architecture arch = kfac::testing::random_arch(rng, loss);
    const ParamVector theta = kfac::testing::random_params(arch, rng);
    const Mat x = kfac::testing::random_mat(arch.input_dim(), 9, rng);
    const PassRecord rec = sampled_record(arch, theta, x, rng);
    const FactorSet f = batch_moments(rec, Approx::block_tridiag);
    const int L = arch.num_layers();
    REQUIRE(f.num_layers() == L);
    REQUIRE(f.a_off.size() == static_cast<std::size_t>(L - 1));
    for (int l = 0; l < L; ++l) {
      Mat a = Mat::Zero(arch.cols(l), arch.cols(l)), g = Mat::Zero(arch.rows(l), arch.rows(l));
      for (Eigen::Index j = 0; j < 9; ++j) {
        a += rec.abar[l].col(j) * rec.abar[l].col(j).transpose();
        g += rec.g[l].col(j) * rec.g[l].col(j).transpose();
      }
      CHECK(rel_err(f.a[l], a / 9.0) < 1e-13);
      CHECK(rel_err(f.g[l], g / 9.0) < 1e-13);
      CHECK(f.a[l](arch.dims[l], arch.dims[l]) == doctest::Approx(1.0).epsilon(1e-14));
      CHECK((f.a[l] - f.a[l].transpose()).norm() == 0.0);
      CHECK((f.g[l] - f.g[l].transpose()).norm() == 0.0);
      if (l + 1 < L) {
        Mat ao = Mat::Zero(arch.cols(l), arch.cols(l + 1)), go = Mat::Zero(arch.rows(l), arch.rows(l + 1));
        for (Eigen::Index j = 0; j < 9; ++j) {
          ao += rec.abar[l].col(j) * rec.abar[l + 1].col(j).transpose();
          go += rec.g[l].col(j) * rec.g[l + 1].col(j).transpose();
        }
        CHECK(rel_err(f.a_off[l], ao / 9.0) < 1e-13);
        CHECK(rel_err(f.g_off[l], go / 9.0) < 1e-13);
      }
    }
    const FactorSet d = batch_moments(rec, Approx::block_diag);
    CHECK(d.a_off.empty());
    CHECK(d.g_off.empty());
  }
}

TEST_CASE("diagonal factors are positive semidefinite") {
  Rng rng(67);
  const auto arch = Architecture::mlp({4, 5, 3}, Activation::tanh, LossKind::softmax_cross_entropy);
  const ParamVector theta = kfac::testing::random_params(arch, rng);
  const FactorSet f =
      batch_moments(sampled_record(arch, theta, kfac::testing::random_mat(4, 3, rng), rng),
                    Approx::block_diag);
  for (int l = 0; l < 2; ++l) {
    CHECK(Eigen::SelfAdjointEigenSolver<Mat>(f.a[l]).eigenvalues().minCoeff() > -1e-12);
    CHECK(Eigen::SelfAdjointEigenSolver<Mat>(f.g[l]).eigenvalues().minCoeff() > -1e-12);
  }
}

TEST_CASE("moments need a backward pass") {
  const auto arch = Architecture::mlp({2, 2}, Activation::tanh, LossKind::squared_error);
  const PassRecord rec = forward(arch, ParamVector::Zero(arch.param_count()), Mat::Ones(2, 3));
  CHECK_THROWS_AS(batch_moments(rec, Approx::block_diag), Error);
}

TEST_CASE("decay schedule") {
  CHECK(running_decay(1) == 0.0);
  CHECK(running_decay(2) == 0.5);
  CHECK(running_decay(10) == doctest::Approx(0.9));
  CHECK(running_decay(20) == doctest::Approx(0.95));
  CHECK(running_decay(1000) == 0.95);
}

TEST_CASE("running update follows the recurrence") {
  Rng rng(71);
  const auto arch = Architecture::mlp({3, 4, 2}, Activation::tanh, LossKind::squared_error);
  const ParamVector theta = kfac::testing::random_params(arch, rng);
  FactorSet running = FactorSet::zeros(arch, Approx::block_tridiag);
  std::vector<FactorSet> fresh;
  for (long k = 1; k <= 30; ++k) {
    fresh.push_back(batch_moments(
        sampled_record(arch, theta, kfac::testing::random_mat(3, 5, rng), rng), Approx::block_tridiag));
    if (k % 2) {
      running = update_running(running, fresh.back(), k);
    } else {
      update_running_inplace(running, fresh.back(), k);
    }
    CHECK(running.last_update == k);
  }
  // explicit weights: w_k = (1 - eps_k) prod_{j > k} eps_j
  for (int l = 0; l < 2; ++l) {
    Mat a = Mat::Zero(arch.cols(l), arch.cols(l));
    for (long k = 1; k <= 30; ++k) {
      double w = 1.0 - std::min(1.0 - 1.0 / k, 0.95);
      for (long j = k + 1; j <= 30; ++j) w *= std::min(1.0 - 1.0 / j, 0.95);
      a += w * fresh[k - 1].a[l];
    }
    CHECK(rel_err(running.a[l], a) < 1e-13);
  }
  const FactorSet first = update_running(FactorSet::zeros(arch, Approx::block_tridiag), fresh[0], 1);
  CHECK(rel_err(first.g[1], fresh[0].g[1]) == 0.0);
}

TEST_CASE("running update rejects mismatched shapes") {
  const auto a1 = Architecture::mlp({3, 4, 2}, Activation::tanh, LossKind::squared_error);
  const auto a2 = Architecture::mlp({3, 5, 2}, Activation::tanh, LossKind::squared_error);
  CHECK_THROWS(update_running(FactorSet::zeros(a1, Approx::block_diag),
                              FactorSet::zeros(a2, Approx::block_diag), 2));
}

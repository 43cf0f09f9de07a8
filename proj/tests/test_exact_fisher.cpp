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

#include "kfac/exact_fisher.hpp"
#include "support.hpp"

using namespace kfac;
using kfac::testing::rel_err;

namespace {

struct Instance {
  Architecture arch;
  ParamVector theta;
  Mat x;
};

Instance make_instance(Rng& rng, int trial) {
  const auto loss = trial % 2 ? LossKind::softmax_cross_entropy : LossKind::squared_error;
  Instance in;
  in.arch = kfac::testing::random_arch(rng, loss);
  in.theta = kfac::testing::random_params(in.arch, rng);
  in.x = kfac::testing::random_mat(in.arch.input_dim(), 4, rng);
  return in;
}

}  // namespace

TEST_CASE("jacobian_vec matches the explicit Jacobian") {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const Instance in = make_instance(rng, trial);
    const PassRecord rec = forward(in.arch, in.theta, in.x);
    const ParamVector v = kfac::testing::random_params(in.arch, rng, 1.0);
    const Mat jv = jacobian_vec(in.arch, in.theta, rec, v);
    for (Eigen::Index j = 0; j < in.x.cols(); ++j) {
      const Mat jac = kfac::testing::case_jacobian(in.arch, in.theta, in.x.col(j));
      CHECK(rel_err(jv.col(j), jac * v) < 1e-12);
    }
  }
}

TEST_CASE("fisher_vec matches the dense Fisher") {
  Rng rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    const Instance in = make_instance(rng, trial);
    const PassRecord rec = forward(in.arch, in.theta, in.x);
    const Mat f = kfac::testing::fisher_oracle(in.arch, in.theta, in.x);
    const ParamVector v = kfac::testing::random_params(in.arch, rng, 1.0);
    CHECK(rel_err(fisher_vec(in.arch, in.theta, rec, v), f * v) < 1e-10);
    CHECK(rel_err(dense_fisher(in.arch, in.theta, rec), f) < 1e-10);
  }
}

TEST_CASE("fisher is symmetric positive semidefinite") {
  Rng rng(44);
  const Instance in = make_instance(rng, 1);
  const Mat f = dense_fisher(in.arch, in.theta, forward(in.arch, in.theta, in.x));
  CHECK((f - f.transpose()).norm() < 1e-12 * f.norm());
  Eigen::SelfAdjointEigenSolver<Mat> es(f);
  CHECK(es.eigenvalues().minCoeff() > -1e-10 * f.norm());
}

TEST_CASE("quad_scalars matches dense products") {
  Rng rng(47);
  for (int trial = 0; trial < 20; ++trial) {
    const Instance in = make_instance(rng, trial);
    const PassRecord rec = forward(in.arch, in.theta, in.x);
    const Mat f = kfac::testing::fisher_oracle(in.arch, in.theta, in.x);
    const ParamVector v = kfac::testing::random_params(in.arch, rng, 1.0);
    const ParamVector u = kfac::testing::random_params(in.arch, rng, 1.0);
    const ParamVector g = kfac::testing::random_params(in.arch, rng, 1.0);
    const QuadScalars q = quad_scalars(in.arch, in.theta, rec, v, u, g, 0.3);
    const double scale = f.norm() * v.norm() * u.norm();
    CHECK(std::abs(q.vFv - v.dot(f * v)) < 1e-10 * scale);
    CHECK(std::abs(q.uFv - u.dot(f * v)) < 1e-10 * scale);
    CHECK(std::abs(q.uFu - u.dot(f * u)) < 1e-10 * scale);
    CHECK(q.grad_dot_v == doctest::Approx(g.dot(v)).epsilon(1e-12));
    CHECK(q.grad_dot_u == doctest::Approx(g.dot(u)).epsilon(1e-12));
    CHECK(q.vCv() == doctest::Approx(v.dot(f * v) + 0.3 * v.squaredNorm()).epsilon(1e-10));
    CHECK(q.uCv() == doctest::Approx(u.dot(f * v) + 0.3 * u.dot(v)).epsilon(1e-10));
  }
}

TEST_CASE("quad_model and reduction ratio") {
  Rng rng(53);
  const Instance in = make_instance(rng, 0);
  const PassRecord rec = forward(in.arch, in.theta, in.x);
  const Mat f = kfac::testing::fisher_oracle(in.arch, in.theta, in.x);
  const ParamVector g = kfac::testing::random_params(in.arch, rng, 1.0);
  const ParamVector d = kfac::testing::random_params(in.arch, rng, 1.0);
  const double m = quad_model(in.arch, in.theta, rec, g, d, 0.5, 2.0);
  CHECK(m == doctest::Approx(0.5 * d.dot(f * d) + 0.25 * d.squaredNorm() + g.dot(d) + 2.0)
                 .epsilon(1e-10));
  CHECK(quad_model(in.arch, in.theta, rec, g, ParamVector::Zero(d.size()), 0.5, 2.0) == 2.0);

  CHECK(*reduction_ratio(0.5, 1.0, 0.0) == doctest::Approx(0.5));
  CHECK(*reduction_ratio(1.5, 1.0, 0.0) == doctest::Approx(-0.5));
  CHECK_FALSE(reduction_ratio(0.5, 1.0, 1.0).has_value());
}

TEST_CASE("squared-error Fisher of a linear layer is Abar kron I") {
  const auto arch = Architecture::mlp({3, 2}, Activation::tanh, LossKind::squared_error);
  Rng rng(59);
  const ParamVector theta = kfac::testing::random_params(arch, rng);
  const Mat x = kfac::testing::random_mat(3, 6, rng);
  const PassRecord rec = forward(arch, theta, x);
  const Mat abar = rec.abar[0] * rec.abar[0].transpose() / 6.0;
  CHECK(rel_err(dense_fisher(arch, theta, rec),
                kfac::testing::kron_loops(abar, Mat::Identity(2, 2))) < 1e-12);
}

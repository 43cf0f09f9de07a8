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

#include "kfac/net.hpp"
#include "support.hpp"

using namespace kfac;
using kfac::testing::rel_err;

TEST_CASE("architecture layout") {
  const auto arch = Architecture::mlp({3, 4, 2}, Activation::tanh, LossKind::squared_error);
  CHECK(arch.num_layers() == 2);
  CHECK(arch.rows(0) == 4);
  CHECK(arch.cols(0) == 4);
  CHECK(arch.layer_offset(1) == 16);
  CHECK(arch.param_count() == 16 + 10);
  CHECK(arch.activations.back() == Activation::identity);

  Architecture bad = Architecture::mlp({3, 2}, Activation::tanh, LossKind::softmax_cross_entropy);
  bad.activations.back() = Activation::tanh;
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK_THROWS_AS(Architecture::mlp({3, 1}, Activation::tanh, LossKind::softmax_cross_entropy).validate(),
                  Error);
}

TEST_CASE("vec and devec are inverse") {
  Rng rng(3);
  const auto arch = Architecture::mlp({2, 3, 4}, Activation::tanh, LossKind::squared_error);
  const ParamVector theta = kfac::testing::random_params(arch, rng);
  CHECK((vec(arch, devec(arch, theta)) - theta).norm() == 0.0);
  CHECK(devec(arch, theta)[1](2, 3) == theta(arch.layer_offset(1) + 2 + 3 * 4));
}

TEST_CASE("forward matches the chain-rule reference") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const auto loss = trial % 2 ? LossKind::softmax_cross_entropy : LossKind::squared_error;
    const Architecture arch = kfac::testing::random_arch(rng, loss);
    const ParamVector theta = kfac::testing::random_params(arch, rng);
    const Mat x = kfac::testing::random_mat(arch.input_dim(), 5, rng);
    const PassRecord rec = forward(arch, theta, x);
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      Vec z;
      kfac::testing::case_jacobian(arch, theta, x.col(j), &z);
      CHECK(rel_err(rec.output.col(j), z) < 1e-14);
    }
    for (int l = 0; l < arch.num_layers(); ++l) {
      CHECK(rec.abar[l].row(arch.dims[l]).isOnes());
    }
  }
}

TEST_CASE("backward matches finite differences") {
  Rng rng(5);
  for (int trial = 0; trial < 12; ++trial) {
    const auto loss = trial % 2 ? LossKind::softmax_cross_entropy : LossKind::squared_error;
    const Architecture arch = kfac::testing::random_arch(rng, loss);
    const ParamVector theta = kfac::testing::random_params(arch, rng);
    const Mat x = kfac::testing::random_mat(arch.input_dim(), 7, rng);
    const Mat y = kfac::testing::random_targets(arch, 7, rng);
    PassRecord rec = forward(arch, theta, x);
    const ParamVector g = backward(arch, theta, rec, y);
    const ParamVector ref = kfac::testing::numeric_gradient(
        [&](const ParamVector& t) { return mean_loss(arch, forward(arch, t, x), y); }, theta);
    CHECK(rel_err(g, ref) < 1e-7);
    CHECK(rec.has_gradients());
    CHECK(rec.g.size() == static_cast<std::size_t>(arch.num_layers()));
  }
}

TEST_CASE("loss values") {
  const auto sq = Architecture::mlp({1, 2}, Activation::tanh, LossKind::squared_error);
  PassRecord rec;
  rec.output = Mat(2, 1);
  rec.output << 1.0, 3.0;
  Mat y(2, 1);
  y << 0.0, 1.0;
  CHECK(per_case_loss(sq, rec, y)(0) == doctest::Approx(2.5));

  const auto sm = Architecture::mlp({1, 2}, Activation::tanh, LossKind::softmax_cross_entropy);
  rec.s = {rec.output};
  y << 1.0, 0.0;
  const double expect = std::log(std::exp(1.0) + std::exp(3.0)) - 1.0;
  CHECK(per_case_loss(sm, rec, y)(0) == doctest::Approx(expect).epsilon(1e-14));

  // large logits stay finite
  rec.output << 1000.0, -1000.0;
  rec.s = {rec.output};
  CHECK(per_case_loss(sm, rec, y)(0) == doctest::Approx(0.0));
}

TEST_CASE("sparse initialization") {
  const auto arch = Architecture::mlp({30, 20, 4}, Activation::tanh, LossKind::squared_error);
  const ParamVector theta = init_sparse(arch, 9, 15, 0.5);
  for (int l = 0; l < arch.num_layers(); ++l) {
    const Mat w = layer_block(arch, theta, l);
    CHECK(w.col(w.cols() - 1).isZero(0.0));
    const int expect = std::min(15, arch.dims[l]);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      CHECK((w.row(r).leftCols(arch.dims[l]).array() != 0.0).count() == expect);
    }
  }
  CHECK((init_sparse(arch, 9, 15, 0.5) - theta).norm() == 0.0);
  CHECK((init_sparse(arch, 10, 15, 0.5) - theta).norm() > 0.0);
  CHECK_THROWS_AS(init_sparse(arch, 1, 0), Error);
}

TEST_CASE("sampled targets follow the predictive distribution") {
  const auto arch = Architecture::mlp({1, 3}, Activation::tanh, LossKind::softmax_cross_entropy);
  const int m = 40000;
  PassRecord rec;
  rec.output = Mat(3, m);
  for (int j = 0; j < m; ++j) rec.output.col(j) << 0.2, -0.5, 1.0;
  rec.s = {rec.output};
  Rng rng(17);
  const Mat y = sample_targets(arch, rec, rng);
  CHECK((y.colwise().sum().array() == 1.0).all());
  const Vec p = softmax_columns(rec.output.col(0));
  const Vec freq = y.rowwise().mean();
  for (int c = 0; c < 3; ++c) {
    const double se = std::sqrt(p(c) * (1 - p(c)) / m);
    CHECK(std::abs(freq(c) - p(c)) < 5 * se);
  }

  const auto sq = Architecture::mlp({1, 2}, Activation::tanh, LossKind::squared_error);
  rec.output = Mat::Constant(2, m, 0.7);
  const Mat yg = sample_targets(sq, rec, rng);
  const Vec mean = yg.rowwise().mean();
  CHECK(std::abs(mean(0) - 0.7) < 5.0 / std::sqrt(m));
  CHECK(std::abs((yg.array() - 0.7).square().mean() - 1.0) < 0.03);
}

TEST_CASE("error measures") {
  Mat out(2, 3), tgt(2, 3);
  out << 1, 0, 2, 0, 1, 1;
  tgt << 1, 1, 0, 0, 0, 1;
  CHECK(classification_error(out, tgt) == doctest::Approx(2.0 / 3.0));
  CHECK(reconstruction_error(out, tgt) == doctest::Approx((0.0 + 2.0 + 4.0) / 3.0));
}

TEST_CASE("transformed network computes the same function") {
  Rng rng(23);
  for (int trial = 0; trial < 8; ++trial) {
    const auto loss = trial % 2 ? LossKind::softmax_cross_entropy : LossKind::squared_error;
    const Architecture arch = kfac::testing::random_arch(rng, loss);
    const ParamVector theta = kfac::testing::random_params(arch, rng);
    const TransformSpec spec = TransformSpec::random(arch, rng);
    const ParamVector td = transform(arch, theta, spec, TransformDirection::to_dagger);
    CHECK(rel_err(transform(arch, td, spec, TransformDirection::from_dagger), theta) < 1e-12);

    const Mat x = kfac::testing::random_mat(arch.input_dim(), 6, rng);
    const Mat y = kfac::testing::random_targets(arch, 6, rng);
    PassRecord rd = transformed_forward(arch, td, spec, x);
    CHECK(rel_err(rd.output, forward(arch, theta, x).output) < 1e-12);

    const ParamVector gd = transformed_backprop(arch, td, spec, rd, loss_output_grad(arch, rd, y));
    const ParamVector ref = kfac::testing::numeric_gradient(
        [&](const ParamVector& t) {
          return mean_loss(arch, transformed_forward(arch, t, spec, x), y);
        },
        td);
    CHECK(rel_err(gd, ref) < 1e-7);
  }
}

TEST_CASE("transform rejects ill-conditioned matrices") {
  const auto arch = Architecture::mlp({1, 1}, Activation::tanh, LossKind::squared_error);
  Mat singular = Mat::Zero(2, 2);
  singular(0, 0) = 1.0;
  CHECK_THROWS_AS(TransformSpec(arch, {singular}, {Mat::Identity(1, 1)}), SingularError);
}

TEST_CASE("shape errors") {
  const auto arch = Architecture::mlp({2, 3}, Activation::tanh, LossKind::squared_error);
  CHECK_THROWS_AS(forward(arch, ParamVector::Zero(3), Mat::Zero(2, 1)), ShapeError);
  CHECK_THROWS_AS(forward(arch, ParamVector::Zero(arch.param_count()), Mat::Zero(3, 1)), ShapeError);
}

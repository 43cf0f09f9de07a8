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


// Independent reference computations shared by the test binaries.

#ifndef KFAC_TESTS_SUPPORT_HPP
#define KFAC_TESTS_SUPPORT_HPP

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "kfac/factor_stats.hpp"
#include "kfac/net.hpp"

namespace kfac::testing {

inline double rel_err(const Mat& a, const Mat& b) {
  const double denom = std::max(b.norm(), 1e-300);
  return (a - b).norm() / denom;
}

inline Mat random_mat(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  return Mat::NullaryExpr(r, c, [&] { return n(rng); });
}

inline Mat random_spd(Eigen::Index n, Rng& rng, double floor = 0.5) {
  const Mat x = random_mat(n, n + 2, rng);
  return x * x.transpose() / static_cast<double>(n + 2) + floor * Mat::Identity(n, n);
}

// Explicit Kronecker product, entry by entry.
inline Mat kron_loops(const Mat& a, const Mat& b) {
  Mat k(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      for (Eigen::Index p = 0; p < b.rows(); ++p)
        for (Eigen::Index q = 0; q < b.cols(); ++q)
          k(i * b.rows() + p, j * b.cols() + q) = a(i, j) * b(p, q);
  return k;
}

// 2-4 layers, widths 1-6; softmax nets get at least two classes.
inline Architecture random_arch(Rng& rng, LossKind loss) {
  std::uniform_int_distribution<int> layers(2, 4), width(1, 6), act(0, 1);
  const int L = layers(rng);
  Architecture a;
  a.loss = loss;
  for (int l = 0; l <= L; ++l) a.dims.push_back(width(rng));
  if (loss == LossKind::softmax_cross_entropy) a.dims.back() = std::max(a.dims.back(), 2);
  for (int l = 0; l < L; ++l) {
    a.activations.push_back(l == L - 1 ? (loss == LossKind::softmax_cross_entropy
                                              ? Activation::identity
                                              : (act(rng) ? Activation::tanh : Activation::identity))
                                       : (act(rng) ? Activation::tanh : Activation::logistic));
  }
  return a;
}

inline ParamVector random_params(const Architecture& arch, Rng& rng, double scale = 0.7) {
  return random_mat(arch.param_count(), 1, rng, scale);
}

inline Mat random_targets(const Architecture& arch, Eigen::Index m, Rng& rng) {
  if (arch.loss == LossKind::squared_error) return random_mat(arch.output_dim(), m, rng);
  std::uniform_int_distribution<int> cls(0, arch.output_dim() - 1);
  Mat y = Mat::Zero(arch.output_dim(), m);
  for (Eigen::Index j = 0; j < m; ++j) y(cls(rng), j) = 1.0;
  return y;
}

inline double act_value(Activation a, double x) {
  switch (a) {
    case Activation::tanh: return std::tanh(x);
    case Activation::logistic: return 1.0 / (1.0 + std::exp(-x));
    case Activation::identity: return x;
  }
  return x;
}

inline double act_slope(Activation a, double x) {
  switch (a) {
    case Activation::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::logistic: {
      const double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 - s);
    }
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

// Output z and Jacobian dz/dtheta for one case, by explicit chain-rule
// products (no use of the library's passes).
inline Mat case_jacobian(const Architecture& arch, const ParamVector& theta, const Vec& x,
                         Vec* z_out = nullptr) {
  const int L = arch.num_layers();
  std::vector<Vec> abar(L), s(L);
  Vec a = x;
  for (int l = 0; l < L; ++l) {
    abar[l].resize(a.size() + 1);
    abar[l] << a, 1.0;
    Mat w(arch.rows(l), arch.cols(l));
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        w(r, c) = theta(arch.layer_offset(l) + r + c * w.rows());
    s[l] = w * abar[l];
    a = s[l].unaryExpr([&](double v) { return act_value(arch.activations[l], v); });
  }
  if (z_out) *z_out = a;
  Mat jac = Mat::Zero(arch.output_dim(), arch.param_count());
  // dz/ds_l, walked from the top.
  Mat dz_ds = Mat::Zero(arch.output_dim(), arch.dims[L]);
  for (int r = 0; r < arch.dims[L]; ++r) dz_ds(r, r) = act_slope(arch.activations[L - 1], s[L - 1](r));
  for (int l = L - 1; l >= 0; --l) {
    for (int c = 0; c < arch.cols(l); ++c)
      for (int r = 0; r < arch.rows(l); ++r)
        jac.col(arch.layer_offset(l) + r + c * arch.rows(l)) = dz_ds.col(r) * abar[l](c);
    if (l > 0) {
      Mat w(arch.rows(l), arch.cols(l));
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        for (Eigen::Index r = 0; r < w.rows(); ++r)
          w(r, c) = theta(arch.layer_offset(l) + r + c * w.rows());
      Mat next = dz_ds * w.leftCols(arch.dims[l]);
      for (int c = 0; c < arch.dims[l]; ++c) next.col(c) *= act_slope(arch.activations[l - 1], s[l - 1](c));
      dz_ds = next;
    }
  }
  return jac;
}

// Output-space Fisher of the predictive distribution at z.
inline Mat output_fisher(const Architecture& arch, const Vec& z) {
  if (arch.loss == LossKind::squared_error) return Mat::Identity(z.size(), z.size());
  const Vec e = (z.array() - z.maxCoeff()).exp();
  const Vec p = e / e.sum();
  return Mat(p.asDiagonal()) - p * p.transpose();
}

// F = (1/m) sum_j J_j^T F_R J_j.
inline Mat fisher_oracle(const Architecture& arch, const ParamVector& theta, const Mat& inputs) {
  Mat f = Mat::Zero(arch.param_count(), arch.param_count());
  for (Eigen::Index j = 0; j < inputs.cols(); ++j) {
    Vec z;
    const Mat jac = case_jacobian(arch, theta, inputs.col(j), &z);
    f += jac.transpose() * output_fisher(arch, z) * jac;
  }
  return f / static_cast<double>(inputs.cols());
}

// Central-difference gradient of a scalar function.
template <class F>
ParamVector numeric_gradient(F&& fn, const ParamVector& theta, double h = 1e-6) {
  ParamVector g(theta.size());
  ParamVector t = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    t(i) = theta(i) + h;
    const double up = fn(t);
    t(i) = theta(i) - h;
    const double down = fn(t);
    t(i) = theta(i);
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

// Dense block-tridiagonal-inverse approximation built directly from the
// blocks of a dense matrix: Psi_i = F_{i,i+1} F_{i+1,i+1}^{-1},
// Sigma_i = F_{i,i} - Psi_i F_{i+1,i+1} Psi_i^T, result Xi^T Lambda Xi.
inline Mat tridiag_inverse_oracle(const Architecture& arch, const Mat& f) {
  const int L = arch.num_layers();
  const Eigen::Index n = arch.param_count();
  auto blk = [&](int i, int j) {
    return Mat(f.block(arch.layer_offset(i), arch.layer_offset(j), arch.layer_size(i),
                       arch.layer_size(j)));
  };
  Mat xi = Mat::Identity(n, n);
  Mat lambda = Mat::Zero(n, n);
  for (int i = 0; i < L; ++i) {
    Mat sigma = blk(i, i);
    if (i + 1 < L) {
      const Mat psi = blk(i, i + 1) * blk(i + 1, i + 1).inverse();
      sigma -= psi * blk(i + 1, i + 1) * psi.transpose();
      xi.block(arch.layer_offset(i), arch.layer_offset(i + 1), arch.layer_size(i),
               arch.layer_size(i + 1)) = -psi;
    }
    lambda.block(arch.layer_offset(i), arch.layer_offset(i), arch.layer_size(i),
                 arch.layer_size(i)) = sigma.inverse();
  }
  return xi.transpose() * lambda * xi;
}

inline Vec as_vec(const Mat& m) { return Eigen::Map<const Vec>(m.data(), m.size()); }

inline Mat sym_sqrt(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  return es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

// PSD C with spectrum of A^{-1/2} C A^{-1/2} inside [0, 0.9].
inline Mat relative_psd(const Mat& a, Rng& rng) {
  const Eigen::Index n = a.rows();
  Eigen::HouseholderQR<Mat> qr(random_mat(n, n, rng));
  const Mat q = qr.householderQ();
  std::uniform_real_distribution<double> u(0.0, 0.9);
  const Vec s = Vec::NullaryExpr(n, [&] { return u(rng); });
  const Mat r = sym_sqrt(a);
  return r * q * s.asDiagonal() * q.transpose() * r;
}

struct Tiny {
  Architecture arch;
  FactorSet factors;
};

inline Tiny random_factors(Rng& rng) {
  Tiny t;
  t.arch = kfac::testing::random_arch(rng, LossKind::softmax_cross_entropy);
  const ParamVector theta = kfac::testing::random_params(t.arch, rng);
  PassRecord rec = forward(t.arch, theta, random_mat(t.arch.input_dim(), 12, rng));
  backward(t.arch, theta, rec, sample_targets(t.arch, rec, rng));
  t.factors = batch_moments(rec, Approx::block_tridiag);
  return t;
}

// pi gamma and gamma / pi added independently of the library.
inline std::pair<Mat, Mat> damped(const Mat& a, const Mat& g, double gamma) {
  const double ta = a.trace() / a.rows(), tg = g.trace() / g.rows();
  const double pi = ta > 0 && tg > 0 ? std::sqrt(ta / tg) : 1.0;
  return {a + pi * gamma * Mat::Identity(a.rows(), a.rows()),
          g + gamma / pi * Mat::Identity(g.rows(), g.rows())};
}

// Dense F tilde from factors with damped diagonal blocks.
inline Mat dense_tilde(const Architecture& arch, const FactorSet& f, double gamma, bool tridiag) {
  const Eigen::Index n = arch.param_count();
  Mat out = Mat::Zero(n, n);
  for (int l = 0; l < arch.num_layers(); ++l) {
    const auto [a, g] = damped(f.a[l], f.g[l], gamma);
    out.block(arch.layer_offset(l), arch.layer_offset(l), arch.layer_size(l), arch.layer_size(l)) =
        kron_loops(a, g);
    if (tridiag && l + 1 < arch.num_layers()) {
      const Mat off = kron_loops(f.a_off[l], f.g_off[l]);
      out.block(arch.layer_offset(l), arch.layer_offset(l + 1), arch.layer_size(l),
                arch.layer_size(l + 1)) = off;
      out.block(arch.layer_offset(l + 1), arch.layer_offset(l), arch.layer_size(l + 1),
                arch.layer_size(l)) = off.transpose();
    }
  }
  return out;
}

}  // namespace kfac::testing

#endif

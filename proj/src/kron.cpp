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

#include "kfac/kron.hpp"

#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace kfac {

namespace {

std::string at_layer(int layer) {
  return layer >= 0 ? " (layer " + std::to_string(layer) + ")" : std::string();
}

Mat symmetrized(const Mat& m) { return 0.5 * (m + m.transpose()); }

Mat identity_like(const Mat& m) { return Mat::Identity(m.rows(), m.cols()); }

/// A^{-1/2} for symmetric positive definite A.
Mat inv_sqrt_spd(const Mat& a, int layer) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(symmetrized(a));
  if (eig.info() != Eigen::Success) {
    throw SingularError("eigendecomposition failed" + at_layer(layer), layer);
  }
  const Vec& ev = eig.eigenvalues();
  if (!(ev.minCoeff() > 0.0)) {
    throw SingularError("factor is not positive definite" + at_layer(layer), layer);
  }
  return eig.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() *
         eig.eigenvectors().transpose();
}

}  // namespace

Mat kron_apply(const Mat& a, const Mat& b, const Mat& v) {
  if (v.rows() != b.cols() || v.cols() != a.cols()) {
    throw ShapeError("kron_apply: dimension mismatch");
  }
  return b * v * a.transpose();
}

Vec kron_mv(const Mat& a, const Mat& b, const Vec& v) {
  if (v.size() != a.cols() * b.cols()) throw ShapeError("kron_mv: dimension mismatch");
  const Eigen::Map<const Mat> vm(v.data(), b.cols(), a.cols());
  const Mat u = b * vm * a.transpose();
  return Eigen::Map<const Vec>(u.data(), u.size());
}

Mat kron_dense(const Mat& a, const Mat& b) {
  Mat k(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return k;
}

PiValue compute_pi(const Mat& a, const Mat& g) {
  const double ta = a.trace();
  const double tg = g.trace();
  if (!(ta > 0.0) || !(tg > 0.0)) return {1.0, true};
  return {std::sqrt((ta / static_cast<double>(a.rows())) / (tg / static_cast<double>(g.rows()))),
          false};
}

DampedFactors damp_factors(const FactorSet& factors, double gamma) {
  if (gamma < 0.0) throw Error("damp_factors: gamma must be >= 0");
  DampedFactors d;
  d.gamma = gamma;
  for (int l = 0; l < factors.num_layers(); ++l) {
    const PiValue pi = compute_pi(factors.a[l], factors.g[l]);
    d.pi.push_back(pi);
    d.a.push_back(factors.a[l] + (pi.value * gamma) * identity_like(factors.a[l]));
    d.g.push_back(factors.g[l] + (gamma / pi.value) * identity_like(factors.g[l]));
  }
  return d;
}

Mat spd_inverse(const Mat& m, int layer) {
  const Mat sym = symmetrized(m);
  Eigen::LLT<Mat> llt(sym);
  if (llt.info() != Eigen::Success) {
    const double jitter = 1e-10 * std::abs(sym.trace()) / static_cast<double>(sym.rows());
    llt.compute(sym + jitter * identity_like(sym));
    if (llt.info() != Eigen::Success || !(jitter > 0.0)) {
      throw SingularError("damped factor is not positive definite" + at_layer(layer), layer);
    }
  }
  return llt.solve(identity_like(sym));
}

BlockDiagCache blockdiag_build(const DampedFactors& damped) {
  BlockDiagCache c;
  c.gamma = damped.gamma;
  for (std::size_t l = 0; l < damped.a.size(); ++l) {
    c.a_inv.push_back(spd_inverse(damped.a[l], static_cast<int>(l)));
    c.g_inv.push_back(spd_inverse(damped.g[l], static_cast<int>(l)));
  }
  return c;
}

BlockDiagCache blockdiag_build(const FactorSet& factors, double gamma) {
  return blockdiag_build(damp_factors(factors, gamma));
}

ParamVector blockdiag_apply(const Architecture& arch, const BlockDiagCache& cache,
                            const ParamVector& v) {
  if (v.size() != arch.param_count()) throw ShapeError("blockdiag_apply: length mismatch");
  if (static_cast<int>(cache.a_inv.size()) != arch.num_layers()) {
    throw ShapeError("blockdiag_apply: cache built for a different network");
  }
  ParamVector u(v.size());
  for (int l = 0; l < arch.num_layers(); ++l) {
    if (cache.a_inv[l].rows() != arch.cols(l) || cache.g_inv[l].rows() != arch.rows(l)) {
      throw ShapeError("blockdiag_apply: stale cache shape at layer " + std::to_string(l));
    }
    layer_block(arch, u, l) = cache.g_inv[l] * layer_block(arch, v, l) * cache.a_inv[l];
  }
  return u;
}

// --- Stein solver -------------------------------------------------------------

namespace {

Mat make_denominator(double xi, const Vec& s1, const Vec& s2, KronSign sign, int layer) {
  const double sgn = sign == KronSign::plus ? 1.0 : -1.0;
  Mat denom = (sgn * s2) * s1.transpose();
  denom.array() += xi;
  if (denom.cwiseAbs().minCoeff() < 1e-12) {
    throw SingularError("Kronecker-sum system is singular" + at_layer(layer), layer);
  }
  return denom;
}

}  // namespace

SteinSolver SteinSolver::general(const Mat& a, const Mat& b, const Mat& c, const Mat& d,
                                 KronSign sign, int layer) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || c.rows() != a.rows() ||
      c.cols() != a.cols() || d.rows() != b.rows() || d.cols() != b.cols()) {
    throw ShapeError("stein solver: A/C and B/D must be square and matching");
  }
  const Mat a_is = inv_sqrt_spd(a, layer);
  const Mat b_is = inv_sqrt_spd(b, layer);
  Eigen::SelfAdjointEigenSolver<Mat> e1(symmetrized(a_is * c * a_is));
  Eigen::SelfAdjointEigenSolver<Mat> e2(symmetrized(b_is * d * b_is));
  if (e1.info() != Eigen::Success || e2.info() != Eigen::Success) {
    throw SingularError("eigendecomposition failed" + at_layer(layer), layer);
  }
  SteinSolver s;
  s.k1_ = a_is * e1.eigenvectors();
  s.k2_ = b_is * e2.eigenvectors();
  s.s1_ = e1.eigenvalues();
  s.s2_ = e2.eigenvalues();
  s.denom_ = make_denominator(1.0, s.s1_, s.s2_, sign, layer);
  return s;
}

SteinSolver SteinSolver::scaled(double xi, const Mat& c, const Mat& d, KronSign sign,
                                int layer) {
  if (c.rows() != c.cols() || d.rows() != d.cols()) {
    throw ShapeError("stein solver: C and D must be square");
  }
  Eigen::SelfAdjointEigenSolver<Mat> e1(symmetrized(c));
  Eigen::SelfAdjointEigenSolver<Mat> e2(symmetrized(d));
  if (e1.info() != Eigen::Success || e2.info() != Eigen::Success) {
    throw SingularError("eigendecomposition failed" + at_layer(layer), layer);
  }
  SteinSolver s;
  s.k1_ = e1.eigenvectors();
  s.k2_ = e2.eigenvectors();
  s.s1_ = e1.eigenvalues();
  s.s2_ = e2.eigenvalues();
  s.denom_ = make_denominator(xi, s.s1_, s.s2_, sign, layer);
  return s;
}

Mat SteinSolver::solve(const Mat& v) const {
  if (v.rows() != k2_.rows() || v.cols() != k1_.rows()) {
    throw ShapeError("stein solve: right-hand side has the wrong shape");
  }
  const Mat inner = (k2_.transpose() * v * k1_).cwiseQuotient(denom_);
  return k2_ * inner * k1_.transpose();
}

Vec SteinSolver::solve(const Vec& v) const {
  if (v.size() != k1_.rows() * k2_.rows()) throw ShapeError("stein solve: length mismatch");
  const Mat u = solve(Mat(Eigen::Map<const Mat>(v.data(), k2_.rows(), k1_.rows())));
  return Eigen::Map<const Vec>(u.data(), u.size());
}

Vec stein_solve(const Mat& a, const Mat& b, const Mat& c, const Mat& d, KronSign sign,
                const Vec& v) {
  return SteinSolver::general(a, b, c, d, sign).solve(v);
}

Vec stein_solve_scaled(double xi, const Mat& c, const Mat& d, KronSign sign, const Vec& v) {
  return SteinSolver::scaled(xi, c, d, sign).solve(v);
}

// --- block tridiagonal ------------------------------------------------------------

TridiagCache tridiag_build(const FactorSet& factors, double gamma) {
  if (!factors.tridiagonal()) {
    throw Error("tridiag_build: factor set has no off-diagonal factors");
  }
  const int L = factors.num_layers();
  if (static_cast<int>(factors.a_off.size()) != L - 1 ||
      static_cast<int>(factors.g_off.size()) != L - 1) {
    throw ShapeError("tridiag_build: off-diagonal factor count mismatch");
  }
  const DampedFactors damped = damp_factors(factors, gamma);
  TridiagCache c;
  c.gamma = gamma;
  for (int l = 0; l + 1 < L; ++l) {
    const Mat a_next_inv = spd_inverse(damped.a[l + 1], l + 1);
    const Mat g_next_inv = spd_inverse(damped.g[l + 1], l + 1);
    c.psi_a.push_back(factors.a_off[l] * a_next_inv);
    c.psi_g.push_back(factors.g_off[l] * g_next_inv);
    // Psi A_{l+1} Psi^T = A_{l,l+1} A_{l+1}^{-1} A_{l,l+1}^T
    const Mat c_a = symmetrized(c.psi_a.back() * factors.a_off[l].transpose());
    const Mat d_g = symmetrized(c.psi_g.back() * factors.g_off[l].transpose());
    c.sigma.push_back(
        SteinSolver::general(damped.a[l], damped.g[l], c_a, d_g, KronSign::minus, l));
  }
  c.last_a_inv = spd_inverse(damped.a[L - 1], L - 1);
  c.last_g_inv = spd_inverse(damped.g[L - 1], L - 1);
  return c;
}

ParamVector tridiag_apply(const Architecture& arch, const TridiagCache& cache,
                          const ParamVector& v) {
  const int L = arch.num_layers();
  if (v.size() != arch.param_count()) throw ShapeError("tridiag_apply: length mismatch");
  if (static_cast<int>(cache.sigma.size()) != L - 1 || cache.last_a_inv.rows() != arch.cols(L - 1)) {
    throw ShapeError("tridiag_apply: cache built for a different network");
  }
  // u = Xi v: U_l = V_l - PsiG_l V_{l+1} PsiA_l^T, U_{L-1} = V_{L-1}
  ParamVector u(v.size());
  for (int l = 0; l < L; ++l) {
    if (l + 1 < L) {
      layer_block(arch, u, l) = layer_block(arch, v, l) -
                                cache.psi_g[l] * layer_block(arch, v, l + 1) *
                                    cache.psi_a[l].transpose();
    } else {
      layer_block(arch, u, l) = layer_block(arch, v, l);
    }
  }
  // w = Lambda u
  ParamVector w(v.size());
  for (int l = 0; l < L; ++l) {
    if (l + 1 < L) {
      layer_block(arch, w, l) = cache.sigma[l].solve(Mat(layer_block(arch, u, l)));
    } else {
      layer_block(arch, w, l) = cache.last_g_inv * layer_block(arch, u, l) * cache.last_a_inv;
    }
  }
  // out = Xi^T w: U_l = W_l - PsiG_{l-1}^T W_{l-1} PsiA_{l-1}, U_0 = W_0
  ParamVector out(v.size());
  for (int l = 0; l < L; ++l) {
    if (l > 0) {
      layer_block(arch, out, l) = layer_block(arch, w, l) -
                                  cache.psi_g[l - 1].transpose() * layer_block(arch, w, l - 1) *
                                      cache.psi_a[l - 1];
    } else {
      layer_block(arch, out, l) = layer_block(arch, w, l);
    }
  }
  return out;
}

}  // namespace kfac

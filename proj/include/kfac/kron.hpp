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

#ifndef KFAC_KRON_HPP
#define KFAC_KRON_HPP

#include <vector>

#include "kfac/factor_stats.hpp"
#include "kfac/net.hpp"

namespace kfac {

// Kronecker convention throughout: (A (x) B) vec(V) = vec(B V A^T), where
// V has rows(B) rows and rows(A) columns. A layer's gradient block V_l is
// d_{l+1} x (d_l + 1), so activation factors play the role of A and
// back-propagated gradient factors the role of B.

/// B V A^T.
Mat kron_apply(const Mat& a, const Mat& b, const Mat& v);

/// (A (x) B) v without forming the Kronecker product.
Vec kron_mv(const Mat& a, const Mat& b, const Vec& v);

/// Explicit Kronecker product, for tests and diagnostics.
Mat kron_dense(const Mat& a, const Mat& b);

struct PiValue {
  double value = 1.0;
  bool fallback = false;  // a trace was not positive; value forced to 1
};

/// Trace-norm balancing constant sqrt((tr(A)/dim A) / (tr(G)/dim G)).
PiValue compute_pi(const Mat& a, const Mat& g);

/// A_l + pi_l gamma I and G_l + (gamma / pi_l) I for every layer.
struct DampedFactors {
  std::vector<Mat> a, g;
  std::vector<PiValue> pi;
  double gamma = 0.0;
};

DampedFactors damp_factors(const FactorSet& factors, double gamma);

/// Inverse of a symmetric positive definite matrix by Cholesky. On failure
/// one retry is made with 1e-10 * tr(M)/dim * I added.
Mat spd_inverse(const Mat& m, int layer = -1);

/// Inverses of the damped diagonal-block factors.
struct BlockDiagCache {
  std::vector<Mat> a_inv, g_inv;
  double gamma = 0.0;
};

BlockDiagCache blockdiag_build(const FactorSet& factors, double gamma);
BlockDiagCache blockdiag_build(const DampedFactors& damped);

/// U_l = G_l^{-1} V_l A_l^{-1} for each layer block of v.
ParamVector blockdiag_apply(const Architecture& arch, const BlockDiagCache& cache,
                            const ParamVector& v);

enum class KronSign { plus, minus };

/// Reusable solver for (A (x) B +/- C (x) D) u = v with A, B positive
/// definite and C, D positive semi-definite, via
///   (K1 (x) K2)(I (x) I +/- S1 (x) S2)^{-1}(K1^T (x) K2^T),
/// where K1 = A^{-1/2} E1, K2 = B^{-1/2} E2 and E_i S_i E_i^T are the
/// symmetric eigendecompositions of A^{-1/2} C A^{-1/2} and B^{-1/2} D B^{-1/2}.
/// Once built, each solve costs a handful of small matrix products.
class SteinSolver {
 public:
  SteinSolver() = default;

  static SteinSolver general(const Mat& a, const Mat& b, const Mat& c, const Mat& d,
                             KronSign sign, int layer = -1);

  /// (xi I (x) I +/- C (x) D): C and D are decomposed directly.
  static SteinSolver scaled(double xi, const Mat& c, const Mat& d, KronSign sign,
                            int layer = -1);

  /// Solves for U given V (both rows(B) x rows(A)).
  Mat solve(const Mat& v) const;
  Vec solve(const Vec& v) const;

  Eigen::Index a_dim() const { return k1_.rows(); }
  Eigen::Index b_dim() const { return k2_.rows(); }
  const Vec& s1() const { return s1_; }
  const Vec& s2() const { return s2_; }

 private:
  Mat k1_, k2_;
  Vec s1_, s2_;
  Mat denom_;  // xi 11^T +/- s2 s1^T
};

Vec stein_solve(const Mat& a, const Mat& b, const Mat& c, const Mat& d, KronSign sign,
                const Vec& v);
Vec stein_solve_scaled(double xi, const Mat& c, const Mat& d, KronSign sign, const Vec& v);

/// Factorization of the approximate Fisher whose inverse is block
/// tridiagonal: Fhat^{-1} = Xi^T Lambda Xi with
///   Psi_{l,l+1} = PsiA_l (x) PsiG_l,  PsiA_l = A_{l,l+1} A_{l+1}^{-1},
///   PsiG_l = G_{l,l+1} G_{l+1}^{-1},
///   Sigma_l = A_l (x) G_l - (PsiA_l A_{l+1} PsiA_l^T) (x) (PsiG_l G_{l+1} PsiG_l^T),
///   Sigma_{L-1} = A_{L-1} (x) G_{L-1},
/// all diagonal factors damped, off-diagonal factors raw.
struct TridiagCache {
  std::vector<Mat> psi_a, psi_g;      // l = 0..L-2
  std::vector<SteinSolver> sigma;     // l = 0..L-2
  Mat last_a_inv, last_g_inv;         // Sigma_{L-1}^{-1} factors
  double gamma = 0.0;
};

TridiagCache tridiag_build(const FactorSet& factors, double gamma);

/// Multiplies v by Xi, then Lambda, then Xi^T.
ParamVector tridiag_apply(const Architecture& arch, const TridiagCache& cache,
                          const ParamVector& v);

}  // namespace kfac

#endif

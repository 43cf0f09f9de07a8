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


#ifndef KFAC_DIAGNOSTICS_HPP
#define KFAC_DIAGNOSTICS_HPP

#include <string>

#include "kfac/dense.hpp"
#include "kfac/factor_stats.hpp"

namespace kfac {

/// Forward pass whose g columns reproduce the model-distribution expectation
/// exactly: every case is repeated once per output unit and backpropagated
/// from a square-root factor of the output Fisher. batch_moments on the
/// result gives the exact (rather than sampled) Kronecker factors.
PassRecord exact_factor_record(const Architecture& arch, const ParamVector& theta,
                               const Mat& inputs);

FactorSet exact_factors(const Architecture& arch, const ParamVector& theta, const Mat& inputs,
                        Approx mode);

/// Dense F, its Kronecker approximations and their damped inverses.
struct FisherComparison {
  Mat fisher;         // exact F
  Mat tilde;          // F tilde, undamped
  Mat breve;          // damped block-diagonal approximation
  Mat hat;            // damped block-tridiagonal approximation
  Mat fisher_inv;     // (F + gamma^2 I)^{-1}
  Mat tilde_inv;      // inverse of F tilde with damped diagonal blocks
  Mat breve_inv;
  Mat hat_inv;

  double err_fisher_tilde = 0.0;     // |F - F tilde|_F
  double err_tilde_breve_inv = 0.0;  // |F tilde^{-1} - F breve^{-1}|_F
  double err_tilde_hat_inv = 0.0;    // |F tilde^{-1} - F hat^{-1}|_F
};

FisherComparison compare_fisher(const Architecture& arch, const ParamVector& theta,
                                const Mat& inputs, double gamma);

void write_csv_matrix(const Mat& m, const std::string& path);

/// Writes every matrix of compare_fisher as CSV into out_dir together with
/// absolute-difference matrices, summary.csv (Frobenius errors) and
/// per-block mean-absolute-value tables.
FisherComparison dump_fisher_diagnostics(const Architecture& arch, const ParamVector& theta,
                                         const Mat& inputs, double gamma,
                                         const std::string& out_dir);

}  // namespace kfac

#endif

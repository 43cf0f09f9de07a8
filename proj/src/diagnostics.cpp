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


#include "kfac/diagnostics.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>

#include <Eigen/LU>

#include "kfac/exact_fisher.hpp"

namespace kfac {

namespace {

Mat repeat_cols(const Mat& m, Eigen::Index times) {
  Mat out(m.rows(), m.cols() * times);
  for (Eigen::Index t = 0; t < times; ++t) out.middleCols(t * m.cols(), m.cols()) = m;
  return out;
}

}  // namespace

PassRecord exact_factor_record(const Architecture& arch, const ParamVector& theta,
                               const Mat& inputs) {
  const PassRecord base = forward(arch, theta, inputs);
  const Eigen::Index m = base.cases();
  const Eigen::Index k = base.output.rows();
  PassRecord big;
  for (const Mat& a : base.abar) big.abar.push_back(repeat_cols(a, k));
  for (const Mat& s : base.s) big.s.push_back(repeat_cols(s, k));
  big.output = repeat_cols(base.output, k);

  // F_R = sum_c r_c r_c^T per case.
  Mat d(k, m * k);
  if (arch.loss == LossKind::softmax_cross_entropy) {
    const Mat p = softmax_columns(base.output);
    for (Eigen::Index c = 0; c < k; ++c) {
      for (Eigen::Index j = 0; j < m; ++j) {
        Vec r = -p.col(j);
        r(c) += 1.0;
        d.col(c * m + j) = std::sqrt(p(c, j)) * r;
      }
    }
  } else {
    d.setZero();
    for (Eigen::Index c = 0; c < k; ++c) d.row(c).segment(c * m, m).setOnes();
  }
  backprop(arch, theta, big, d);
  const double scale = std::sqrt(static_cast<double>(k));
  for (Mat& g : big.g) g *= scale;
  return big;
}

FactorSet exact_factors(const Architecture& arch, const ParamVector& theta, const Mat& inputs,
                        Approx mode) {
  return batch_moments(exact_factor_record(arch, theta, inputs), mode);
}

FisherComparison compare_fisher(const Architecture& arch, const ParamVector& theta,
                                const Mat& inputs, double gamma) {
  if (arch.param_count() > kDenseFisherLimit) {
    throw Error("Fisher diagnostics limited to " + std::to_string(kDenseFisherLimit) +
                " parameters, network has " + std::to_string(arch.param_count()));
  }
  FisherComparison c;
  const PassRecord rec = forward(arch, theta, inputs);
  c.fisher = dense_fisher(arch, theta, rec);
  const PassRecord big = exact_factor_record(arch, theta, inputs);
  c.tilde = dense::kron_tilde(arch, big);

  const FactorSet factors = batch_moments(big, Approx::block_tridiag);
  const DampedFactors damped = damp_factors(factors, gamma);
  const Eigen::Index n = arch.param_count();
  c.breve = dense::block_diagonal(arch, damped);
  c.hat_inv = dense::tridiag_inverse(arch, tridiag_build(factors, gamma));
  c.hat_inv = 0.5 * (c.hat_inv + c.hat_inv.transpose()).eval();
  c.hat = c.hat_inv.inverse();

  const Mat tilde_damped = dense::damped_tilde(arch, c.tilde, damped);
  c.tilde_inv = tilde_damped.inverse();
  c.breve_inv = c.breve.inverse();
  c.fisher_inv = (c.fisher + gamma * gamma * Mat::Identity(n, n)).inverse();

  c.err_fisher_tilde = (c.fisher - c.tilde).norm();
  c.err_tilde_breve_inv = (c.tilde_inv - c.breve_inv).norm();
  c.err_tilde_hat_inv = (c.tilde_inv - c.hat_inv).norm();
  return c;
}

void write_csv_matrix(const Mat& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << std::setprecision(17);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m(r, c);
    out << '\n';
  }
}

FisherComparison dump_fisher_diagnostics(const Architecture& arch, const ParamVector& theta,
                                         const Mat& inputs, double gamma,
                                         const std::string& out_dir) {
  FisherComparison c = compare_fisher(arch, theta, inputs, gamma);
  std::filesystem::create_directories(out_dir);
  const auto path = [&](const std::string& name) {
    return (std::filesystem::path(out_dir) / name).string();
  };
  write_csv_matrix(c.fisher, path("F.csv"));
  write_csv_matrix(c.tilde, path("F_tilde.csv"));
  write_csv_matrix(c.breve, path("F_breve.csv"));
  write_csv_matrix(c.hat, path("F_hat.csv"));
  write_csv_matrix(c.fisher_inv, path("F_inv.csv"));
  write_csv_matrix(c.tilde_inv, path("F_tilde_inv.csv"));
  write_csv_matrix(c.breve_inv, path("F_breve_inv.csv"));
  write_csv_matrix(c.hat_inv, path("F_hat_inv.csv"));
  write_csv_matrix((c.fisher - c.tilde).cwiseAbs(), path("absdiff_F_F_tilde.csv"));
  write_csv_matrix((c.tilde_inv - c.breve_inv).cwiseAbs(), path("absdiff_F_tilde_inv_F_breve_inv.csv"));
  write_csv_matrix((c.tilde_inv - c.hat_inv).cwiseAbs(), path("absdiff_F_tilde_inv_F_hat_inv.csv"));
  write_csv_matrix(dense::block_mean_abs(arch, c.fisher), path("blocks_F.csv"));
  write_csv_matrix(dense::block_mean_abs(arch, c.tilde_inv), path("blocks_F_tilde_inv.csv"));
  write_csv_matrix(dense::block_mean_abs(arch, c.fisher_inv), path("blocks_F_inv.csv"));

  std::ofstream s(path("summary.csv"));
  if (!s) throw Error("cannot write " + path("summary.csv"));
  s << std::setprecision(17);
  s << "quantity,frobenius\n";
  s << "F - F_tilde," << c.err_fisher_tilde << '\n';
  s << "F_tilde_inv - F_breve_inv," << c.err_tilde_breve_inv << '\n';
  s << "F_tilde_inv - F_hat_inv," << c.err_tilde_hat_inv << '\n';
  s << "F," << c.fisher.norm() << '\n';
  s << "F_tilde_inv," << c.tilde_inv.norm() << '\n';
  return c;
}

}  // namespace kfac

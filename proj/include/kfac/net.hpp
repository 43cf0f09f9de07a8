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

#ifndef KFAC_NET_HPP
#define KFAC_NET_HPP

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace kfac {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

/// Flat parameter vector: [vec(W_1); vec(W_2); ...] with column-stacking vec.
using ParamVector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Raised when a matrix that must be invertible is not (numerically).
class SingularError : public Error {
 public:
  explicit SingularError(const std::string& what, int layer = -1)
      : Error(what), layer_(layer) {}
  int layer() const { return layer_; }

 private:
  int layer_;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

enum class Activation { tanh, logistic, identity };
enum class LossKind { squared_error, softmax_cross_entropy };

std::string_view to_string(Activation a);
std::string_view to_string(LossKind l);
Activation parse_activation(std::string_view s);
LossKind parse_loss(std::string_view s);

/// Layer sizes d_0..d_L, one activation per layer, and the loss.
///
/// Layer l (0-based) maps the homogeneous activity abar_l (size d_l + 1) to
/// s_l = W_l abar_l (size d_{l+1}). W_l has shape d_{l+1} x (d_l + 1) and its
/// last column is the bias. For softmax cross-entropy the last activation
/// must be the identity; the softmax is folded into the loss so that s_L are
/// the natural parameters of the predictive distribution.
struct Architecture {
  std::vector<int> dims;
  std::vector<Activation> activations;
  LossKind loss = LossKind::squared_error;

  /// Hidden layers use `hidden`, the output layer is linear.
  static Architecture mlp(std::vector<int> dims, Activation hidden, LossKind loss);

  void validate() const;
  int num_layers() const { return static_cast<int>(dims.size()) - 1; }
  int rows(int l) const { return dims[l + 1]; }
  int cols(int l) const { return dims[l] + 1; }
  Eigen::Index layer_size(int l) const {
    return static_cast<Eigen::Index>(rows(l)) * cols(l);
  }
  Eigen::Index layer_offset(int l) const;
  Eigen::Index param_count() const;
  int input_dim() const { return dims.front(); }
  int output_dim() const { return dims.back(); }
};

bool operator==(const Architecture& a, const Architecture& b);

// Views of one layer's block of a flat parameter vector as a matrix.
Eigen::Map<Mat> layer_block(const Architecture& arch, ParamVector& theta, int l);
Eigen::Map<const Mat> layer_block(const Architecture& arch, const ParamVector& theta,
                                  int l);

std::vector<Mat> devec(const Architecture& arch, const ParamVector& theta);
ParamVector vec(const Architecture& arch, const std::vector<Mat>& weights);

/// Sparse initialization: each unit gets exactly min(k_in, d_in) nonzero
/// incoming weights drawn from N(0, scale^2); biases are zero.
ParamVector init_sparse(const Architecture& arch, std::uint64_t seed, int k_in = 15,
                        double scale = 1.0);

/// Per-layer quantities from one pass over a batch. Columns are cases.
struct PassRecord {
  std::vector<Mat> abar;  // abar[l]: (d_l + 1) x m, input of layer l, last row = 1
  std::vector<Mat> s;     // s[l]: d_{l+1} x m
  std::vector<Mat> g;     // g[l] = D s_l per case, filled by backward
  Mat output;             // a_L

  Eigen::Index cases() const { return output.cols(); }
  bool has_gradients() const { return !g.empty(); }
};

double activate(Activation a, double x);
double activate_deriv(Activation a, double x, double fx);

PassRecord forward(const Architecture& arch, const ParamVector& theta, const Mat& inputs);

/// Backpropagates per-case output derivatives D z (z = a_L) through the
/// network, fills record.g and returns the batch-mean parameter gradient.
ParamVector backprop(const Architecture& arch, const ParamVector& theta,
                     PassRecord& record, const Mat& d_output);

/// D z of the loss for each case (a_L - y for squared error,
/// softmax(s_L) - y for softmax cross-entropy).
Mat loss_output_grad(const Architecture& arch, const PassRecord& record, const Mat& targets);

/// Mean-over-batch gradient of the loss; fills record.g.
ParamVector backward(const Architecture& arch, const ParamVector& theta, PassRecord& record,
                     const Mat& targets);

Vec per_case_loss(const Architecture& arch, const PassRecord& record, const Mat& targets);
double mean_loss(const Architecture& arch, const PassRecord& record, const Mat& targets);

Mat softmax_columns(const Mat& s);

/// Targets drawn from the network's own predictive distribution.
Mat sample_targets(const Architecture& arch, const PassRecord& record, Rng& rng);

/// One-hot encode 0-based class labels into a classes x m matrix.
Mat one_hot(const std::vector<int>& labels, int classes);

/// Fraction of cases whose argmax output differs from the argmax target.
double classification_error(const Mat& output, const Mat& targets);

/// Mean over cases of the squared reconstruction error ||a_L - y||^2.
double reconstruction_error(const Mat& output, const Mat& targets);

// --- Network transformations -------------------------------------------------

/// Invertible per-layer transforms of the form
///   abar'_l = Omega_l phibar(Phi_l s'_l),  abar'_0 = Omega_0 abar_0,
/// with Omega_L = I implied. omega[l] is (d_l + 1)^2 for l = 0..L-1 and
/// phi[l] is d_{l+1}^2 for l = 0..L-1.
class TransformSpec {
 public:
  TransformSpec(const Architecture& arch, std::vector<Mat> omega, std::vector<Mat> phi);

  static TransformSpec identity(const Architecture& arch);
  /// Random well-conditioned transforms: I + noise, rejected until the
  /// condition number is below max_cond.
  static TransformSpec random(const Architecture& arch, Rng& rng, double noise = 0.3,
                              double max_cond = 20.0);

  const std::vector<Mat>& omega() const { return omega_; }
  const std::vector<Mat>& phi() const { return phi_; }
  const std::vector<Mat>& omega_inv() const { return omega_inv_; }
  const std::vector<Mat>& phi_inv() const { return phi_inv_; }

 private:
  std::vector<Mat> omega_, phi_, omega_inv_, phi_inv_;
};

enum class TransformDirection { to_dagger, from_dagger };

/// to_dagger: W'_l = Phi_l^{-1} W_l Omega_l^{-1}; from_dagger is the inverse map.
ParamVector transform(const Architecture& arch, const ParamVector& theta,
                      const TransformSpec& spec, TransformDirection dir);

/// Forward pass of the transformed network with parameters theta_dagger.
/// The returned record holds the transformed abar', s' and output.
PassRecord transformed_forward(const Architecture& arch, const ParamVector& theta_dagger,
                               const TransformSpec& spec, const Mat& inputs);

/// Backward pass of the transformed network from per-case output
/// derivatives; fills record.g with g'_l and returns the mean gradient.
ParamVector transformed_backprop(const Architecture& arch, const ParamVector& theta_dagger,
                                 const TransformSpec& spec, PassRecord& record,
                                 const Mat& d_output);

}  // namespace kfac

#endif

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

#include "kfac/net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/LU>
#include <Eigen/SVD>

namespace kfac {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::logistic: return "logistic";
    case Activation::identity: return "identity";
  }
  return "?";
}

std::string_view to_string(LossKind l) {
  switch (l) {
    case LossKind::squared_error: return "squared_error";
    case LossKind::softmax_cross_entropy: return "softmax_cross_entropy";
  }
  return "?";
}

Activation parse_activation(std::string_view s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "logistic") return Activation::logistic;
  if (s == "identity" || s == "linear") return Activation::identity;
  throw Error("unknown activation: " + std::string(s));
}

LossKind parse_loss(std::string_view s) {
  if (s == "squared_error") return LossKind::squared_error;
  if (s == "softmax_cross_entropy") return LossKind::softmax_cross_entropy;
  throw Error("unknown loss: " + std::string(s));
}

Architecture Architecture::mlp(std::vector<int> dims, Activation hidden, LossKind loss) {
  Architecture arch;
  const auto layers = dims.size() < 2 ? 0 : dims.size() - 1;
  arch.dims = std::move(dims);
  arch.activations.assign(layers, hidden);
  if (layers > 0) arch.activations.back() = Activation::identity;
  arch.loss = loss;
  arch.validate();
  return arch;
}

void Architecture::validate() const {
  if (dims.size() < 2) throw ShapeError("architecture needs at least one layer");
  for (int d : dims) {
    if (d < 1) throw ShapeError("layer dimensions must be >= 1");
  }
  if (activations.size() != dims.size() - 1) {
    throw ShapeError("need exactly one activation per layer");
  }
  if (loss == LossKind::softmax_cross_entropy && activations.back() != Activation::identity) {
    throw ShapeError("softmax cross-entropy requires an identity output layer");
  }
  if (loss == LossKind::softmax_cross_entropy && dims.back() < 2) {
    throw ShapeError("softmax cross-entropy needs at least two classes");
  }
}

Eigen::Index Architecture::layer_offset(int l) const {
  Eigen::Index off = 0;
  for (int i = 0; i < l; ++i) off += layer_size(i);
  return off;
}

Eigen::Index Architecture::param_count() const { return layer_offset(num_layers()); }

bool operator==(const Architecture& a, const Architecture& b) {
  return a.dims == b.dims && a.activations == b.activations && a.loss == b.loss;
}

Eigen::Map<Mat> layer_block(const Architecture& arch, ParamVector& theta, int l) {
  return Eigen::Map<Mat>(theta.data() + arch.layer_offset(l), arch.rows(l), arch.cols(l));
}

Eigen::Map<const Mat> layer_block(const Architecture& arch, const ParamVector& theta,
                                  int l) {
  return Eigen::Map<const Mat>(theta.data() + arch.layer_offset(l), arch.rows(l),
                               arch.cols(l));
}

namespace {

void check_params(const Architecture& arch, const ParamVector& theta) {
  if (theta.size() != arch.param_count()) {
    throw ShapeError("parameter vector has length " + std::to_string(theta.size()) +
                     ", architecture needs " + std::to_string(arch.param_count()));
  }
}

Mat append_ones(const Mat& a) {
  Mat out(a.rows() + 1, a.cols());
  out.topRows(a.rows()) = a;
  out.row(a.rows()).setOnes();
  return out;
}

Mat apply_activation(Activation act, const Mat& s) {
  return s.unaryExpr([act](double x) { return activate(act, x); });
}

Mat activation_deriv(Activation act, const Mat& s, const Mat& a) {
  Mat d(s.rows(), s.cols());
  for (Eigen::Index j = 0; j < s.cols(); ++j)
    for (Eigen::Index i = 0; i < s.rows(); ++i)
      d(i, j) = activate_deriv(act, s(i, j), a(i, j));
  return d;
}

}  // namespace

std::vector<Mat> devec(const Architecture& arch, const ParamVector& theta) {
  check_params(arch, theta);
  std::vector<Mat> w;
  w.reserve(arch.num_layers());
  for (int l = 0; l < arch.num_layers(); ++l) w.emplace_back(layer_block(arch, theta, l));
  return w;
}

ParamVector vec(const Architecture& arch, const std::vector<Mat>& weights) {
  if (static_cast<int>(weights.size()) != arch.num_layers()) {
    throw ShapeError("wrong number of weight matrices");
  }
  ParamVector theta(arch.param_count());
  for (int l = 0; l < arch.num_layers(); ++l) {
    if (weights[l].rows() != arch.rows(l) || weights[l].cols() != arch.cols(l)) {
      throw ShapeError("weight matrix " + std::to_string(l) + " has the wrong shape");
    }
    layer_block(arch, theta, l) = weights[l];
  }
  return theta;
}

ParamVector init_sparse(const Architecture& arch, std::uint64_t seed, int k_in,
                        double scale) {
  arch.validate();
  if (k_in < 1) throw Error("sparse init: k_in must be >= 1");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ParamVector theta = ParamVector::Zero(arch.param_count());
  std::vector<int> idx;
  for (int l = 0; l < arch.num_layers(); ++l) {
    auto w = layer_block(arch, theta, l);
    const int fan_in = arch.dims[l];
    const int k = std::min(k_in, fan_in);
    idx.resize(fan_in);
    for (int r = 0; r < arch.rows(l); ++r) {
      std::iota(idx.begin(), idx.end(), 0);
      // partial Fisher-Yates: the first k entries become the chosen inputs
      for (int j = 0; j < k; ++j) {
        std::uniform_int_distribution<int> pick(j, fan_in - 1);
        std::swap(idx[j], idx[pick(rng)]);
      }
      for (int j = 0; j < k; ++j) {
        double v = 0.0;
        while (v == 0.0) v = normal(rng);
        w(r, idx[j]) = scale * v;
      }
    }
  }
  return theta;
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::tanh: return std::tanh(x);
    case Activation::logistic: return 1.0 / (1.0 + std::exp(-x));
    case Activation::identity: return x;
  }
  return x;
}

double activate_deriv(Activation a, double /*x*/, double fx) {
  switch (a) {
    case Activation::tanh: return 1.0 - fx * fx;
    case Activation::logistic: return fx * (1.0 - fx);
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

PassRecord forward(const Architecture& arch, const ParamVector& theta, const Mat& inputs) {
  check_params(arch, theta);
  if (inputs.rows() != arch.input_dim()) {
    throw ShapeError("input dimension " + std::to_string(inputs.rows()) +
                     " does not match d_0 = " + std::to_string(arch.input_dim()));
  }
  const int L = arch.num_layers();
  PassRecord rec;
  rec.abar.reserve(L);
  rec.s.reserve(L);
  Mat a = inputs;
  for (int l = 0; l < L; ++l) {
    rec.abar.push_back(append_ones(a));
    rec.s.push_back(layer_block(arch, theta, l) * rec.abar.back());
    a = apply_activation(arch.activations[l], rec.s.back());
  }
  rec.output = std::move(a);
  return rec;
}

ParamVector backprop(const Architecture& arch, const ParamVector& theta, PassRecord& record,
                     const Mat& d_output) {
  check_params(arch, theta);
  const int L = arch.num_layers();
  if (static_cast<int>(record.s.size()) != L) throw ShapeError("record does not match network");
  if (d_output.rows() != record.output.rows() || d_output.cols() != record.output.cols()) {
    throw ShapeError("output derivative shape does not match network output");
  }
  const double inv_m = 1.0 / static_cast<double>(record.cases());
  ParamVector grad(arch.param_count());
  record.g.assign(L, Mat());
  Mat da = d_output;
  for (int l = L - 1; l >= 0; --l) {
    const Mat a = l == L - 1 ? record.output : record.abar[l + 1].topRows(arch.dims[l + 1]);
    record.g[l] = da.cwiseProduct(activation_deriv(arch.activations[l], record.s[l], a));
    layer_block(arch, grad, l) = inv_m * record.g[l] * record.abar[l].transpose();
    if (l > 0) {
      da = (layer_block(arch, theta, l).transpose() * record.g[l]).topRows(arch.dims[l]);
    }
  }
  return grad;
}

Mat softmax_columns(const Mat& s) {
  Mat p(s.rows(), s.cols());
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    const double mx = s.col(j).maxCoeff();
    p.col(j) = (s.col(j).array() - mx).exp().matrix();
    p.col(j) /= p.col(j).sum();
  }
  return p;
}

Mat loss_output_grad(const Architecture& arch, const PassRecord& record, const Mat& targets) {
  if (targets.rows() != record.output.rows() || targets.cols() != record.output.cols()) {
    throw ShapeError("target shape does not match network output");
  }
  if (arch.loss == LossKind::softmax_cross_entropy) {
    return softmax_columns(record.output) - targets;
  }
  return record.output - targets;
}

ParamVector backward(const Architecture& arch, const ParamVector& theta, PassRecord& record,
                     const Mat& targets) {
  return backprop(arch, theta, record, loss_output_grad(arch, record, targets));
}

Vec per_case_loss(const Architecture& arch, const PassRecord& record, const Mat& targets) {
  if (targets.rows() != record.output.rows() || targets.cols() != record.output.cols()) {
    throw ShapeError("target shape does not match network output");
  }
  const Eigen::Index m = record.cases();
  Vec loss(m);
  if (arch.loss == LossKind::softmax_cross_entropy) {
    const Mat& s = record.output;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double mx = s.col(j).maxCoeff();
      const double lse = mx + std::log((s.col(j).array() - mx).exp().sum());
      loss(j) = targets.col(j).sum() * lse - targets.col(j).dot(s.col(j));
    }
  } else {
    loss = 0.5 * (record.output - targets).colwise().squaredNorm().transpose();
  }
  return loss;
}

double mean_loss(const Architecture& arch, const PassRecord& record, const Mat& targets) {
  return per_case_loss(arch, record, targets).mean();
}

Mat sample_targets(const Architecture& arch, const PassRecord& record, Rng& rng) {
  const Eigen::Index m = record.cases();
  const Eigen::Index k = record.output.rows();
  Mat y = Mat::Zero(k, m);
  if (arch.loss == LossKind::softmax_cross_entropy) {
    const Mat p = softmax_columns(record.output);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (Eigen::Index j = 0; j < m; ++j) {
      const double u = unif(rng);
      double acc = 0.0;
      Eigen::Index cls = k - 1;
      for (Eigen::Index c = 0; c < k; ++c) {
        acc += p(c, j);
        if (u < acc) {
          cls = c;
          break;
        }
      }
      y(cls, j) = 1.0;
    }
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = 0; i < k; ++i) y(i, j) = record.output(i, j) + normal(rng);
  }
  return y;
}

Mat one_hot(const std::vector<int>& labels, int classes) {
  Mat y = Mat::Zero(classes, static_cast<Eigen::Index>(labels.size()));
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] < 0 || labels[j] >= classes) throw ShapeError("class label out of range");
    y(labels[j], static_cast<Eigen::Index>(j)) = 1.0;
  }
  return y;
}

double classification_error(const Mat& output, const Mat& targets) {
  if (output.cols() == 0) return 0.0;
  Eigen::Index wrong = 0;
  for (Eigen::Index j = 0; j < output.cols(); ++j) {
    Eigen::Index po = 0, pt = 0;
    output.col(j).maxCoeff(&po);
    targets.col(j).maxCoeff(&pt);
    if (po != pt) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(output.cols());
}

double reconstruction_error(const Mat& output, const Mat& targets) {
  if (output.cols() == 0) return 0.0;
  return (output - targets).colwise().squaredNorm().mean();
}

// --- transforms ---------------------------------------------------------------

namespace {

Mat checked_inverse(const Mat& m, const char* what) {
  Eigen::JacobiSVD<Mat> svd(m);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  if (!(smin > 0.0) || smax / smin > 1e12) {
    throw SingularError(std::string("transform matrix ") + what + " is singular");
  }
  return m.inverse();
}

}  // namespace

TransformSpec::TransformSpec(const Architecture& arch, std::vector<Mat> omega,
                             std::vector<Mat> phi)
    : omega_(std::move(omega)), phi_(std::move(phi)) {
  const int L = arch.num_layers();
  if (static_cast<int>(omega_.size()) != L || static_cast<int>(phi_.size()) != L) {
    throw ShapeError("transform needs one Omega and one Phi per layer");
  }
  for (int l = 0; l < L; ++l) {
    if (omega_[l].rows() != arch.cols(l) || omega_[l].cols() != arch.cols(l)) {
      throw ShapeError("Omega_" + std::to_string(l) + " has the wrong size");
    }
    if (phi_[l].rows() != arch.rows(l) || phi_[l].cols() != arch.rows(l)) {
      throw ShapeError("Phi_" + std::to_string(l + 1) + " has the wrong size");
    }
    omega_inv_.push_back(checked_inverse(omega_[l], "Omega"));
    phi_inv_.push_back(checked_inverse(phi_[l], "Phi"));
  }
}

TransformSpec TransformSpec::identity(const Architecture& arch) {
  std::vector<Mat> om, ph;
  for (int l = 0; l < arch.num_layers(); ++l) {
    om.push_back(Mat::Identity(arch.cols(l), arch.cols(l)));
    ph.push_back(Mat::Identity(arch.rows(l), arch.rows(l)));
  }
  return TransformSpec(arch, std::move(om), std::move(ph));
}

TransformSpec TransformSpec::random(const Architecture& arch, Rng& rng, double noise,
                                    double max_cond) {
  std::normal_distribution<double> normal(0.0, noise);
  auto draw = [&](int n) {
    for (;;) {
      Mat m = Mat::Identity(n, n);
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) m(i, j) += normal(rng);
      Eigen::JacobiSVD<Mat> svd(m);
      const auto& sv = svd.singularValues();
      if (sv(n - 1) > 0.0 && sv(0) / sv(n - 1) < max_cond) return m;
    }
  };
  std::vector<Mat> om, ph;
  for (int l = 0; l < arch.num_layers(); ++l) {
    om.push_back(draw(arch.cols(l)));
    ph.push_back(draw(arch.rows(l)));
  }
  return TransformSpec(arch, std::move(om), std::move(ph));
}

ParamVector transform(const Architecture& arch, const ParamVector& theta,
                      const TransformSpec& spec, TransformDirection dir) {
  check_params(arch, theta);
  ParamVector out(theta.size());
  for (int l = 0; l < arch.num_layers(); ++l) {
    const auto w = layer_block(arch, theta, l);
    if (dir == TransformDirection::to_dagger) {
      layer_block(arch, out, l) = spec.phi_inv()[l] * w * spec.omega_inv()[l];
    } else {
      layer_block(arch, out, l) = spec.phi()[l] * w * spec.omega()[l];
    }
  }
  return out;
}

PassRecord transformed_forward(const Architecture& arch, const ParamVector& theta_dagger,
                               const TransformSpec& spec, const Mat& inputs) {
  check_params(arch, theta_dagger);
  if (inputs.rows() != arch.input_dim()) throw ShapeError("input dimension mismatch");
  const int L = arch.num_layers();
  PassRecord rec;
  Mat abar = spec.omega()[0] * append_ones(inputs);
  for (int l = 0; l < L; ++l) {
    rec.abar.push_back(abar);
    rec.s.push_back(layer_block(arch, theta_dagger, l) * abar);
    const Mat a = apply_activation(arch.activations[l], spec.phi()[l] * rec.s.back());
    if (l + 1 < L) {
      abar = spec.omega()[l + 1] * append_ones(a);
    } else {
      rec.output = a;
    }
  }
  return rec;
}

ParamVector transformed_backprop(const Architecture& arch, const ParamVector& theta_dagger,
                                 const TransformSpec& spec, PassRecord& record,
                                 const Mat& d_output) {
  check_params(arch, theta_dagger);
  const int L = arch.num_layers();
  const double inv_m = 1.0 / static_cast<double>(record.cases());
  ParamVector grad(arch.param_count());
  record.g.assign(L, Mat());
  Mat da = d_output;
  for (int l = L - 1; l >= 0; --l) {
    const Mat s = spec.phi()[l] * record.s[l];
    const Mat a = apply_activation(arch.activations[l], s);
    const Mat ds = da.cwiseProduct(activation_deriv(arch.activations[l], s, a));
    record.g[l] = spec.phi()[l].transpose() * ds;
    layer_block(arch, grad, l) = inv_m * record.g[l] * record.abar[l].transpose();
    if (l > 0) {
      const Mat dabar = layer_block(arch, theta_dagger, l).transpose() * record.g[l];
      da = (spec.omega()[l].transpose() * dabar).topRows(arch.dims[l]);
    }
  }
  return grad;
}

}  // namespace kfac

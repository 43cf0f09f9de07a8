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

#include "kfac/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace kfac {

void Dataset::validate() const {
  if (inputs.cols() != targets.cols()) throw ShapeError("dataset: inputs/targets case count differ");
  if (!inputs.allFinite() || !targets.allFinite()) throw Error("dataset: non-finite values");
  if (kind == TaskKind::autoencoder && targets.rows() != inputs.rows()) {
    throw ShapeError("dataset: autoencoder targets must match the input dimension");
  }
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& idx) const {
  Dataset d;
  d.kind = kind;
  d.inputs.resize(inputs.rows(), static_cast<Eigen::Index>(idx.size()));
  d.targets.resize(targets.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    d.inputs.col(static_cast<Eigen::Index>(j)) = inputs.col(idx[j]);
    d.targets.col(static_cast<Eigen::Index>(j)) = targets.col(idx[j]);
  }
  return d;
}

namespace {

struct Segment {
  double x0, y0, x1, y1;
};

// Seven-segment layout in the unit square (y grows downward).
constexpr std::array<Segment, 7> kSegments = {{
    {0.28, 0.15, 0.72, 0.15},  // a top
    {0.72, 0.15, 0.72, 0.50},  // b upper right
    {0.72, 0.50, 0.72, 0.85},  // c lower right
    {0.28, 0.85, 0.72, 0.85},  // d bottom
    {0.28, 0.50, 0.28, 0.85},  // e lower left
    {0.28, 0.15, 0.28, 0.50},  // f upper left
    {0.28, 0.50, 0.72, 0.50},  // g middle
}};

// Segment masks for digits 0-9, bit i = segment i above.
constexpr std::array<unsigned, 10> kDigitMasks = {
    0b0111111, 0b0000110, 0b1011011, 0b1001111, 0b1100110,
    0b1101101, 0b1111101, 0b0000111, 0b1111111, 0b1101111,
};

double segment_distance(double px, double py, const Segment& s) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = s.x0 + t * dx - px, ey = s.y0 + t * dy - py;
  return std::sqrt(ex * ex + ey * ey);
}

void render_digit(int digit, Rng& rng, double pixel_noise, Eigen::Ref<Vec> out) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, pixel_noise);
  const double angle = 0.15 * u(rng);
  const double sx = 1.0 + 0.12 * u(rng), sy = 1.0 + 0.12 * u(rng);
  const double shear = 0.18 * u(rng);
  const double tx = 0.08 * u(rng), ty = 0.08 * u(rng);
  const double width = 0.085 + 0.025 * u(rng);
  const double ca = std::cos(angle), sa = std::sin(angle);

  std::array<Segment, 7> segs{};
  int count = 0;
  for (int i = 0; i < 7; ++i) {
    if (!(kDigitMasks[digit] >> i & 1u)) continue;
    auto map = [&](double x, double y, double& ox, double& oy) {
      x = (x - 0.5 + 0.03 * u(rng)) * sx;
      y = (y - 0.5 + 0.03 * u(rng)) * sy;
      x += shear * y;
      ox = 0.5 + ca * x - sa * y + tx;
      oy = 0.5 + sa * x + ca * y + ty;
    };
    Segment s{};
    map(kSegments[i].x0, kSegments[i].y0, s.x0, s.y0);
    map(kSegments[i].x1, kSegments[i].y1, s.x1, s.y1);
    segs[count++] = s;
  }
  constexpr int kSide = 16;
  for (int r = 0; r < kSide; ++r) {
    for (int c = 0; c < kSide; ++c) {
      const double px = (c + 0.5) / kSide, py = (r + 0.5) / kSide;
      double dist = std::numeric_limits<double>::infinity();
      for (int i = 0; i < count; ++i) dist = std::min(dist, segment_distance(px, py, segs[i]));
      const double ink = std::clamp((width + 0.04 - dist) / 0.04, 0.0, 1.0);
      out(r * kSide + c) = std::clamp(ink + noise(rng), 0.0, 1.0);
    }
  }
}

}  // namespace

Dataset make_digits16(Eigen::Index cases, std::uint64_t seed, double pixel_noise) {
  Rng rng(seed);
  Dataset d;
  d.kind = TaskKind::classification;
  d.inputs.resize(256, cases);
  std::vector<int> labels(static_cast<std::size_t>(cases));
  for (Eigen::Index j = 0; j < cases; ++j) {
    const int digit = static_cast<int>(j % 10);
    labels[static_cast<std::size_t>(j)] = digit;
    render_digit(digit, rng, pixel_noise, d.inputs.col(j));
  }
  d.targets = one_hot(labels, 10);
  return d;
}

Dataset make_digits16_autoencoder(Eigen::Index cases, std::uint64_t seed, double pixel_noise) {
  Dataset d = make_digits16(cases, seed, pixel_noise);
  d.kind = TaskKind::autoencoder;
  d.targets = d.inputs;
  return d;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset file: " + path);
  long rows = 0, cols = 0, tcols = 0;
  if (!(in >> rows >> cols >> tcols) || rows < 1 || cols < 1 || tcols < 0) {
    throw Error("dataset file " + path + ": bad header (expected `rows cols targets_cols`)");
  }
  Dataset d;
  d.inputs.resize(cols, rows);
  Mat raw_targets(std::max<long>(tcols, 1), rows);
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      if (!(in >> d.inputs(c, r))) throw Error("dataset file " + path + ": truncated data");
    }
    for (long c = 0; c < tcols; ++c) {
      if (!(in >> raw_targets(c, r))) throw Error("dataset file " + path + ": truncated data");
    }
  }
  if (tcols == 0) {
    d.kind = TaskKind::autoencoder;
    d.targets = d.inputs;
  } else if (tcols == 1) {
    d.kind = TaskKind::classification;
    std::vector<int> labels(static_cast<std::size_t>(rows));
    int classes = 0;
    for (long r = 0; r < rows; ++r) {
      const double v = raw_targets(0, r);
      if (v < 0 || v != std::floor(v)) throw Error("dataset file " + path + ": bad class index");
      labels[static_cast<std::size_t>(r)] = static_cast<int>(v);
      classes = std::max(classes, static_cast<int>(v) + 1);
    }
    d.targets = one_hot(labels, std::max(classes, 2));
  } else {
    d.kind = TaskKind::regression;
    d.targets = raw_targets;
  }
  d.validate();
  return d;
}

void save_dataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write dataset file: " + path);
  const long tcols = data.kind == TaskKind::autoencoder    ? 0
                     : data.kind == TaskKind::classification ? 1
                                                             : data.targets.rows();
  out << data.size() << ' ' << data.inputs.rows() << ' ' << tcols << '\n';
  out << std::setprecision(17);
  for (Eigen::Index r = 0; r < data.size(); ++r) {
    for (Eigen::Index c = 0; c < data.inputs.rows(); ++c) {
      out << (c ? " " : "") << data.inputs(c, r);
    }
    if (tcols == 1) {
      Eigen::Index cls = 0;
      data.targets.col(r).maxCoeff(&cls);
      out << ' ' << cls;
    } else if (tcols > 1) {
      for (Eigen::Index c = 0; c < tcols; ++c) out << ' ' << data.targets(c, r);
    }
    out << '\n';
  }
}

}  // namespace kfac

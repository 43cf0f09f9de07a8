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

#ifndef KFAC_DATASET_HPP
#define KFAC_DATASET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "kfac/net.hpp"

namespace kfac {

enum class TaskKind { autoencoder, classification, regression };

/// Training set stored column-per-case: inputs is d_0 x N and targets is
/// d_L x N (one-hot columns for classification, a copy of the inputs for
/// autoencoders).
struct Dataset {
  Mat inputs;
  Mat targets;
  TaskKind kind = TaskKind::regression;

  Eigen::Index size() const { return inputs.cols(); }
  void validate() const;
  Dataset subset(const std::vector<Eigen::Index>& idx) const;
};

/// Deterministic 16x16 pseudo-digit images: ten seven-segment style glyphs
/// rendered under random affine jitter, stroke width variation and pixel
/// noise. Pixel values lie in [0, 1].
Dataset make_digits16(Eigen::Index cases, std::uint64_t seed, double pixel_noise = 0.1);

/// Same images with targets equal to the inputs.
Dataset make_digits16_autoencoder(Eigen::Index cases, std::uint64_t seed,
                                  double pixel_noise = 0.1);

/// Reads the text format
///   rows cols targets_cols
///   <rows lines of cols + targets_cols whitespace-separated doubles>
/// targets_cols = 0 makes an autoencoder set, 1 holds 0-based class indices,
/// anything larger is a regression target block.
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& data, const std::string& path);

}  // namespace kfac

#endif

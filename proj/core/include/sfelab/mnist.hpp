// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "sfelab/dataset.hpp"

namespace sfelab {

/// Parses one IDX image/label file pair into an ImageSet. Pixels are
/// normalized to [0,1]; shapes come out [N, H, W, 1]. Files may be raw or
/// gzip-compressed; a trailing ".gz" is tried when the plain name is
/// missing.
ImageSet load_idx_pair(const std::string& image_path, const std::string& label_path);

struct MnistData {
    ImageSet train;
    ImageSet test;
};

/// Loads the four canonical MNIST files from a directory.
MnistData load_mnist(const std::string& dir_path);

}  // namespace sfelab

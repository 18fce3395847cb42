#pragma once

#include <filesystem>
#include <optional>

#include "gossipgrad/data.hpp"

namespace gossipgrad {

// IDX reader for the MNIST distribution files. Pixels are scaled to [0, 1],
// labels become one-hot rows over 10 classes.
Matrix read_idx_images(const std::filesystem::path& path);
std::vector<std::size_t> read_idx_labels(const std::filesystem::path& path);

/// Loads train-images-idx3-ubyte / train-labels-idx1-ubyte from `dir`.
/// Returns nullopt when either file is missing; throws ConfigError on a
/// malformed file.
std::optional<Dataset> load_mnist(const std::filesystem::path& dir, std::size_t limit = 0);

}  // namespace gossipgrad

#include "gossipgrad/mnist.hpp"

#include <array>
#include <cstdint>
#include <fstream>
#include <fmt/format.h>

#include "gossipgrad/errors.hpp"

namespace gossipgrad {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw ConfigError(fmt::format("{}: truncated IDX header", path.string()));
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

std::ifstream open_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open {}", path.string()));
  return in;
}

std::vector<unsigned char> read_payload(std::istream& in, std::size_t bytes, const std::filesystem::path& path) {
  std::vector<unsigned char> data(bytes);
  if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes))) {
    throw ConfigError(fmt::format("{}: truncated IDX payload", path.string()));
  }
  return data;
}

}  // namespace

Matrix read_idx_images(const std::filesystem::path& path) {
  auto in = open_binary(path);
  const auto magic = read_be32(in, path);
  if (magic != kImageMagic) throw ConfigError(fmt::format("{}: bad image magic {:#010x}", path.string(), magic));
  const std::size_t count = read_be32(in, path);
  const std::size_t rows = read_be32(in, path);
  const std::size_t cols = read_be32(in, path);
  const auto pixels = read_payload(in, count * rows * cols, path);
  Matrix images(count, rows * cols);
  auto out = images.values();
  for (std::size_t i = 0; i < pixels.size(); ++i) out[i] = static_cast<double>(pixels[i]) / 255.0;
  return images;
}

std::vector<std::size_t> read_idx_labels(const std::filesystem::path& path) {
  auto in = open_binary(path);
  const auto magic = read_be32(in, path);
  if (magic != kLabelMagic) throw ConfigError(fmt::format("{}: bad label magic {:#010x}", path.string(), magic));
  const std::size_t count = read_be32(in, path);
  const auto raw = read_payload(in, count, path);
  return {raw.begin(), raw.end()};
}

std::optional<Dataset> load_mnist(const std::filesystem::path& dir, std::size_t limit) {
  const auto images_path = dir / "train-images-idx3-ubyte";
  const auto labels_path = dir / "train-labels-idx1-ubyte";
  if (!std::filesystem::exists(images_path) || !std::filesystem::exists(labels_path)) return std::nullopt;

  Matrix images = read_idx_images(images_path);
  const auto labels = read_idx_labels(labels_path);
  if (labels.size() != images.rows()) {
    throw ConfigError(fmt::format("MNIST image count {} != label count {}", images.rows(), labels.size()));
  }
  const std::size_t n = limit > 0 ? std::min(limit, labels.size()) : labels.size();
  Dataset ds;
  ds.n_classes = 10;
  ds.one_hot = true;
  ds.samples = Matrix(n, images.cols());
  ds.labels = Matrix(n, 10);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= 10) throw ConfigError(fmt::format("MNIST label {} out of range at index {}", labels[i], i));
    std::ranges::copy(images.row(i), ds.samples.row(i).begin());
    ds.labels(i, labels[i]) = 1.0;
  }
  return ds;
}

}  // namespace gossipgrad

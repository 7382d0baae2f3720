#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "arnn/tensor.hpp"

namespace arnn {

struct ExportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// "<split>_<sample>_<layer>"
std::string mask_file_stem(const std::string& split, std::size_t sample, std::size_t layer);

// m rows of n comma-separated values, 17 significant digits (exact round trip).
void write_mask_csv(const std::filesystem::path& path, const Tensor& mask);
Tensor read_mask_csv(const std::filesystem::path& path);

// Binary 8-bit PGM. Values are min-max scaled to [0, 255]; a constant map
// becomes 255 when positive and 0 otherwise.
struct GrayImage {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;
};
GrayImage to_gray(const Tensor& map);
void write_pgm(const std::filesystem::path& path, const Tensor& map);
GrayImage read_pgm(const std::filesystem::path& path);

}  // namespace arnn

#include "arnn/mask_export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace arnn {

namespace {

void require_plane(const Tensor& t, const char* who) {
  if (t.rank() != 2) throw ShapeError(std::string(who) + ": expected m x n, got " + to_string(t.shape()));
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = {}) {
  std::ofstream out(path, mode);
  if (!out) throw ExportError("cannot write " + path.string());
  return out;
}

}  // namespace

std::string mask_file_stem(const std::string& split, std::size_t sample, std::size_t layer) {
  return split + "_" + std::to_string(sample) + "_" + std::to_string(layer);
}

void write_mask_csv(const std::filesystem::path& path, const Tensor& mask) {
  require_plane(mask, "write_mask_csv");
  auto out = open_out(path);
  const auto v = mask.values();
  char buf[32];
  for (std::size_t i = 0; i < mask.dim(0); ++i) {
    for (std::size_t j = 0; j < mask.dim(1); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", v[i * mask.dim(1) + j]);
      if (j) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw ExportError("write failed for " + path.string());
}

Tensor read_mask_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ExportError("cannot read " + path.string());
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t n = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ExportError(path.string() + ": bad value '" + cell + "'");
      }
      ++n;
    }
    if (rows == 0) cols = n;
    if (n != cols) throw ExportError(path.string() + ": ragged rows");
    ++rows;
  }
  return Tensor(Shape{rows, cols}, std::move(values));
}

GrayImage to_gray(const Tensor& map) {
  require_plane(map, "to_gray");
  const auto v = map.values();
  GrayImage img{map.dim(0), map.dim(1), std::vector<std::uint8_t>(v.size(), 0)};
  if (v.empty()) return img;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double range = *hi - *lo;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double scaled = range > 0.0 ? (v[k] - *lo) / range : (*hi > 0.0 ? 1.0 : 0.0);
    img.pixels[k] = static_cast<std::uint8_t>(std::lround(255.0 * scaled));
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const Tensor& map) {
  const GrayImage img = to_gray(map);
  auto out = open_out(path, std::ios::binary);
  out << "P5\n" << img.cols << ' ' << img.rows << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw ExportError("write failed for " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ExportError("cannot read " + path.string());
  std::string magic;
  std::size_t maxval = 0;
  GrayImage img;
  in >> magic >> img.cols >> img.rows >> maxval;
  if (magic != "P5" || maxval != 255 || !in) throw ExportError(path.string() + ": not an 8-bit P5 image");
  in.get();
  img.pixels.resize(img.rows * img.cols);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw ExportError(path.string() + ": truncated pixel data");
  return img;
}

}  // namespace arnn

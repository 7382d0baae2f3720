#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "arnn/random.hpp"
#include "arnn/tensor.hpp"

namespace arnn {

enum class Variant { ref, dist, bg };
enum class Task { color_of_digit, digit_of_color };

std::string to_string(Variant v);  // "REF", "DIST", "BG"
std::string to_string(Task t);     // "color-of-digit", "digit-of-color"
Variant parse_variant(const std::string& s);  // case-insensitive
Task parse_task(const std::string& s);

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PlacementError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Rgb {
  float r, g, b;
};

inline constexpr std::size_t kColorCount = 5;
// green, yellow, white, red, blue
const std::array<Rgb, kColorCount>& palette();
const std::array<std::string, kColorCount>& color_names();

struct DatasetSpec {
  Variant variant = Variant::ref;
  std::size_t image_size = 100;
  std::size_t train = 30000;
  std::size_t val = 10000;
  std::size_t test = 10000;
  std::size_t min_digits = 5;
  std::size_t max_digits = 9;
  double min_scale = 0.5;
  double max_scale = 3.0;
  Task task = Task::color_of_digit;
  std::uint64_t seed = 0;
  double noise_sigma = 0.05;  // DIST only
  double max_overlap = 0.3;   // bounding-box intersection over the smaller box
  // Optional IDX digit files; the built-in font is used when empty.
  std::string idx_images;
  std::string idx_labels;

  std::size_t query_dim() const { return task == Task::color_of_digit ? 10 : kColorCount; }
  std::size_t num_classes() const { return task == Task::color_of_digit ? kColorCount : 10; }
};

// Binary glyph, row-major, 1 = ink.
struct Glyph {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> bits;
};
using GlyphSet = std::array<Glyph, 10>;

// 8 x 12 bitmap digits.
const GlyphSet& builtin_glyphs();
// First example of each digit from IDX image/label files, thresholded at
// 128 and cropped to its ink.
GlyphSet load_idx_glyphs(const std::filesystem::path& images, const std::filesystem::path& labels);

struct Sprite {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> mask;  // rows x cols
  Rgb color{};
};

// Nearest-neighbour scaling of a glyph placed at (top, left) in an image of
// the given size. Throws PlacementError when the sprite leaves the image.
Sprite render_digit(const GlyphSet& glyphs, int digit, double scale, Rgb color,
                    std::ptrdiff_t top, std::ptrdiff_t left, std::size_t image_size);

// Scale intervals [0.5,1.0) [1.0,1.5) [1.5,2.0) [2.0,2.5) [2.5,3.0].
inline constexpr std::size_t kScaleBuckets = 5;
std::size_t scale_bucket(double scale);

struct Sample {
  std::uint32_t index = 0;
  std::size_t image_size = 0;
  std::vector<float> image;         // 3 x S x S in [0, 1]
  std::vector<std::uint8_t> query;  // one-hot
  std::uint8_t label = 0;
  std::vector<std::uint8_t> roi;  // S x S, 0 or 1
  float target_scale = 0.0f;
};

Tensor image_tensor(const Sample& s);  // 3 x S x S
Tensor query_tensor(const Sample& s);  // query_dim

enum class Split { train = 0, val = 1, test = 2 };
std::string to_string(Split s);  // "train", "val", "test"
Split parse_split(const std::string& s);

struct Dataset {
  DatasetSpec spec;
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;

  const std::vector<Sample>& split(Split s) const;
};

struct PlacedDigit {
  int digit = 0;
  std::size_t color = 0;  // palette index
  double scale = 1.0;
  Sprite sprite;
};

// Digits, colours, scales and positions of one image before rendering.
struct Scene {
  std::vector<PlacedDigit> digits;
  std::size_t target = 0;
};

Scene layout_scene(const DatasetSpec& spec, const GlyphSet& glyphs, Split split,
                   std::uint32_t index);

// One sample; its randomness depends only on (seed, split, index).
Sample generate_sample(const DatasetSpec& spec, const GlyphSet& glyphs, Split split,
                       std::uint32_t index);
Dataset generate(const DatasetSpec& spec);

// Layout: dir/meta.json and dir/{train,val,test}/samples.bin. Each record is
// little-endian: u32 index, f32[3*S*S] image, u8[query_dim] query, u8 label,
// u8[ceil(S*S/8)] roi bits (LSB first), f32 target_scale.
std::size_t record_bytes(const DatasetSpec& spec);
nlohmann::json spec_to_json(const DatasetSpec& spec);
DatasetSpec spec_from_json(const nlohmann::json& j);
void save_dataset(const Dataset& data, const std::filesystem::path& dir,
                  const nlohmann::json& flags = nlohmann::json::object());
Dataset load_dataset(const std::filesystem::path& dir);
DatasetSpec load_dataset_spec(const std::filesystem::path& dir);

}  // namespace arnn

#include "arnn/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

namespace arnn {

static_assert(std::endian::native == std::endian::little,
              "sample files are written in host byte order");

namespace fs = std::filesystem;

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

constexpr const char* kFont[10][12] = {
    {"..####..", ".##..##.", "##....##", "##...###", "##..####", "##.##.##", "####..##",
     "###...##", "##....##", "##....##", ".##..##.", "..####.."},
    {"...##...", "..###...", ".####...", "...##...", "...##...", "...##...", "...##...",
     "...##...", "...##...", "...##...", "...##...", ".######."},
    {"..####..", ".##..##.", "##....##", "......##", ".....##.", "....##..", "...##...",
     "..##....", ".##.....", "##......", "##......", "########"},
    {".#####..", "##...##.", "......##", "......##", ".....##.", "..####..", ".....##.",
     "......##", "......##", "......##", "##...##.", ".#####.."},
    {".....##.", "....###.", "...####.", "..##.##.", ".##..##.", "##...##.", "########",
     ".....##.", ".....##.", ".....##.", ".....##.", ".....##."},
    {"#######.", "##......", "##......", "##......", "######..", ".....##.", "......##",
     "......##", "......##", "......##", "##...##.", ".#####.."},
    {"..####..", ".##.....", "##......", "##......", "######..", "###..##.", "##....##",
     "##....##", "##....##", "##....##", ".##..##.", "..####.."},
    {"########", "......##", "......##", ".....##.", ".....##.", "....##..", "....##..",
     "...##...", "...##...", "..##....", "..##....", "..##...."},
    {"..####..", ".##..##.", "##....##", "##....##", ".##..##.", "..####..", ".##..##.",
     "##....##", "##....##", "##....##", ".##..##.", "..####.."},
    {"..####..", ".##..##.", "##....##", "##....##", "##....##", ".##..###", "..######",
     "......##", "......##", ".....##.", "....##..", ".###...."},
};

std::uint32_t read_be32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DatasetError("IDX: truncated header");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

struct Box {
  std::size_t top, left, rows, cols;
};

double overlap_ratio(const Box& a, const Box& b) {
  const std::size_t r0 = std::max(a.top, b.top);
  const std::size_t r1 = std::min(a.top + a.rows, b.top + b.rows);
  const std::size_t c0 = std::max(a.left, b.left);
  const std::size_t c1 = std::min(a.left + a.cols, b.left + b.cols);
  if (r1 <= r0 || c1 <= c0) return 0.0;
  const double inter = double(r1 - r0) * double(c1 - c0);
  return inter / double(std::min(a.rows * a.cols, b.rows * b.cols));
}

std::size_t sprite_extent(std::size_t base, double scale) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(double(base) * scale)));
}

// Multi-octave value noise in [0, 1], bilinear with smoothstep weights.
std::vector<float> value_noise(std::size_t size, Rng& rng) {
  std::vector<double> acc(size * size, 0.0);
  double total = 0.0, amplitude = 1.0;
  for (std::size_t cell = std::max<std::size_t>(size / 4, 2); cell >= 2; cell /= 2) {
    const std::size_t lattice = size / cell + 2;
    std::vector<double> grid(lattice * lattice);
    for (auto& v : grid) v = rng.uniform();
    for (std::size_t y = 0; y < size; ++y) {
      const std::size_t gy = y / cell;
      double ty = double(y % cell) / double(cell);
      ty = ty * ty * (3 - 2 * ty);
      for (std::size_t x = 0; x < size; ++x) {
        const std::size_t gx = x / cell;
        double tx = double(x % cell) / double(cell);
        tx = tx * tx * (3 - 2 * tx);
        const double a = grid[gy * lattice + gx], b = grid[gy * lattice + gx + 1];
        const double c = grid[(gy + 1) * lattice + gx], d = grid[(gy + 1) * lattice + gx + 1];
        const double top = a + (b - a) * tx, bottom = c + (d - c) * tx;
        acc[y * size + x] += amplitude * (top + (bottom - top) * ty);
      }
    }
    total += amplitude;
    amplitude *= 0.5;
  }
  std::vector<float> out(acc.size());
  for (std::size_t k = 0; k < acc.size(); ++k) out[k] = static_cast<float>(acc[k] / total);
  return out;
}

void validate(const DatasetSpec& spec, const GlyphSet& glyphs) {
  if (spec.min_digits < 1 || spec.max_digits > 10 || spec.min_digits > spec.max_digits) {
    throw ContractError("dataset: digit count range must lie in [1, 10]");
  }
  if (!(spec.min_scale >= 0.5 && spec.max_scale <= 3.0 && spec.min_scale <= spec.max_scale)) {
    throw ContractError("dataset: scale range must lie in [0.5, 3.0]");
  }
  std::size_t base = 0;
  for (const auto& g : glyphs) base = std::max({base, g.rows, g.cols});
  if (spec.image_size < sprite_extent(base, spec.max_scale)) {
    throw ContractError("dataset: image size " + std::to_string(spec.image_size) +
                        " cannot hold a glyph at scale " + std::to_string(spec.max_scale));
  }
}

GlyphSet glyphs_for(const DatasetSpec& spec) {
  if (spec.idx_images.empty() != spec.idx_labels.empty()) {
    throw ContractError("dataset: IDX images and labels must be given together");
  }
  if (spec.idx_images.empty()) return builtin_glyphs();
  return load_idx_glyphs(spec.idx_images, spec.idx_labels);
}

template <typename T>
void put(std::vector<char>& buf, const T& v) {
  const auto* p = reinterpret_cast<const char*>(&v);
  buf.insert(buf.end(), p, p + sizeof(T));
}

template <typename T>
T take(const char*& p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  p += sizeof(T);
  return v;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::ref: return "REF";
    case Variant::dist: return "DIST";
    case Variant::bg: return "BG";
  }
  return "?";
}

std::string to_string(Task t) {
  return t == Task::color_of_digit ? "color-of-digit" : "digit-of-color";
}

Variant parse_variant(const std::string& s) {
  const auto v = lower(s);
  if (v == "ref") return Variant::ref;
  if (v == "dist") return Variant::dist;
  if (v == "bg") return Variant::bg;
  throw ContractError("unknown dataset variant '" + s + "' (ref, dist, bg)");
}

Task parse_task(const std::string& s) {
  const auto v = lower(s);
  if (v == "color-of-digit" || v == "color") return Task::color_of_digit;
  if (v == "digit-of-color" || v == "digit") return Task::digit_of_color;
  throw ContractError("unknown task '" + s + "' (color-of-digit, digit-of-color)");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ContractError("unknown split '" + s + "' (train, val, test)");
}

const std::array<Rgb, kColorCount>& palette() {
  static const std::array<Rgb, kColorCount> colors{
      Rgb{0, 1, 0}, Rgb{1, 1, 0}, Rgb{1, 1, 1}, Rgb{1, 0, 0}, Rgb{0, 0, 1}};
  return colors;
}

const std::array<std::string, kColorCount>& color_names() {
  static const std::array<std::string, kColorCount> names{"green", "yellow", "white", "red",
                                                          "blue"};
  return names;
}

const GlyphSet& builtin_glyphs() {
  static const GlyphSet glyphs = [] {
    GlyphSet set;
    for (int d = 0; d < 10; ++d) {
      Glyph g{12, 8, std::vector<std::uint8_t>(96, 0)};
      for (std::size_t r = 0; r < 12; ++r)
        for (std::size_t c = 0; c < 8; ++c) g.bits[r * 8 + c] = kFont[d][r][c] == '#';
      set[static_cast<std::size_t>(d)] = std::move(g);
    }
    return set;
  }();
  return glyphs;
}

GlyphSet load_idx_glyphs(const fs::path& images, const fs::path& labels) {
  std::ifstream img(images, std::ios::binary), lab(labels, std::ios::binary);
  if (!img) throw DatasetError("cannot open IDX images " + images.string());
  if (!lab) throw DatasetError("cannot open IDX labels " + labels.string());
  if (read_be32(img) != 2051) throw DatasetError("IDX images: bad magic");
  if (read_be32(lab) != 2049) throw DatasetError("IDX labels: bad magic");
  const std::uint32_t count = read_be32(img);
  const std::uint32_t rows = read_be32(img), cols = read_be32(img);
  if (read_be32(lab) != count) throw DatasetError("IDX: image and label counts differ");

  GlyphSet set;
  std::array<bool, 10> found{};
  std::vector<unsigned char> pixels(std::size_t(rows) * cols);
  for (std::uint32_t n = 0; n < count && !std::all_of(found.begin(), found.end(), [](bool b) {
                              return b;
                            });
       ++n) {
    img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    char label = 0;
    lab.read(&label, 1);
    if (!img || !lab) throw DatasetError("IDX: truncated data");
    const auto d = static_cast<std::size_t>(static_cast<unsigned char>(label));
    if (d > 9 || found[d]) continue;
    std::size_t r0 = rows, r1 = 0, c0 = cols, c1 = 0;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        if (pixels[r * cols + c] >= 128) {
          r0 = std::min(r0, r), r1 = std::max(r1, r + 1);
          c0 = std::min(c0, c), c1 = std::max(c1, c + 1);
        }
    if (r1 <= r0) continue;
    Glyph g{r1 - r0, c1 - c0, {}};
    for (std::size_t r = r0; r < r1; ++r)
      for (std::size_t c = c0; c < c1; ++c) g.bits.push_back(pixels[r * cols + c] >= 128);
    set[d] = std::move(g);
    found[d] = true;
  }
  for (std::size_t d = 0; d < 10; ++d) {
    if (!found[d]) throw DatasetError("IDX: no example of digit " + std::to_string(d));
  }
  return set;
}

Sprite render_digit(const GlyphSet& glyphs, int digit, double scale, Rgb color,
                    std::ptrdiff_t top, std::ptrdiff_t left, std::size_t image_size) {
  if (digit < 0 || digit > 9) throw ContractError("render_digit: digit must be 0..9");
  if (!(scale >= 0.5 && scale <= 3.0)) throw ContractError("render_digit: scale outside [0.5, 3]");
  const Glyph& g = glyphs[static_cast<std::size_t>(digit)];
  Sprite s;
  s.rows = sprite_extent(g.rows, scale);
  s.cols = sprite_extent(g.cols, scale);
  const auto size = static_cast<std::ptrdiff_t>(image_size);
  if (top < 0 || left < 0 || top + static_cast<std::ptrdiff_t>(s.rows) > size ||
      left + static_cast<std::ptrdiff_t>(s.cols) > size) {
    throw PlacementError("render_digit: sprite leaves the image");
  }
  s.top = static_cast<std::size_t>(top);
  s.left = static_cast<std::size_t>(left);
  s.color = color;
  s.mask.resize(s.rows * s.cols);
  for (std::size_t r = 0; r < s.rows; ++r) {
    const std::size_t sr = r * g.rows / s.rows;
    for (std::size_t c = 0; c < s.cols; ++c) {
      s.mask[r * s.cols + c] = g.bits[sr * g.cols + c * g.cols / s.cols];
    }
  }
  return s;
}

std::size_t scale_bucket(double scale) {
  if (!(scale >= 0.5 && scale <= 3.0)) {
    throw ContractError("scale_bucket: scale " + std::to_string(scale) + " outside [0.5, 3]");
  }
  return std::min<std::size_t>(kScaleBuckets - 1, static_cast<std::size_t>((scale - 0.5) / 0.5));
}

Tensor image_tensor(const Sample& s) {
  return Tensor(Shape{3, s.image_size, s.image_size}, std::vector<double>(s.image.begin(), s.image.end()));
}

Tensor query_tensor(const Sample& s) {
  return Tensor(Shape{s.query.size()}, std::vector<double>(s.query.begin(), s.query.end()));
}

const std::vector<Sample>& Dataset::split(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::val: return val;
    case Split::test: return test;
  }
  return test;
}

Scene layout_scene(const DatasetSpec& spec, const GlyphSet& glyphs, Split split,
                   std::uint32_t index) {
  validate(spec, glyphs);
  Rng rng(mix_seed({spec.seed, static_cast<std::uint64_t>(split), index}));
  const std::size_t S = spec.image_size;
  constexpr int kAttempts = 1000;
  constexpr int kPositionTries = 20;

  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    const std::size_t k = spec.min_digits + rng.below(spec.max_digits - spec.min_digits + 1);
    std::array<int, 10> order{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    for (std::size_t i = 0; i < k; ++i) std::swap(order[i], order[i + rng.below(10 - i)]);

    Scene scene;
    scene.target = rng.below(k);
    scene.digits.resize(k);
    const std::size_t target_color = rng.below(kColorCount);
    for (std::size_t i = 0; i < k; ++i) {
      auto& d = scene.digits[i];
      d.digit = order[i];
      if (i == scene.target) {
        d.color = target_color;
      } else if (spec.task == Task::digit_of_color) {
        // Every other digit avoids the target's colour.
        const std::size_t c = rng.below(kColorCount - 1);
        d.color = c >= target_color ? c + 1 : c;
      } else {
        d.color = rng.below(kColorCount);
      }
    }

    std::vector<Box> boxes;
    bool placed = true;
    for (std::size_t i = 0; i < k && placed; ++i) {
      auto& d = scene.digits[i];
      d.scale = rng.uniform(spec.min_scale, spec.max_scale);
      const Glyph& g = glyphs[static_cast<std::size_t>(d.digit)];
      const std::size_t rows = sprite_extent(g.rows, d.scale);
      const std::size_t cols = sprite_extent(g.cols, d.scale);
      placed = false;
      for (int t = 0; t < kPositionTries && !placed; ++t) {
        const Box b{rng.below(S - rows + 1), rng.below(S - cols + 1), rows, cols};
        placed = std::all_of(boxes.begin(), boxes.end(), [&](const Box& o) {
          return overlap_ratio(b, o) <= spec.max_overlap;
        });
        if (placed) boxes.push_back(b);
      }
    }
    if (!placed) continue;

    for (std::size_t i = 0; i < k; ++i) {
      auto& d = scene.digits[i];
      d.sprite = render_digit(glyphs, d.digit, d.scale, palette()[d.color],
                              static_cast<std::ptrdiff_t>(boxes[i].top),
                              static_cast<std::ptrdiff_t>(boxes[i].left), S);
    }
    const auto& goal = scene.digits[scene.target].sprite.mask;
    if (std::any_of(goal.begin(), goal.end(), [](std::uint8_t v) { return v != 0; })) {
      return scene;
    }
  }
  throw DatasetError("dataset: could not place " + std::to_string(spec.min_digits) + "-" +
                     std::to_string(spec.max_digits) + " digits in a " + std::to_string(S) +
                     "x" + std::to_string(S) + " image after " + std::to_string(kAttempts) +
                     " attempts");
}

Sample generate_sample(const DatasetSpec& spec, const GlyphSet& glyphs, Split split,
                       std::uint32_t index) {
  const Scene scene = layout_scene(spec, glyphs, split, index);
  // Separate stream for pixel noise so layout does not depend on the variant.
  Rng rng(mix_seed({spec.seed, static_cast<std::uint64_t>(split), index, 1}));
  const std::size_t S = spec.image_size;

  Sample s;
  s.index = index;
  s.image_size = S;
  s.image.assign(3 * S * S, 0.0f);
  if (spec.variant == Variant::bg) {
    const std::vector<float> tex = value_noise(S, rng);
    float tint[3];
    for (auto& t : tint) t = static_cast<float>(rng.uniform(0.2, 0.8));
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < S * S; ++p) s.image[c * S * S + p] = tex[p] * tint[c];
  }
  // Target last so it is never occluded.
  const std::size_t k = scene.digits.size();
  for (std::size_t n = 0; n <= k; ++n) {
    if (n == scene.target) continue;
    const Sprite& sp = scene.digits[n == k ? scene.target : n].sprite;
    const float rgb[3] = {sp.color.r, sp.color.g, sp.color.b};
    for (std::size_t r = 0; r < sp.rows; ++r)
      for (std::size_t c = 0; c < sp.cols; ++c)
        if (sp.mask[r * sp.cols + c]) {
          const std::size_t p = (sp.top + r) * S + sp.left + c;
          for (std::size_t ch = 0; ch < 3; ++ch) s.image[ch * S * S + p] = rgb[ch];
        }
  }
  if (spec.variant == Variant::dist) {
    for (auto& v : s.image) {
      v = static_cast<float>(std::clamp(double(v) + spec.noise_sigma * rng.normal(), 0.0, 1.0));
    }
  }

  const PlacedDigit& goal = scene.digits[scene.target];
  s.roi.assign(S * S, 0);
  for (std::size_t r = 0; r < goal.sprite.rows; ++r)
    for (std::size_t c = 0; c < goal.sprite.cols; ++c)
      if (goal.sprite.mask[r * goal.sprite.cols + c]) {
        s.roi[(goal.sprite.top + r) * S + goal.sprite.left + c] = 1;
      }

  s.query.assign(spec.query_dim(), 0);
  if (spec.task == Task::color_of_digit) {
    s.query[static_cast<std::size_t>(goal.digit)] = 1;
    s.label = static_cast<std::uint8_t>(goal.color);
  } else {
    s.query[goal.color] = 1;
    s.label = static_cast<std::uint8_t>(goal.digit);
  }
  s.target_scale = static_cast<float>(goal.scale);
  return s;
}

Dataset generate(const DatasetSpec& spec) {
  const GlyphSet glyphs = glyphs_for(spec);
  validate(spec, glyphs);
  Dataset d;
  d.spec = spec;
  const std::pair<Split, std::size_t> plan[] = {
      {Split::train, spec.train}, {Split::val, spec.val}, {Split::test, spec.test}};
  for (const auto& [split, count] : plan) {
    auto& out = split == Split::train ? d.train : split == Split::val ? d.val : d.test;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      out.push_back(generate_sample(spec, glyphs, split, static_cast<std::uint32_t>(i)));
    }
  }
  return d;
}

// ---------------------------------------------------------------------------

std::size_t record_bytes(const DatasetSpec& spec) {
  const std::size_t px = spec.image_size * spec.image_size;
  return 4 + 3 * px * 4 + spec.query_dim() + 1 + (px + 7) / 8 + 4;
}

nlohmann::json spec_to_json(const DatasetSpec& spec) {
  return nlohmann::json{
      {"variant", to_string(spec.variant)},
      {"image_size", spec.image_size},
      {"counts", {{"train", spec.train}, {"val", spec.val}, {"test", spec.test}}},
      {"digits", {spec.min_digits, spec.max_digits}},
      {"scale", {spec.min_scale, spec.max_scale}},
      {"task", to_string(spec.task)},
      {"seed", spec.seed},
      {"noise_sigma", spec.noise_sigma},
      {"max_overlap", spec.max_overlap},
      {"idx_images", spec.idx_images},
      {"idx_labels", spec.idx_labels},
      {"query_dim", spec.query_dim()},
      {"num_classes", spec.num_classes()},
      {"record_bytes", record_bytes(spec)},
  };
}

DatasetSpec spec_from_json(const nlohmann::json& j) {
  try {
    DatasetSpec s;
    s.variant = parse_variant(j.at("variant").get<std::string>());
    s.image_size = j.at("image_size").get<std::size_t>();
    s.train = j.at("counts").at("train").get<std::size_t>();
    s.val = j.at("counts").at("val").get<std::size_t>();
    s.test = j.at("counts").at("test").get<std::size_t>();
    s.min_digits = j.at("digits").at(0).get<std::size_t>();
    s.max_digits = j.at("digits").at(1).get<std::size_t>();
    s.min_scale = j.at("scale").at(0).get<double>();
    s.max_scale = j.at("scale").at(1).get<double>();
    s.task = parse_task(j.at("task").get<std::string>());
    s.seed = j.at("seed").get<std::uint64_t>();
    s.noise_sigma = j.at("noise_sigma").get<double>();
    s.max_overlap = j.at("max_overlap").get<double>();
    s.idx_images = j.value("idx_images", "");
    s.idx_labels = j.value("idx_labels", "");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(std::string("dataset manifest: ") + e.what());
  }
}

void save_dataset(const Dataset& data, const fs::path& dir, const nlohmann::json& flags) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DatasetError("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::json meta = spec_to_json(data.spec);
  meta["format"] = "arnn-samples-1";
  meta["flags"] = flags;
  {
    std::ofstream out(dir / "meta.json");
    if (!out) throw DatasetError("cannot write " + (dir / "meta.json").string());
    out << meta.dump(2) << "\n";
  }
  const std::size_t S = data.spec.image_size;
  for (Split split : {Split::train, Split::val, Split::test}) {
    const fs::path sub = dir / to_string(split);
    fs::create_directories(sub, ec);
    if (ec) throw DatasetError("cannot create " + sub.string() + ": " + ec.message());
    std::ofstream out(sub / "samples.bin", std::ios::binary);
    if (!out) throw DatasetError("cannot write " + (sub / "samples.bin").string());
    std::vector<char> buf;
    for (const Sample& s : data.split(split)) {
      buf.clear();
      put(buf, s.index);
      buf.insert(buf.end(), reinterpret_cast<const char*>(s.image.data()),
                 reinterpret_cast<const char*>(s.image.data() + s.image.size()));
      buf.insert(buf.end(), s.query.begin(), s.query.end());
      put(buf, s.label);
      std::vector<char> bits((S * S + 7) / 8, 0);
      for (std::size_t p = 0; p < S * S; ++p)
        if (s.roi[p]) bits[p / 8] = static_cast<char>(bits[p / 8] | (1 << (p % 8)));
      buf.insert(buf.end(), bits.begin(), bits.end());
      put(buf, s.target_scale);
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
    if (!out) throw DatasetError("write failed for " + (sub / "samples.bin").string());
  }
}

DatasetSpec load_dataset_spec(const fs::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw DatasetError("no dataset manifest at " + (dir / "meta.json").string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError("unreadable dataset manifest " + (dir / "meta.json").string() + ": " +
                       e.what());
  }
  return spec_from_json(meta);
}

Dataset load_dataset(const fs::path& dir) {
  Dataset d;
  d.spec = load_dataset_spec(dir);
  const std::size_t S = d.spec.image_size, px = S * S, rec = record_bytes(d.spec);
  for (Split split : {Split::train, Split::val, Split::test}) {
    const fs::path file = dir / to_string(split) / "samples.bin";
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DatasetError("missing split file " + file.string());
    const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
    const std::size_t expected = split == Split::train ? d.spec.train
                                 : split == Split::val ? d.spec.val
                                                       : d.spec.test;
    if (bytes.size() != expected * rec) {
      throw DatasetError(file.string() + ": expected " + std::to_string(expected) +
                         " records of " + std::to_string(rec) + " bytes, found " +
                         std::to_string(bytes.size()) + " bytes");
    }
    auto& out = split == Split::train ? d.train : split == Split::val ? d.val : d.test;
    out.resize(expected);
    const char* p = bytes.data();
    for (Sample& s : out) {
      s.image_size = S;
      s.index = take<std::uint32_t>(p);
      s.image.resize(3 * px);
      std::memcpy(s.image.data(), p, 3 * px * sizeof(float));
      p += 3 * px * sizeof(float);
      s.query.assign(p, p + d.spec.query_dim());
      p += d.spec.query_dim();
      s.label = take<std::uint8_t>(p);
      s.roi.resize(px);
      for (std::size_t k = 0; k < px; ++k) s.roi[k] = (p[k / 8] >> (k % 8)) & 1;
      p += (px + 7) / 8;
      s.target_scale = take<float>(p);
    }
  }
  return d;
}

}  // namespace arnn

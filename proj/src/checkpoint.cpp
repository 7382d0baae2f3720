#include "arnn/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <map>

namespace arnn {

namespace {

constexpr std::array<char, 5> kMagic{'A', 'R', 'N', 'N', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b.data(), b.size());
}

void put_f64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  os.write(b.data(), b.size());
}

std::uint64_t get_le(std::istream& is, int bytes, const std::string& what) {
  std::array<unsigned char, 8> b{};
  is.read(reinterpret_cast<char*>(b.data()), bytes);
  if (is.gcount() != bytes) throw CheckpointError("checkpoint: truncated while reading " + what);
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterList& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("checkpoint: cannot open " + path.string() + " for writing");
  os.write(kMagic.data(), kMagic.size());
  for (const auto& p : params) {
    put_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const auto& shape = p.tensor.shape();
    put_u32(os, static_cast<std::uint32_t>(shape.size()));
    for (auto e : shape) put_u32(os, static_cast<std::uint32_t>(e));
    for (double v : p.tensor.values()) put_f64(os, v);
  }
  if (!os) throw CheckpointError("checkpoint: write failed for " + path.string());
}

std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("checkpoint: cannot open " + path.string());
  std::array<char, 5> magic{};
  is.read(magic.data(), magic.size());
  if (is.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kMagic) {
    throw CheckpointError("checkpoint: " + path.string() + " has unknown magic");
  }
  std::vector<std::pair<std::string, Tensor>> out;
  while (is.peek() != std::char_traits<char>::eof()) {
    const auto name_len = get_le(is, 4, "name length");
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    if (static_cast<std::uint64_t>(is.gcount()) != name_len) {
      throw CheckpointError("checkpoint: truncated name");
    }
    const auto rank = get_le(is, 4, "rank");
    Shape shape;
    for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(get_le(is, 4, "extent"));
    std::vector<double> values(numel(shape));
    for (auto& v : values) v = std::bit_cast<double>(get_le(is, 8, name + " values"));
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

void load_checkpoint(const std::filesystem::path& path, const ParameterList& params) {
  auto stored = read_checkpoint(path);
  std::map<std::string, Tensor> by_name;
  for (auto& [name, t] : stored) by_name.emplace(name, t);
  if (by_name.size() != params.size()) {
    throw CheckpointError("checkpoint: " + path.string() + " holds " +
                          std::to_string(by_name.size()) + " parameters, model has " +
                          std::to_string(params.size()));
  }
  for (const auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw CheckpointError("checkpoint: missing parameter " + p.name);
    if (it->second.shape() != p.tensor.shape()) {
      throw CheckpointError("checkpoint: shape mismatch for " + p.name + ": stored " +
                            to_string(it->second.shape()) + ", model " +
                            to_string(p.tensor.shape()));
    }
    auto dst = Tensor(p.tensor).mutable_values();
    const auto src = it->second.values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace arnn

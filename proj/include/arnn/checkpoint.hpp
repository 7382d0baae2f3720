#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "arnn/parameter.hpp"

namespace arnn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary layout, little-endian throughout:
//   "ARNN1"
//   repeated until end of file:
//     u32 name_length, name bytes, u32 rank, u32 extent x rank, f64 x numel
void save_checkpoint(const std::filesystem::path& path, const ParameterList& params);
std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::filesystem::path& path);
// Copies stored values into `params`; names and shapes must match exactly.
void load_checkpoint(const std::filesystem::path& path, const ParameterList& params);

}  // namespace arnn

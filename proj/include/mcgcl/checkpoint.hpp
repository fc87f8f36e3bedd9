#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mcgcl/graph.hpp"
#include "mcgcl/link_prediction.hpp"
#include "mcgcl/tensor.hpp"

namespace mcgcl {

struct NamedMatrix {
  std::string name;
  Matrix value;
};

// Layout:
//   MCGCLCKPT 1
//   tensors <n>
//   <name> <rows> <cols>      (n lines, in payload order)
//   payload
//   <raw little-endian binary64 values, row-major, tensor after tensor>
void save_tensors(const std::filesystem::path& path, std::span<const NamedMatrix> tensors);

// Throws DataError for a missing file, a malformed header or a payload whose
// size disagrees with the header.
std::vector<NamedMatrix> load_tensors(const std::filesystem::path& path);

struct ModelCheckpoint {
  std::uint64_t seed = 0;
  LabelMode mode = LabelMode::multi;
  Matrix z_user;
  Matrix z_item;
  PredictionHead head;
};

void save_model(const std::filesystem::path& path, const ModelCheckpoint& model);
ModelCheckpoint load_model(const std::filesystem::path& path);

}  // namespace mcgcl

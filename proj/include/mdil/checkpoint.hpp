#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mdil/model.hpp"

namespace mdil {

// Binary layout, all integers little-endian:
//
//   "MDIL"                     4-byte magic
//   u32 version                currently 1
//   u32 length, bytes          UTF-8 text metadata block
//   u32 record count
//   records:
//     u32 length, bytes        tensor name
//     u8  dtype                1 = float32, 2 = float64, 3 = uint8
//     u32 rank, u64[rank]      extents
//     payload                  row-major values, little-endian
inline constexpr std::uint32_t kTensorFileVersion = 1;

enum class DType : std::uint8_t { f32 = 1, f64 = 2, u8 = 3 };

struct TensorRecord {
  std::string name;
  DType dtype = DType::f32;
  Shape shape;
  std::vector<std::uint8_t> payload;  // raw little-endian bytes

  static TensorRecord from_floats(std::string name, const Shape& shape, std::span<const float> v);
  static TensorRecord from_bytes(std::string name, const Shape& shape, std::span<const std::uint8_t> v);
  std::vector<float> floats() const;
};

struct TensorFile {
  std::string metadata;
  std::vector<TensorRecord> records;
};

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);
/// Throws DataError on bad magic, unsupported version or truncation.
TensorFile read_tensor_file(const std::filesystem::path& path);

/// Metadata block describing the model structure (config, domains with
/// label spaces, frozen set); enough to rebuild the model skeleton.
std::string model_metadata(const Model& model);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
/// Rebuilds the model and restores every parameter and running statistic
/// bitwise. Throws DataError on format problems or unknown tensor names.
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace mdil

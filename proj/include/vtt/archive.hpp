#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vtt/tensor.hpp"

namespace vtt {

struct StoredTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

/// Named float32 tensors in the "VTTC" little-endian container:
///   "VTTC", u32 version, u32 count,
///   per tensor { u16 name length, name bytes, u8 rank, u32 dims..., f32 data... },
///   u32 CRC-32 of every preceding byte.
class TensorArchive {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void add(std::string name, Shape shape, std::vector<float> data);
  const std::vector<StoredTensor>& entries() const { return entries_; }
  const StoredTensor* find(const std::string& name) const;
  /// Throws IoError naming the missing tensor.
  const StoredTensor& get(const std::string& name) const;

  std::vector<std::uint8_t> serialize() const;
  static TensorArchive deserialize(const std::vector<std::uint8_t>& bytes);
  void save(const std::string& path) const;
  static TensorArchive load(const std::string& path);

 private:
  std::vector<StoredTensor> entries_;
};

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n);

}  // namespace vtt

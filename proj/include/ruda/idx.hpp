#pragma once

// IDX container used by the MNIST/USPS-style digit files.
//
// Layout (big-endian): two zero bytes, a type byte (0x08 = unsigned byte), a
// rank byte, `rank` 32-bit dimension sizes, then the row-major payload.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace ruda::data {

inline constexpr std::uint32_t kIdxLabelMagic = 2049;  // 0x00000801, rank 1
inline constexpr std::uint32_t kIdxImageMagic = 2051;  // 0x00000803, rank 3

struct IdxTensor {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;

  std::size_t element_count() const;
};

/// Throws FormatError on a bad magic and LengthError when the payload does not
/// match the header.
IdxTensor parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_idx(const IdxTensor& tensor);

IdxTensor read_idx_file(const std::filesystem::path& path);
void write_idx_file(const std::filesystem::path& path, const IdxTensor& tensor);

}  // namespace ruda::data

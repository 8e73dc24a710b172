#include "ruda/idx.hpp"

#include "ruda/errors.hpp"

#include <fstream>
#include <iterator>
#include <string>

namespace ruda::data {

std::size_t IdxTensor::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::size_t expected_rank(std::uint32_t magic) {
  return magic == kIdxImageMagic ? 3 : 1;
}

}  // namespace

IdxTensor parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) {
    throw LengthError("IDX: need at least 4 bytes, got " + std::to_string(bytes.size()));
  }
  IdxTensor t;
  t.magic = read_be32(bytes, 0);
  if (t.magic != kIdxLabelMagic && t.magic != kIdxImageMagic) {
    throw FormatError("IDX: unsupported magic " + std::to_string(t.magic));
  }
  const std::size_t rank = bytes[3];
  if (rank != expected_rank(t.magic)) {
    throw FormatError("IDX: rank " + std::to_string(rank) + " inconsistent with magic");
  }
  const std::size_t header = 4 + 4 * rank;
  if (bytes.size() < header) throw LengthError("IDX: truncated header");
  for (std::size_t i = 0; i < rank; ++i) t.dims.push_back(read_be32(bytes, 4 + 4 * i));
  const std::size_t expected = t.element_count();
  const std::size_t actual = bytes.size() - header;
  if (actual != expected) {
    throw LengthError("IDX: payload has " + std::to_string(actual) + " bytes, header announces " +
                      std::to_string(expected));
  }
  t.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return t;
}

std::vector<std::uint8_t> serialize_idx(const IdxTensor& tensor) {
  if (tensor.magic != kIdxLabelMagic && tensor.magic != kIdxImageMagic) {
    throw FormatError("IDX: unsupported magic " + std::to_string(tensor.magic));
  }
  if (tensor.dims.size() != expected_rank(tensor.magic)) {
    throw FormatError("IDX: rank inconsistent with magic");
  }
  if (tensor.payload.size() != tensor.element_count()) {
    throw LengthError("IDX: payload size does not match dims");
  }
  std::vector<std::uint8_t> out;
  out.reserve(4 + 4 * tensor.dims.size() + tensor.payload.size());
  write_be32(out, tensor.magic);
  for (auto d : tensor.dims) write_be32(out, d);
  out.insert(out.end(), tensor.payload.begin(), tensor.payload.end());
  return out;
}

IdxTensor read_idx_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("IDX: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_idx(bytes);
}

void write_idx_file(const std::filesystem::path& path, const IdxTensor& tensor) {
  const auto bytes = serialize_idx(tensor);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("IDX: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace ruda::data

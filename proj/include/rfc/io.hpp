#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "rfc/tensor.hpp"

namespace rfc {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary 8-bit PGM (P5). Values are mapped [0, 1] <-> [0, 255] with rounding
/// and clamping; the tensor is [h, w].
void write_pgm(const std::filesystem::path& path, const Tensor& image);
Tensor read_pgm(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Lower-case hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

}  // namespace rfc

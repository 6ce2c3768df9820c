#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rfc/phantom.hpp"

namespace rfc {

inline constexpr int kDatasetFormatVersion = 1;

/// Writes images/NNNN.pgm plus manifest.json (seeds, RLE masks). Normal
/// datasets carry empty lesion masks and no kind.
void write_lesion_dataset(const std::filesystem::path& dir, std::span<const LesionCase> cases,
                          std::uint64_t seed);
void write_normal_dataset(const std::filesystem::path& dir, std::span<const Phantom> phantoms,
                          std::uint64_t seed);

/// Reads either kind back; images come back 8-bit quantised.
std::vector<LesionCase> read_dataset(const std::filesystem::path& dir);

}  // namespace rfc

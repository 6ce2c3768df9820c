#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rfc/grid.hpp"
#include "rfc/rng.hpp"
#include "rfc/tensor.hpp"

namespace rfc {

/// Smooth random field in roughly [-1, 1]: bilinear interpolation of a
/// uniform lattice with spacing `cell` pixels. Returns [h, w].
Tensor value_noise(std::size_t h, std::size_t w, double cell, Rng& rng);

struct PhantomParams {
  double cx = 0, cy = 0;    // ellipse centre (pixels)
  double ax = 0, ay = 0;    // semi-axes
  double angle = 0;         // radians
  std::uint64_t seed = 0;
};

/// Brain-like grayscale image, zero outside the (connected, elliptical)
/// foreground. `image` is [size, size] in [0, 1].
struct Phantom {
  Tensor image;
  Mask foreground;
  PhantomParams params;
};

Phantom gen_phantom(std::uint64_t seed, std::size_t size = 64);

enum class LesionKind { BrightBlob, DarkBlob, TexturePatch };

const char* lesion_kind_name(LesionKind kind);
LesionKind parse_lesion_kind(const std::string& name);

struct LesionCase {
  Tensor image;
  Mask gt_mask;
  Mask foreground;
  double severity = 0;
  LesionKind kind = LesionKind::BrightBlob;
  std::uint64_t seed = 0;
};

/// Grows a lesion by an image-space random walk (plus one dilation) inside the
/// foreground and blends the lesion model into it with weight `severity`.
LesionCase inject_lesion(const Phantom& phantom, std::uint64_t seed, LesionKind kind,
                         double severity);

/// Held-out evaluation set: phantom i uses a seed derived from `seed`, lesion
/// kinds are uniform and severities uniform in [min_severity, 1].
std::vector<LesionCase> gen_lesion_cases(std::size_t n, std::uint64_t seed, std::size_t size = 64,
                                         double min_severity = 0.3);

/// Paired 2-D point clouds for vector-mode sanity tasks. x1 is clean; x0 is
/// its corrupted partner. Both are [n, 2].
struct VectorTask {
  Tensor x0, x1;
};

struct VectorTaskConfig {
  double offset_x = 1.5, offset_y = -1.0;  // gaussian-offset: x0 - x1
  double jitter = 0.1;                     // two-moons-perturbed: E|x0 - x1|
};

VectorTask gen_vector_task(const std::string& name, std::size_t n, std::uint64_t seed,
                           const VectorTaskConfig& cfg = {});

}  // namespace rfc

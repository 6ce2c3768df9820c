#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "rfc/codec.hpp"
#include "rfc/grid.hpp"
#include "rfc/rng.hpp"

namespace rfc {

/// One corrupted region: mask cells on the latent grid, replacement values
/// (only entries under the mask are read) and severity alpha.
struct MaskRegion {
  Mask cells;
  Tensor replacement;  // [C, h, w]
  double alpha = 0.0;
};

enum class Strategy { StructuredNoise, TexturePatch };

struct CorruptionConfig {
  std::size_t min_regions = 1, max_regions = 4;
  std::size_t min_walk_steps = 0, max_walk_steps = 40;
  double min_alpha = 0.05, max_alpha = 1.0;
  double noise_weight = 0.5, texture_weight = 0.5;
  /// Upper bound (exclusive) on the union mask as a fraction of the
  /// foreground; walks stop early once it would be reached.
  double max_masked_fraction = 0.5;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Visited cells of a `steps`-move walk over 4-neighbours, starting at a
/// uniformly chosen foreground cell; each move is uniform over in-foreground
/// neighbours. Throws std::invalid_argument on an empty foreground.
Mask random_walk_mask(const Mask& foreground, std::size_t steps, Rng& rng);

/// sqrt(beta) * q_c + sqrt(1 - beta) * p with beta ~ U[0, 1] shared by all
/// channels, q_c ~ N(0, 1) per channel and p ~ N(0, I). `beta` overrides the draw.
Tensor structured_noise(std::size_t channels, std::size_t h, std::size_t w, Rng& rng,
                        std::optional<double> beta = std::nullopt);

/// y0 = sqrt(1 - a) y1 + sqrt(a) r inside each region, y1 bitwise elsewhere.
/// `y1` is [C, h, w]. Overlapping regions are rejected.
Tensor corrupt(const Tensor& y1, std::span<const MaskRegion> regions);

/// Standardised latent texture crops used as replacement fields.
class TextureBank {
 public:
  /// `count` procedural textures (value noise, stripes, checkerboards) of
  /// `image_size` pixels pushed through `codec`.
  static TextureBank procedural(const Codec& codec, std::size_t count, std::size_t image_size,
                                std::uint64_t seed);
  /// Adds every *.pgm in `dir` (resized by tiling/cropping to `image_size`).
  void add_pgm_dir(const Codec& codec, const std::filesystem::path& dir, std::size_t image_size);

  bool empty() const { return latents_.empty(); }
  std::size_t size() const { return latents_.size(); }
  const Tensor& latent(std::size_t i) const { return latents_[i]; }

  /// Replacement field [C, h, w] whose window rows [r0, r0+bh) x cols
  /// [c0, c0+bw) holds a random crop (tiled when the texture is smaller).
  Tensor sample(std::size_t h, std::size_t w, std::size_t r0, std::size_t c0, std::size_t bh,
                std::size_t bw, Rng& rng) const;

 private:
  void add_images(const Codec& codec, const std::vector<Tensor>& images);
  std::vector<Tensor> latents_;  // each [C, h, w]
};

/// Procedural grayscale texture [size, size] in [0, 1].
Tensor procedural_texture(std::size_t size, Rng& rng);

struct CorruptedPair {
  Tensor y0, y1;
  Mask mask;  // union of region cells
  std::vector<MaskRegion> regions;
};

/// Samples regions (made disjoint sequentially), strategies, replacements and
/// severities, then applies `corrupt`. The texture strategy falls back to
/// structured noise when `textures` is null or empty.
CorruptedPair make_pair(const Tensor& y1, const Mask& foreground, const CorruptionConfig& cfg,
                        const TextureBank* textures, Rng& rng);

/// Latent-grid foreground: f x f average pooling of the image foreground,
/// thresholded at 0.5.
Mask latent_foreground(const Mask& image_foreground, std::size_t factor);

}  // namespace rfc

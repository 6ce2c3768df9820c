#include "rfc/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>

#include "rfc/io.hpp"
#include "rfc/phantom.hpp"

namespace rfc {

namespace {

constexpr std::size_t kStartAttempts = 100;

std::size_t pick(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(randint(rng, 0, static_cast<std::int64_t>(n) - 1));
}

struct Box {
  std::size_t r0, c0, h, w;
};

Box bounding_box(const Mask& m) {
  std::size_t r0 = m.h, c0 = m.w, r1 = 0, c1 = 0;
  for (std::size_t r = 0; r < m.h; ++r) {
    for (std::size_t c = 0; c < m.w; ++c) {
      if (!m.at(r, c)) continue;
      r0 = std::min(r0, r);
      c0 = std::min(c0, c);
      r1 = std::max(r1, r);
      c1 = std::max(c1, c);
    }
  }
  return {r0, c0, r1 - r0 + 1, c1 - c0 + 1};
}

// Walk restricted to `allowed`, starting at `start`; stops once `max_cells`
// distinct cells have been visited.
Mask walk_from(const Mask& allowed, std::size_t start, std::size_t steps, Rng& rng,
               std::size_t max_cells = SIZE_MAX) {
  Mask m(allowed.h, allowed.w);
  std::size_t pos = start;
  m.cells[pos] = 1;
  std::size_t visited = 1;
  std::size_t nbrs[4];
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t r = pos / allowed.w, c = pos % allowed.w;
    std::size_t k = 0;
    if (r > 0 && allowed.cells[pos - allowed.w]) nbrs[k++] = pos - allowed.w;
    if (r + 1 < allowed.h && allowed.cells[pos + allowed.w]) nbrs[k++] = pos + allowed.w;
    if (c > 0 && allowed.cells[pos - 1]) nbrs[k++] = pos - 1;
    if (c + 1 < allowed.w && allowed.cells[pos + 1]) nbrs[k++] = pos + 1;
    if (k == 0) break;
    const std::size_t next = nbrs[pick(rng, k)];
    if (!m.cells[next]) {
      if (visited == max_cells) break;
      ++visited;
    }
    pos = next;
    m.cells[pos] = 1;
  }
  return m;
}

std::vector<std::size_t> true_cells(const Mask& m) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m.cells[i]) out.push_back(i);
  }
  return out;
}

}  // namespace

void CorruptionConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("corruption." + field + ": " + why);
  };
  if (min_regions > max_regions) fail("min_regions", "exceeds max_regions");
  if (min_walk_steps > max_walk_steps) fail("min_walk_steps", "exceeds max_walk_steps");
  if (!(min_alpha >= 0.0 && min_alpha <= max_alpha && max_alpha <= 1.0)) {
    fail("min_alpha", "need 0 <= min_alpha <= max_alpha <= 1");
  }
  if (noise_weight < 0 || texture_weight < 0) fail("noise_weight", "weights must be non-negative");
  if (std::abs(noise_weight + texture_weight - 1.0) > 1e-9) {
    fail("noise_weight", "strategy weights must sum to 1");
  }
  if (!(max_masked_fraction > 0.0 && max_masked_fraction <= 1.0)) {
    fail("max_masked_fraction", "must lie in (0, 1]");
  }
}

Mask random_walk_mask(const Mask& foreground, std::size_t steps, Rng& rng) {
  const auto inside = true_cells(foreground);
  if (inside.empty()) throw std::invalid_argument("random_walk_mask: empty foreground");
  return walk_from(foreground, inside[pick(rng, inside.size())], steps, rng);
}

Tensor structured_noise(std::size_t channels, std::size_t h, std::size_t w, Rng& rng,
                        std::optional<double> beta) {
  const double b = beta ? *beta : uniform(rng);
  if (!(b >= 0.0 && b <= 1.0)) throw std::invalid_argument("structured_noise: beta outside [0, 1]");
  const double sb = std::sqrt(b), sp = std::sqrt(1.0 - b);
  Tensor out({channels, h, w});
  const std::size_t plane = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    const double q = normal(rng);
    for (std::size_t i = 0; i < plane; ++i) {
      out[c * plane + i] = static_cast<float>(sb * q + sp * normal(rng));
    }
  }
  return out;
}

Tensor corrupt(const Tensor& y1, std::span<const MaskRegion> regions) {
  if (y1.rank() != 3) throw ShapeError("corrupt: expected [C, h, w], got " + shape_str(y1.shape()));
  const std::size_t c = y1.dim(0), h = y1.dim(1), w = y1.dim(2), plane = h * w;
  Mask claimed(h, w);
  Tensor y0 = y1;
  for (const auto& reg : regions) {
    if (reg.cells.h != h || reg.cells.w != w) {
      throw ShapeError("corrupt: region mask " + std::to_string(reg.cells.h) + "x" +
                       std::to_string(reg.cells.w) + " does not match latent " +
                       shape_str(y1.shape()));
    }
    require_same_shape("corrupt", reg.replacement.shape(), y1.shape());
    if (!(reg.alpha >= 0.0 && reg.alpha <= 1.0)) {
      throw std::invalid_argument("corrupt: alpha outside [0, 1]");
    }
    if (reg.cells.intersects(claimed)) throw std::invalid_argument("corrupt: overlapping regions");
    claimed = claimed | reg.cells;
    const float keep = static_cast<float>(std::sqrt(1.0 - reg.alpha));
    const float mix = static_cast<float>(std::sqrt(reg.alpha));
    for (std::size_t i = 0; i < plane; ++i) {
      if (!reg.cells.cells[i]) continue;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t k = ch * plane + i;
        y0[k] = keep * y1[k] + mix * reg.replacement[k];
      }
    }
  }
  return y0;
}

Tensor procedural_texture(std::size_t size, Rng& rng) {
  Tensor img({size, size});
  const auto kind = randint(rng, 0, 2);
  const double theta = uniform(rng, 0, std::numbers::pi);
  const double period = uniform(rng, 2.5, 12.0);
  const double lo = uniform(rng, 0.0, 0.4), hi = uniform(rng, 0.6, 1.0);
  const Tensor noise = value_noise(size, size, uniform(rng, 2.0, 10.0), rng);
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      const double x = static_cast<double>(c), y = static_cast<double>(r);
      const double u = std::cos(theta) * x + std::sin(theta) * y;
      const double v = -std::sin(theta) * x + std::cos(theta) * y;
      double s = 0;
      switch (kind) {
        case 0: s = 0.5 + 0.5 * noise[r * size + c]; break;
        case 1: s = 0.5 + 0.5 * std::sin(2 * std::numbers::pi * u / period); break;
        default:
          s = ((static_cast<long>(std::floor(u / period)) + static_cast<long>(std::floor(v / period))) & 1)
                  ? 1.0 : 0.0;
      }
      img[r * size + c] = static_cast<float>(lo + (hi - lo) * std::clamp(s, 0.0, 1.0));
    }
  }
  return img;
}

void TextureBank::add_images(const Codec& codec, const std::vector<Tensor>& images) {
  if (images.empty()) return;
  std::vector<Tensor> batch;
  for (const auto& im : images) batch.push_back(im.reshaped({1, im.dim(0), im.dim(1)}));
  const Tensor lat = codec.encode(Tensor::stack(batch));
  for (std::size_t i = 0; i < lat.dim(0); ++i) latents_.push_back(lat.slice(i));
}

TextureBank TextureBank::procedural(const Codec& codec, std::size_t count, std::size_t image_size,
                                    std::uint64_t seed) {
  Rng rng(derive_seed(seed, 11));
  std::vector<Tensor> images;
  for (std::size_t i = 0; i < count; ++i) images.push_back(procedural_texture(image_size, rng));
  TextureBank bank;
  bank.add_images(codec, images);
  return bank;
}

void TextureBank::add_pgm_dir(const Codec& codec, const std::filesystem::path& dir,
                              std::size_t image_size) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".pgm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Tensor> images;
  for (const auto& f : files) {
    const Tensor src = read_pgm(f);
    Tensor img({image_size, image_size});
    for (std::size_t r = 0; r < image_size; ++r) {
      for (std::size_t c = 0; c < image_size; ++c) {
        img[r * image_size + c] = src[(r % src.dim(0)) * src.dim(1) + c % src.dim(1)];
      }
    }
    images.push_back(std::move(img));
  }
  add_images(codec, images);
}

Tensor TextureBank::sample(std::size_t h, std::size_t w, std::size_t r0, std::size_t c0,
                           std::size_t bh, std::size_t bw, Rng& rng) const {
  if (latents_.empty()) throw std::logic_error("TextureBank::sample: bank is empty");
  const Tensor& tex = latents_[pick(rng, latents_.size())];
  const std::size_t c = tex.dim(0), th = tex.dim(1), tw = tex.dim(2);
  const std::size_t orow = pick(rng, th), ocol = pick(rng, tw);
  Tensor out({c, h, w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t r = 0; r < bh && r0 + r < h; ++r) {
      for (std::size_t col = 0; col < bw && c0 + col < w; ++col) {
        out[(ch * h + r0 + r) * w + c0 + col] =
            tex[(ch * th + (orow + r) % th) * tw + (ocol + col) % tw];
      }
    }
  }
  return out;
}

CorruptedPair make_pair(const Tensor& y1, const Mask& foreground, const CorruptionConfig& cfg,
                        const TextureBank* textures, Rng& rng) {
  cfg.validate();
  if (y1.rank() != 3) throw ShapeError("make_pair: expected [C, h, w], got " + shape_str(y1.shape()));
  const std::size_t ch = y1.dim(0), h = y1.dim(1), w = y1.dim(2);
  if (foreground.h != h || foreground.w != w) {
    throw ShapeError("make_pair: foreground does not match latent " + shape_str(y1.shape()));
  }
  const auto fg_cells = true_cells(foreground);
  if (fg_cells.empty()) throw std::invalid_argument("make_pair: empty foreground");

  CorruptedPair pair;
  pair.y1 = y1;
  pair.mask = Mask(h, w);
  const auto n_regions = static_cast<std::size_t>(randint(
      rng, static_cast<std::int64_t>(cfg.min_regions), static_cast<std::int64_t>(cfg.max_regions)));
  // Largest union size strictly below the configured fraction of the foreground.
  const double cap = cfg.max_masked_fraction * static_cast<double>(fg_cells.size());
  const auto max_union = static_cast<std::size_t>(std::max(0.0, std::ceil(cap) - 1.0));
  for (std::size_t k = 0; k < n_regions; ++k) {
    const std::size_t used = pair.mask.count();
    if (used >= max_union) break;
    const Mask free = foreground.minus(pair.mask);
    std::optional<std::size_t> start;
    for (std::size_t a = 0; a < kStartAttempts && !start; ++a) {
      const std::size_t cand = fg_cells[pick(rng, fg_cells.size())];
      if (free.cells[cand]) start = cand;
    }
    if (!start) break;
    const auto steps = static_cast<std::size_t>(randint(rng, static_cast<std::int64_t>(cfg.min_walk_steps),
                                                        static_cast<std::int64_t>(cfg.max_walk_steps)));
    MaskRegion reg;
    reg.cells = walk_from(free, *start, steps, rng, max_union - used);
    const bool texture = uniform(rng) < cfg.texture_weight && textures && !textures->empty();
    if (texture) {
      const Box b = bounding_box(reg.cells);
      reg.replacement = textures->sample(h, w, b.r0, b.c0, b.h, b.w, rng);
    } else {
      reg.replacement = structured_noise(ch, h, w, rng);
    }
    reg.alpha = cfg.min_alpha == cfg.max_alpha ? cfg.min_alpha
                                               : uniform(rng, cfg.min_alpha, cfg.max_alpha);
    pair.mask = pair.mask | reg.cells;
    pair.regions.push_back(std::move(reg));
  }
  pair.y0 = corrupt(y1, pair.regions);
  return pair;
}

Mask latent_foreground(const Mask& image_foreground, std::size_t factor) {
  if (factor == 0 || image_foreground.h % factor || image_foreground.w % factor) {
    throw std::invalid_argument("latent_foreground: dims not divisible by " + std::to_string(factor));
  }
  const std::size_t h = image_foreground.h / factor, w = image_foreground.w / factor;
  Mask out(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      std::size_t n = 0;
      for (std::size_t i = 0; i < factor; ++i) {
        for (std::size_t j = 0; j < factor; ++j) n += image_foreground.at(r * factor + i, c * factor + j);
      }
      out.set(r, c, 2 * n > factor * factor);
    }
  }
  return out;
}

}  // namespace rfc

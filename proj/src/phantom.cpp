#include "rfc/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rfc {

namespace {

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

// Normalised elliptical radius of pixel centre (r, c).
struct Ellipse {
  double cx, cy, ax, ay, angle;

  double radius(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double u = std::cos(angle) * dx + std::sin(angle) * dy;
    const double v = -std::sin(angle) * dx + std::cos(angle) * dy;
    return std::hypot(u / ax, v / ay);
  }
};

Mask random_walk_pixels(const Mask& fg, std::size_t steps, Rng& rng) {
  std::vector<std::size_t> inside;
  for (std::size_t i = 0; i < fg.size(); ++i) {
    if (fg.cells[i]) inside.push_back(i);
  }
  if (inside.empty()) throw std::invalid_argument("inject_lesion: empty foreground");
  std::size_t pos = inside[static_cast<std::size_t>(randint(rng, 0, static_cast<std::int64_t>(inside.size()) - 1))];
  Mask m(fg.h, fg.w);
  m.cells[pos] = 1;
  std::vector<std::size_t> nbrs;
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t r = pos / fg.w, c = pos % fg.w;
    nbrs.clear();
    if (r > 0 && fg.cells[pos - fg.w]) nbrs.push_back(pos - fg.w);
    if (r + 1 < fg.h && fg.cells[pos + fg.w]) nbrs.push_back(pos + fg.w);
    if (c > 0 && fg.cells[pos - 1]) nbrs.push_back(pos - 1);
    if (c + 1 < fg.w && fg.cells[pos + 1]) nbrs.push_back(pos + 1);
    if (nbrs.empty()) break;
    pos = nbrs[static_cast<std::size_t>(randint(rng, 0, static_cast<std::int64_t>(nbrs.size()) - 1))];
    m.cells[pos] = 1;
  }
  return m;
}

}  // namespace

Tensor value_noise(std::size_t h, std::size_t w, double cell, Rng& rng) {
  const auto gh = static_cast<std::size_t>(std::ceil(static_cast<double>(h) / cell)) + 2;
  const auto gw = static_cast<std::size_t>(std::ceil(static_cast<double>(w) / cell)) + 2;
  std::vector<double> lattice(gh * gw);
  for (auto& v : lattice) v = uniform(rng, -1.0, 1.0);
  const double ox = uniform(rng), oy = uniform(rng);
  Tensor out({h, w});
  for (std::size_t r = 0; r < h; ++r) {
    const double fy = static_cast<double>(r) / cell + oy;
    const auto y0 = static_cast<std::size_t>(fy);
    const double ty = smoothstep(0, 1, fy - static_cast<double>(y0));
    for (std::size_t c = 0; c < w; ++c) {
      const double fx = static_cast<double>(c) / cell + ox;
      const auto x0 = static_cast<std::size_t>(fx);
      const double tx = smoothstep(0, 1, fx - static_cast<double>(x0));
      const double a = lattice[y0 * gw + x0], b = lattice[y0 * gw + x0 + 1];
      const double cc = lattice[(y0 + 1) * gw + x0], d = lattice[(y0 + 1) * gw + x0 + 1];
      out[r * w + c] = static_cast<float>((a * (1 - tx) + b * tx) * (1 - ty) +
                                          (cc * (1 - tx) + d * tx) * ty);
    }
  }
  return out;
}

Phantom gen_phantom(std::uint64_t seed, std::size_t size) {
  if (size < 8) throw std::invalid_argument("gen_phantom: size must be at least 8");
  Rng rng(derive_seed(seed, 0));
  const double s = static_cast<double>(size);
  Phantom p;
  p.params.seed = seed;
  p.params.cx = s / 2 + uniform(rng, -2, 2) * s / 64;
  p.params.cy = s / 2 + uniform(rng, -2, 2) * s / 64;
  p.params.ax = s * uniform(rng, 0.34, 0.42);
  p.params.ay = s * uniform(rng, 0.40, 0.46);
  p.params.angle = uniform(rng, -0.2, 0.2);
  const Ellipse brain{p.params.cx, p.params.cy, p.params.ax, p.params.ay, p.params.angle};

  // Ventricles: two mirrored dark ellipses near the centre.
  const double vu = p.params.ax * uniform(rng, 0.14, 0.22);
  const double vax = p.params.ax * uniform(rng, 0.08, 0.12);
  const double vay = p.params.ay * uniform(rng, 0.18, 0.26);
  const double vtilt = uniform(rng, 0.1, 0.3);
  const double ca = std::cos(p.params.angle), sa = std::sin(p.params.angle);
  const Ellipse left{p.params.cx - ca * vu, p.params.cy - sa * vu, vax, vay,
                     p.params.angle + vtilt};
  const Ellipse right{p.params.cx + ca * vu, p.params.cy + sa * vu, vax, vay,
                      p.params.angle - vtilt};

  const double gdir = uniform(rng, 0, 2 * std::numbers::pi);
  const double base = uniform(rng, 0.48, 0.56);
  const Tensor coarse = value_noise(size, size, s / 8, rng);
  const Tensor fine = value_noise(size, size, s / 20, rng);

  p.image = Tensor({size, size});
  p.foreground = Mask(size, size);
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      const double x = static_cast<double>(c) + 0.5, y = static_cast<double>(r) + 0.5;
      const double rr = brain.radius(x, y);
      if (rr > 1.0) continue;
      p.foreground.set(r, c);
      const double gx = (x - p.params.cx) / p.params.ax, gy = (y - p.params.cy) / p.params.ay;
      double v = base + 0.06 * (std::cos(gdir) * gx + std::sin(gdir) * gy);
      v += 0.2 * smoothstep(0.78, 0.93, rr);
      const double vent = std::max(smoothstep(1.0, 0.75, left.radius(x, y)),
                                   smoothstep(1.0, 0.75, right.radius(x, y)));
      v += (0.2 - v) * vent;
      v += 0.03 * coarse[r * size + c] + 0.015 * fine[r * size + c];
      p.image[r * size + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return p;
}

const char* lesion_kind_name(LesionKind kind) {
  switch (kind) {
    case LesionKind::BrightBlob: return "bright-blob";
    case LesionKind::DarkBlob: return "dark-blob";
    case LesionKind::TexturePatch: return "texture-patch";
  }
  return "unknown";
}

LesionKind parse_lesion_kind(const std::string& name) {
  if (name == "bright-blob") return LesionKind::BrightBlob;
  if (name == "dark-blob") return LesionKind::DarkBlob;
  if (name == "texture-patch") return LesionKind::TexturePatch;
  throw std::invalid_argument("unknown lesion kind '" + name + "'");
}

LesionCase inject_lesion(const Phantom& phantom, std::uint64_t seed, LesionKind kind,
                         double severity) {
  if (!(severity > 0.0) || severity > 1.0) {
    throw std::invalid_argument("inject_lesion: severity must lie in (0, 1]");
  }
  Rng rng(derive_seed(seed, 1));
  const std::size_t h = phantom.foreground.h, w = phantom.foreground.w;
  const double scale = static_cast<double>(h * w) / (64.0 * 64.0);
  const auto steps = static_cast<std::size_t>(
      std::lround(static_cast<double>(randint(rng, 150, 450)) * scale));
  Mask m = random_walk_pixels(phantom.foreground, steps, rng);
  m = m.dilated() & phantom.foreground;

  const Tensor noise = value_noise(h, w, 4.0, rng);
  const double period = uniform(rng, 3.0, 6.0);
  const double theta = uniform(rng, 0, std::numbers::pi);

  LesionCase out;
  out.image = phantom.image;
  out.gt_mask = m;
  out.foreground = phantom.foreground;
  out.severity = severity;
  out.kind = kind;
  out.seed = seed;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (!m.at(r, c)) continue;
      const double x = phantom.image[r * w + c];
      const double n = noise[r * w + c];
      double target = x;
      switch (kind) {
        case LesionKind::BrightBlob:
          target = std::max(x, 0.93 + 0.07 * std::abs(n));
          break;
        case LesionKind::DarkBlob:
          target = std::min(x, 0.04 + 0.06 * std::abs(n));
          break;
        case LesionKind::TexturePatch: {
          const double u = std::cos(theta) * static_cast<double>(c) +
                           std::sin(theta) * static_cast<double>(r);
          target = 0.5 + 0.45 * std::sin(2 * std::numbers::pi * u / period);
          break;
        }
      }
      out.image[r * w + c] = static_cast<float>(std::clamp(x + severity * (target - x), 0.0, 1.0));
    }
  }
  return out;
}

std::vector<LesionCase> gen_lesion_cases(std::size_t n, std::uint64_t seed, std::size_t size,
                                         double min_severity) {
  std::vector<LesionCase> cases;
  cases.reserve(n);
  Rng rng(derive_seed(seed, 7));
  for (std::size_t i = 0; i < n; ++i) {
    const auto kind = static_cast<LesionKind>(randint(rng, 0, 2));
    const double severity = uniform(rng, min_severity, 1.0);
    const Phantom p = gen_phantom(derive_seed(seed, 2 * i + 100), size);
    cases.push_back(inject_lesion(p, derive_seed(seed, 2 * i + 101), kind, severity));
  }
  return cases;
}

VectorTask gen_vector_task(const std::string& name, std::size_t n, std::uint64_t seed,
                           const VectorTaskConfig& cfg) {
  if (n == 0) throw std::invalid_argument("gen_vector_task: n must be positive");
  Rng rng(derive_seed(seed, 3));
  VectorTask task{Tensor({n, 2}), Tensor({n, 2})};
  if (name == "gaussian-offset") {
    // Clean points sit on a 2^-10 grid so x1 + c is exact in float and the
    // difference x0 - x1 reproduces c bit-for-bit for dyadic offsets.
    const auto quantise = [](double v) { return std::round(v * 1024.0) / 1024.0; };
    for (std::size_t i = 0; i < n; ++i) {
      const float a = static_cast<float>(quantise(normal(rng)));
      const float b = static_cast<float>(quantise(normal(rng)));
      task.x1[2 * i] = a;
      task.x1[2 * i + 1] = b;
      task.x0[2 * i] = a + static_cast<float>(cfg.offset_x);
      task.x0[2 * i + 1] = b + static_cast<float>(cfg.offset_y);
    }
  } else if (name == "two-moons-perturbed") {
    // For isotropic 2-D Gaussian jitter, E|x0 - x1| = sigma * sqrt(pi / 2).
    const double sigma = cfg.jitter / std::sqrt(std::numbers::pi / 2);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = uniform(rng, 0, std::numbers::pi);
      const bool upper = uniform(rng) < 0.5;
      const double x = upper ? std::cos(t) : 1 - std::cos(t);
      const double y = upper ? std::sin(t) : 0.5 - std::sin(t);
      task.x1[2 * i] = static_cast<float>(x);
      task.x1[2 * i + 1] = static_cast<float>(y);
      task.x0[2 * i] = static_cast<float>(x + sigma * normal(rng));
      task.x0[2 * i + 1] = static_cast<float>(y + sigma * normal(rng));
    }
  } else {
    throw std::invalid_argument("gen_vector_task: unknown task '" + name +
                                "' (expected gaussian-offset or two-moons-perturbed)");
  }
  return task;
}

}  // namespace rfc

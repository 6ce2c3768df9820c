#include "rfc/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace rfc::kernels {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

struct AxisTap {
  std::size_t i0, i1;
  float w0, w1;
};

std::vector<AxisTap> bilinear_taps(std::size_t in, std::size_t factor) {
  std::vector<AxisTap> taps(in * factor);
  for (std::size_t o = 0; o < taps.size(); ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    src = std::max(src, 0.0);
    auto i0 = static_cast<std::size_t>(std::floor(src));
    i0 = std::min(i0, in - 1);
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const auto l = static_cast<float>(src - static_cast<double>(i0));
    taps[o] = {i0, i1, 1.0f - l, l};
  }
  return taps;
}

void require_spatial(const char* op, const Tensor& x) {
  if (x.rank() < 2) {
    throw ShapeError(std::string(op) + ": expected at least 2 spatial dims, got " +
                     shape_str(x.shape()));
  }
}

}  // namespace

std::size_t conv_out_size(const char* op, std::size_t in, std::size_t k,
                          std::size_t stride, std::size_t pad) {
  if (stride == 0 || k == 0 || in + 2 * pad < k) {
    throw ShapeError(std::string(op) + ": kernel " + std::to_string(k) +
                     " does not fit input " + std::to_string(in) + " with padding " +
                     std::to_string(pad));
  }
  return (in + 2 * pad - k) / stride + 1;
}

void im2col(std::span<const float> x, const ConvGeometry& g,
            std::span<float> cols) {
  const std::size_t ncols = g.n * g.oh * g.ow;
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        float* row = cols.data() + ((c * g.k + ki) * g.k + kj) * ncols;
        for (std::size_t n = 0; n < g.n; ++n) {
          const float* plane = x.data() + (n * g.c + c) * g.h * g.w;
          for (std::size_t y = 0; y < g.oh; ++y) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(y * g.stride + ki) - pad;
            float* dst = row + (n * g.oh + y) * g.ow;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
              std::fill(dst, dst + g.ow, 0.0f);
              continue;
            }
            const float* src = plane + static_cast<std::size_t>(iy) * g.w;
            for (std::size_t xo = 0; xo < g.ow; ++xo) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(xo * g.stride + kj) - pad;
              dst[xo] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w))
                            ? 0.0f
                            : src[ix];
            }
          }
        }
      }
    }
  }
}

void col2im(std::span<const float> cols, const ConvGeometry& g,
            std::span<float> x) {
  const std::size_t ncols = g.n * g.oh * g.ow;
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const float* row = cols.data() + ((c * g.k + ki) * g.k + kj) * ncols;
        for (std::size_t n = 0; n < g.n; ++n) {
          float* plane = x.data() + (n * g.c + c) * g.h * g.w;
          for (std::size_t y = 0; y < g.oh; ++y) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(y * g.stride + ki) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            const float* src = row + (n * g.oh + y) * g.ow;
            float* dst = plane + static_cast<std::size_t>(iy) * g.w;
            for (std::size_t xo = 0; xo < g.ow; ++xo) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(xo * g.stride + kj) - pad;
              if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[xo];
            }
          }
        }
      }
    }
  }
}

void nchw_to_cmajor(std::span<const float> src, std::size_t n, std::size_t c,
                    std::size_t plane, std::span<float> dst) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float* s = src.data() + (i * c + ch) * plane;
      std::copy(s, s + plane, dst.data() + (ch * n + i) * plane);
    }
  }
}

void cmajor_to_nchw(std::span<const float> src, std::size_t n, std::size_t c,
                    std::size_t plane, std::span<float> dst) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float* s = src.data() + (ch * n + i) * plane;
      std::copy(s, s + plane, dst.data() + (i * c + ch) * plane);
    }
  }
}

void gemm(std::span<const float> a, std::span<const float> b,
          std::span<float> c, std::size_t m, std::size_t k, std::size_t n,
          bool transpose_a, bool transpose_b, bool accumulate) {
  const auto em = static_cast<Eigen::Index>(m);
  const auto ek = static_cast<Eigen::Index>(k);
  const auto en = static_cast<Eigen::Index>(n);
  Map out(c.data(), em, en);
  // Operand maps are built in their stored layout and transposed lazily.
  ConstMap lhs(a.data(), transpose_a ? ek : em, transpose_a ? em : ek);
  ConstMap rhs(b.data(), transpose_b ? en : ek, transpose_b ? ek : en);
  auto run = [&](const auto& l, const auto& r) {
    if (accumulate) {
      out.noalias() += l * r;
    } else {
      out.noalias() = l * r;
    }
  };
  if (transpose_a && transpose_b) {
    run(lhs.transpose(), rhs.transpose());
  } else if (transpose_a) {
    run(lhs.transpose(), rhs);
  } else if (transpose_b) {
    run(lhs, rhs.transpose());
  } else {
    run(lhs, rhs);
  }
}

void sigmoid(std::span<const float> x, std::span<float> out) {
  using Arr = Eigen::Array<float, Eigen::Dynamic, 1>;
  Eigen::Map<const Arr> in(x.data(), static_cast<Eigen::Index>(x.size()));
  Eigen::Map<Arr> o(out.data(), static_cast<Eigen::Index>(out.size()));
  o = ((-in).exp() + 1.0f).inverse();
}

Tensor bilinear_upsample(const Tensor& x, std::size_t factor) {
  require_spatial("bilinear_upsample", x);
  if (factor == 0) throw ShapeError("bilinear_upsample: factor must be >= 1");
  const std::size_t h = x.dim(x.rank() - 2);
  const std::size_t w = x.dim(x.rank() - 1);
  Shape shape = x.shape();
  shape[shape.size() - 2] = h * factor;
  shape[shape.size() - 1] = w * factor;
  if (factor == 1) return x;
  Tensor out(shape);
  const auto ty = bilinear_taps(h, factor);
  const auto tx = bilinear_taps(w, factor);
  const std::size_t planes = x.size() / (h * w);
  const std::size_t oh = h * factor, ow = w * factor;
  for (std::size_t p = 0; p < planes; ++p) {
    const float* src = x.data().data() + p * h * w;
    float* dst = out.data().data() + p * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      const auto& ay = ty[y];
      for (std::size_t xo = 0; xo < ow; ++xo) {
        const auto& ax = tx[xo];
        dst[y * ow + xo] = ay.w0 * (ax.w0 * src[ay.i0 * w + ax.i0] + ax.w1 * src[ay.i0 * w + ax.i1]) +
                           ay.w1 * (ax.w0 * src[ay.i1 * w + ax.i0] + ax.w1 * src[ay.i1 * w + ax.i1]);
      }
    }
  }
  return out;
}

Tensor bilinear_upsample_adjoint(const Tensor& grad, std::size_t factor) {
  require_spatial("bilinear_upsample", grad);
  const std::size_t oh = grad.dim(grad.rank() - 2);
  const std::size_t ow = grad.dim(grad.rank() - 1);
  if (factor == 0 || oh % factor || ow % factor) {
    throw ShapeError("bilinear_upsample adjoint: " + shape_str(grad.shape()) +
                     " not divisible by factor " + std::to_string(factor));
  }
  if (factor == 1) return grad;
  const std::size_t h = oh / factor, w = ow / factor;
  Shape shape = grad.shape();
  shape[shape.size() - 2] = h;
  shape[shape.size() - 1] = w;
  Tensor out(shape);
  const auto ty = bilinear_taps(h, factor);
  const auto tx = bilinear_taps(w, factor);
  const std::size_t planes = grad.size() / (oh * ow);
  for (std::size_t p = 0; p < planes; ++p) {
    const float* g = grad.data().data() + p * oh * ow;
    float* dst = out.data().data() + p * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      const auto& ay = ty[y];
      for (std::size_t xo = 0; xo < ow; ++xo) {
        const auto& ax = tx[xo];
        const float v = g[y * ow + xo];
        dst[ay.i0 * w + ax.i0] += ay.w0 * ax.w0 * v;
        dst[ay.i0 * w + ax.i1] += ay.w0 * ax.w1 * v;
        dst[ay.i1 * w + ax.i0] += ay.w1 * ax.w0 * v;
        dst[ay.i1 * w + ax.i1] += ay.w1 * ax.w1 * v;
      }
    }
  }
  return out;
}

Tensor avgpool2d(const Tensor& x, std::size_t k) {
  require_spatial("avgpool2d", x);
  const std::size_t h = x.dim(x.rank() - 2);
  const std::size_t w = x.dim(x.rank() - 1);
  if (k == 0 || h % k || w % k) {
    throw ShapeError("avgpool2d: spatial dims " + shape_str(x.shape()) +
                     " not divisible by window " + std::to_string(k));
  }
  Shape shape = x.shape();
  shape[shape.size() - 2] = h / k;
  shape[shape.size() - 1] = w / k;
  Tensor out(shape);
  const std::size_t planes = x.size() / (h * w);
  const std::size_t oh = h / k, ow = w / k;
  const float scale = 1.0f / static_cast<float>(k * k);
  for (std::size_t p = 0; p < planes; ++p) {
    const float* src = x.data().data() + p * h * w;
    float* dst = out.data().data() + p * oh * ow;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xo = 0; xo < w; ++xo) {
        dst[(y / k) * ow + xo / k] += src[y * w + xo];
      }
    }
    for (std::size_t i = 0; i < oh * ow; ++i) dst[i] *= scale;
  }
  return out;
}

}  // namespace rfc::kernels

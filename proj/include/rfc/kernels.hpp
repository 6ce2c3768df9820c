#pragma once

#include <cstddef>
#include <span>

#include "rfc/tensor.hpp"

// Plain-tensor numerical kernels shared by the autodiff ops and the scoring
// code. All image tensors are NCHW.
namespace rfc::kernels {

struct ConvGeometry {
  std::size_t n, c, h, w;   // input
  std::size_t k, stride, pad;
  std::size_t oh, ow;       // output
};

/// Output side of a convolution; throws ShapeError when the window does not fit.
std::size_t conv_out_size(const char* op, std::size_t in, std::size_t k,
                          std::size_t stride, std::size_t pad);

/// cols[(c*k + ki)*k + kj][(n*oh + y)*ow + x]
void im2col(std::span<const float> x, const ConvGeometry& g,
            std::span<float> cols);
/// Adjoint of im2col: accumulates cols back into x (x must be pre-zeroed).
void col2im(std::span<const float> cols, const ConvGeometry& g,
            std::span<float> x);

/// [N, C, P] <-> [C, N*P]
void nchw_to_cmajor(std::span<const float> src, std::size_t n, std::size_t c,
                    std::size_t plane, std::span<float> dst);
void cmajor_to_nchw(std::span<const float> src, std::size_t n, std::size_t c,
                    std::size_t plane, std::span<float> dst);

/// C = A * B with row-major A[m,k], B[k,n]; `transpose_a/b` read the
/// operands transposed. C is overwritten unless `accumulate`.
void gemm(std::span<const float> a, std::span<const float> b,
          std::span<float> c, std::size_t m, std::size_t k, std::size_t n,
          bool transpose_a, bool transpose_b, bool accumulate = false);

/// out = 1 / (1 + exp(-x)), vectorised.
void sigmoid(std::span<const float> x, std::span<float> out);

Tensor bilinear_upsample(const Tensor& x, std::size_t factor);
/// Adjoint of bilinear_upsample.
Tensor bilinear_upsample_adjoint(const Tensor& grad, std::size_t factor);
Tensor avgpool2d(const Tensor& x, std::size_t k);

}  // namespace rfc::kernels

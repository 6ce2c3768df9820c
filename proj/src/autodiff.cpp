#include "rfc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rfc/kernels.hpp"

namespace rfc {

// ---------------------------------------------------------------------------
// ParamSet

Parameter& ParamSet::add(std::string name, Tensor value, bool trainable) {
  if (find(name) != nullptr) {
    throw std::invalid_argument("ParamSet: duplicate parameter '" + name + "'");
  }
  Tensor grad(value.shape());
  params_.push_back({std::move(name), std::move(value), std::move(grad), trainable});
  return params_.back();
}

Parameter* ParamSet::find(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Parameter* ParamSet::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Parameter& ParamSet::at(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw std::out_of_range("ParamSet: no parameter '" + std::string(name) + "'");
}

const Parameter& ParamSet::at(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw std::out_of_range("ParamSet: no parameter '" + std::string(name) + "'");
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p.grad = Tensor(p.value.shape());
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || !(a[i].value == b[i].value)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Graph

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::MulScalar: return "mul-scalar";
    case Op::Matmul: return "matmul";
    case Op::Conv2d: return "conv2d";
    case Op::Conv2dTranspose: return "conv2d-transpose";
    case Op::Relu: return "relu";
    case Op::Silu: return "silu";
    case Op::ConcatChannels: return "concat-channels";
    case Op::Mean: return "mean";
    case Op::SqNorm: return "sq-norm";
    case Op::BilinearUpsample: return "bilinear-upsample";
    case Op::AvgPool2d: return "avgpool2d";
    case Op::AddBias: return "add-bias";
    case Op::AddChannelEmbedding: return "add-channel-embedding";
  }
  return "unknown";
}

const Tensor& Var::value() const { return graph_->value(id_); }

Var Graph::push_leaf(Tensor value, bool needs_grad, Parameter* param) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs_grad && tracing();
  node.param = param;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) { return push_leaf(std::move(value), false, nullptr); }

Var Graph::variable(Tensor value) { return push_leaf(std::move(value), true, nullptr); }

Var Graph::parameter(Parameter& p) {
  // The leaf holds a copy so later optimizer updates never alias a live tape.
  return push_leaf(p.value, p.trainable, &p);
}

Var Graph::record(Op op, Tensor value, std::vector<std::size_t> inputs,
                  BackwardFn fn) {
  Node node;
  node.op = op;
  node.value = std::move(value);
  if (tracing()) {
    node.needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                  [&](std::size_t i) { return nodes_[i].needs_grad; });
    if (node.needs_grad) {
      node.inputs = std::move(inputs);
      node.backward = std::move(fn);
    }
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Graph::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.shape() != node.value.shape() || node.grad.empty()) {
    node.grad = Tensor(node.value.shape());
  }
  return node.grad;
}

void Graph::backward(Var root) {
  if (root.graph_ != this) throw std::invalid_argument("backward: foreign node");
  if (!tracing()) throw std::logic_error("backward: graph was built without tracing");
  if (root.value().size() != 1 || root.value().rank() != 0) {
    throw ShapeError("backward: root must be a scalar, got " +
                     shape_str(root.value().shape()));
  }
  for (auto& node : nodes_) node.grad = Tensor();
  for (auto& node : nodes_) {
    if (node.param != nullptr && node.param->trainable) {
      node.param->grad = Tensor(node.param->value.shape());
    }
  }
  grad_buffer(root.id())[0] = 1.0f;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.empty() || !node.backward) continue;
    node.backward(*this, i);
  }
  for (auto& node : nodes_) {
    if (node.param == nullptr || !node.param->trainable || node.grad.empty()) continue;
    auto dst = node.param->grad.data();
    auto src = node.grad.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

Tensor Graph::grad(Var v) const {
  const Node& node = nodes_[v.id()];
  if (node.grad.empty()) return Tensor(node.value.shape());
  return node.grad;
}

// ---------------------------------------------------------------------------
// Ops

namespace ops {
namespace {

Graph& same_graph(const char* op, Var a, Var b) {
  if (&a.graph() != &b.graph()) {
    throw std::invalid_argument(std::string(op) + ": operands belong to different graphs");
  }
  return a.graph();
}

void accumulate(Graph& g, std::size_t id, std::span<const float> src, float scale = 1.0f) {
  if (!g.needs_grad(id)) return;
  auto dst = g.grad_buffer(id).data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

void require_rank(const char* op, const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " +
                     std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

}  // namespace

Var add(Var a, Var b) {
  Graph& g = same_graph("add", a, b);
  Tensor out = a.value() + b.value();
  return g.record(Op::Add, std::move(out), {a.id(), b.id()}, [](Graph& g, std::size_t self) {
    const auto& in = g.inputs(self);
    accumulate(g, in[0], g.out_grad(self).data());
    accumulate(g, in[1], g.out_grad(self).data());
  });
}

Var sub(Var a, Var b) {
  Graph& g = same_graph("sub", a, b);
  Tensor out = a.value() - b.value();
  return g.record(Op::Sub, std::move(out), {a.id(), b.id()}, [](Graph& g, std::size_t self) {
    const auto& in = g.inputs(self);
    accumulate(g, in[0], g.out_grad(self).data());
    accumulate(g, in[1], g.out_grad(self).data(), -1.0f);
  });
}

Var mul_scalar(Var a, float s) {
  Graph& g = a.graph();
  Tensor out = a.value() * s;
  return g.record(Op::MulScalar, std::move(out), {a.id()}, [s](Graph& g, std::size_t self) {
    accumulate(g, g.inputs(self)[0], g.out_grad(self).data(), s);
  });
}

Var matmul(Var a, Var b) {
  Graph& g = same_graph("matmul", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank("matmul", av, 2, "lhs");
  require_rank("matmul", bv, 2, "rhs");
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k) {
    throw ShapeError("matmul: inner dims differ, lhs " + shape_str(av.shape()) +
                     " rhs " + shape_str(bv.shape()));
  }
  Tensor out({m, n});
  kernels::gemm(av.data(), bv.data(), out.data(), m, k, n, false, false);
  return g.record(Op::Matmul, std::move(out), {a.id(), b.id()},
                  [m, k, n](Graph& g, std::size_t self) {
                    const auto& in = g.inputs(self);
                    const auto& dc = g.out_grad(self);
                    if (g.needs_grad(in[0])) {
                      kernels::gemm(dc.data(), g.value(in[1]).data(),
                                    g.grad_buffer(in[0]).data(), m, n, k, false, true, true);
                    }
                    if (g.needs_grad(in[1])) {
                      kernels::gemm(g.value(in[0]).data(), dc.data(),
                                    g.grad_buffer(in[1]).data(), k, m, n, true, false, true);
                    }
                  });
}

Var conv2d(Var x, Var w, ConvSpec spec) {
  Graph& g = same_graph("conv2d", x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank("conv2d", xv, 4, "input");
  require_rank("conv2d", wv, 4, "kernel");
  if (wv.dim(1) != xv.dim(1) || wv.dim(2) != wv.dim(3)) {
    throw ShapeError("conv2d: kernel " + shape_str(wv.shape()) +
                     " incompatible with input " + shape_str(xv.shape()) +
                     " (need OIHW with I = input channels, square window)");
  }
  // Geometry is per sample: im2col buffers stay cache-sized and the GEMM
  // output [O, oh*ow] is already the NCHW slab of that sample.
  kernels::ConvGeometry geo{};
  geo.n = 1;
  geo.c = xv.dim(1);
  geo.h = xv.dim(2);
  geo.w = xv.dim(3);
  geo.k = wv.dim(2);
  geo.stride = spec.stride;
  geo.pad = spec.padding;
  geo.oh = kernels::conv_out_size("conv2d", geo.h, geo.k, geo.stride, geo.pad);
  geo.ow = kernels::conv_out_size("conv2d", geo.w, geo.k, geo.stride, geo.pad);
  const std::size_t batch = xv.dim(0);
  const std::size_t out_c = wv.dim(0);
  const std::size_t ckk = geo.c * geo.k * geo.k;
  const std::size_t in_sz = geo.c * geo.h * geo.w;
  const std::size_t out_sz = out_c * geo.oh * geo.ow;
  const std::size_t plane = geo.oh * geo.ow;

  Tensor out({batch, out_c, geo.oh, geo.ow});
  FloatBuffer cols(ckk * plane);
  for (std::size_t n = 0; n < batch; ++n) {
    kernels::im2col(xv.data().subspan(n * in_sz, in_sz), geo, cols);
    kernels::gemm(wv.data(), cols, out.data().subspan(n * out_sz, out_sz), out_c, ckk, plane,
                  false, false);
  }

  return g.record(Op::Conv2d, std::move(out), {x.id(), w.id()},
                  [geo, batch, out_c, ckk, in_sz, out_sz, plane](Graph& g, std::size_t self) {
                    const auto& in = g.inputs(self);
                    const auto dy = g.out_grad(self).data();
                    FloatBuffer cols(ckk * plane);
                    if (g.needs_grad(in[1])) {
                      const auto xs = g.value(in[0]).data();
                      auto dw = g.grad_buffer(in[1]).data();
                      for (std::size_t n = 0; n < batch; ++n) {
                        kernels::im2col(xs.subspan(n * in_sz, in_sz), geo, cols);
                        kernels::gemm(dy.subspan(n * out_sz, out_sz), cols, dw, out_c, plane, ckk,
                                      false, true, true);
                      }
                    }
                    if (g.needs_grad(in[0])) {
                      const auto ws = g.value(in[1]).data();
                      auto dx = g.grad_buffer(in[0]).data();
                      for (std::size_t n = 0; n < batch; ++n) {
                        kernels::gemm(ws, dy.subspan(n * out_sz, out_sz), cols, ckk, out_c, plane,
                                      true, false);
                        kernels::col2im(cols, geo, dx.subspan(n * in_sz, in_sz));
                      }
                    }
                  });
}

Var conv2d_transpose(Var x, Var w, ConvSpec spec) {
  Graph& g = same_graph("conv2d-transpose", x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank("conv2d-transpose", xv, 4, "input");
  require_rank("conv2d-transpose", wv, 4, "kernel");
  if (wv.dim(0) != xv.dim(1) || wv.dim(2) != wv.dim(3)) {
    throw ShapeError("conv2d-transpose: kernel " + shape_str(wv.shape()) +
                     " incompatible with input " + shape_str(xv.shape()) +
                     " (need [in, out, k, k] with in = input channels)");
  }
  const std::size_t batch = xv.dim(0), in_c = xv.dim(1), h = xv.dim(2), w_in = xv.dim(3);
  const std::size_t k = wv.dim(2), out_c = wv.dim(1), s = spec.stride, p = spec.padding;
  if (s == 0 || (h - 1) * s + k < 2 * p || (w_in - 1) * s + k < 2 * p) {
    throw ShapeError("conv2d-transpose: padding " + std::to_string(p) +
                     " too large for input " + shape_str(xv.shape()));
  }
  // Geometry of the adjoint convolution, per sample: it maps the (larger)
  // output grid back onto the input grid.
  kernels::ConvGeometry geo{};
  geo.n = 1;
  geo.c = out_c;
  geo.h = (h - 1) * s + k - 2 * p;
  geo.w = (w_in - 1) * s + k - 2 * p;
  geo.k = k;
  geo.stride = s;
  geo.pad = p;
  geo.oh = h;
  geo.ow = w_in;
  const std::size_t okk = out_c * k * k;
  const std::size_t plane = h * w_in;
  const std::size_t in_sz = in_c * plane;
  const std::size_t out_sz = out_c * geo.h * geo.w;

  Tensor out({batch, out_c, geo.h, geo.w});
  FloatBuffer cols(okk * plane);
  for (std::size_t n = 0; n < batch; ++n) {
    kernels::gemm(wv.data(), xv.data().subspan(n * in_sz, in_sz), cols, okk, in_c, plane, true,
                  false);
    kernels::col2im(cols, geo, out.data().subspan(n * out_sz, out_sz));
  }

  return g.record(Op::Conv2dTranspose, std::move(out), {x.id(), w.id()},
                  [geo, batch, in_c, okk, plane, in_sz, out_sz](Graph& g, std::size_t self) {
                    const auto& in = g.inputs(self);
                    const auto dy = g.out_grad(self).data();
                    const bool need_w = g.needs_grad(in[1]);
                    const bool need_x = g.needs_grad(in[0]);
                    FloatBuffer dcols(okk * plane);
                    for (std::size_t n = 0; n < batch; ++n) {
                      kernels::im2col(dy.subspan(n * out_sz, out_sz), geo, dcols);
                      if (need_w) {
                        kernels::gemm(g.value(in[0]).data().subspan(n * in_sz, in_sz), dcols,
                                      g.grad_buffer(in[1]).data(), in_c, plane, okk, false, true,
                                      true);
                      }
                      if (need_x) {
                        kernels::gemm(g.value(in[1]).data(), dcols,
                                      g.grad_buffer(in[0]).data().subspan(n * in_sz, in_sz), in_c,
                                      okk, plane, false, false, true);
                      }
                    }
                  });
}

Var relu(Var x) {
  Graph& g = x.graph();
  Tensor out = x.value();
  for (auto& v : out.data()) v = std::max(v, 0.0f);
  return g.record(Op::Relu, std::move(out), {x.id()}, [](Graph& g, std::size_t self) {
    const std::size_t in = g.inputs(self)[0];
    const auto xs = g.value(in).data();
    const auto dy = g.out_grad(self).data();
    auto dx = g.grad_buffer(in).data();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (xs[i] > 0.0f) dx[i] += dy[i];
    }
  });
}

Var silu(Var x) {
  Graph& g = x.graph();
  Tensor out(x.value().shape());
  kernels::sigmoid(x.value().data(), out.data());
  {
    auto o = out.data();
    const auto xs = x.value().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= xs[i];
  }
  return g.record(Op::Silu, std::move(out), {x.id()}, [](Graph& g, std::size_t self) {
    const std::size_t in = g.inputs(self)[0];
    const auto xs = g.value(in).data();
    const auto dy = g.out_grad(self).data();
    auto dx = g.grad_buffer(in).data();
    FloatBuffer sig(xs.size());
    kernels::sigmoid(xs, sig);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const float s = sig[i];
      dx[i] += dy[i] * s * (1.0f + xs[i] * (1.0f - s));
    }
  });
}

Var concat_channels(Var a, Var b) {
  Graph& g = same_graph("concat-channels", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  bool ok = av.rank() >= 2 && av.rank() == bv.rank() && av.dim(0) == bv.dim(0);
  for (std::size_t d = 2; ok && d < av.rank(); ++d) ok = av.dim(d) == bv.dim(d);
  if (!ok) {
    throw ShapeError("concat-channels: cannot join " + shape_str(av.shape()) + " and " +
                     shape_str(bv.shape()) + " along axis 1");
  }
  const std::size_t n = av.dim(0);
  const std::size_t sa = av.size() / n, sb = bv.size() / n;
  Shape shape = av.shape();
  shape[1] += bv.dim(1);
  Tensor out(shape);
  auto dst = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(av.data().begin() + static_cast<std::ptrdiff_t>(i * sa), sa,
                dst.begin() + static_cast<std::ptrdiff_t>(i * (sa + sb)));
    std::copy_n(bv.data().begin() + static_cast<std::ptrdiff_t>(i * sb), sb,
                dst.begin() + static_cast<std::ptrdiff_t>(i * (sa + sb) + sa));
  }
  return g.record(Op::ConcatChannels, std::move(out), {a.id(), b.id()},
                  [n, sa, sb](Graph& g, std::size_t self) {
                    const auto& in = g.inputs(self);
                    const auto dy = g.out_grad(self).data();
                    if (g.needs_grad(in[0])) {
                      auto da = g.grad_buffer(in[0]).data();
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < sa; ++j) da[i * sa + j] += dy[i * (sa + sb) + j];
                    }
                    if (g.needs_grad(in[1])) {
                      auto db = g.grad_buffer(in[1]).data();
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < sb; ++j)
                          db[i * sb + j] += dy[i * (sa + sb) + sa + j];
                    }
                  });
}

Var mean(Var x) {
  Graph& g = x.graph();
  const Tensor& xv = x.value();
  if (xv.empty()) throw ShapeError("mean: empty input");
  double acc = 0.0;
  for (float v : xv.data()) acc += v;
  const float inv = 1.0f / static_cast<float>(xv.size());
  Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(xv.size())));
  return g.record(Op::Mean, std::move(out), {x.id()}, [inv](Graph& g, std::size_t self) {
    const std::size_t in = g.inputs(self)[0];
    const float d = g.out_grad(self)[0] * inv;
    for (auto& v : g.grad_buffer(in).data()) v += d;
  });
}

Var sq_norm(Var x) {
  Graph& g = x.graph();
  Tensor out = Tensor::scalar(static_cast<float>(sum_squares(x.value())));
  return g.record(Op::SqNorm, std::move(out), {x.id()}, [](Graph& g, std::size_t self) {
    const std::size_t in = g.inputs(self)[0];
    const float d = 2.0f * g.out_grad(self)[0];
    const auto xs = g.value(in).data();
    auto dx = g.grad_buffer(in).data();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += d * xs[i];
  });
}

Var bilinear_upsample(Var x, std::size_t factor) {
  Graph& g = x.graph();
  require_rank("bilinear-upsample", x.value(), 4, "input");
  Tensor out = kernels::bilinear_upsample(x.value(), factor);
  return g.record(Op::BilinearUpsample, std::move(out), {x.id()},
                  [factor](Graph& g, std::size_t self) {
                    Tensor dx = kernels::bilinear_upsample_adjoint(g.out_grad(self), factor);
                    accumulate(g, g.inputs(self)[0], dx.data());
                  });
}

Var avgpool2d(Var x, std::size_t k) {
  Graph& g = x.graph();
  require_rank("avgpool2d", x.value(), 4, "input");
  Tensor out = kernels::avgpool2d(x.value(), k);
  return g.record(Op::AvgPool2d, std::move(out), {x.id()}, [k](Graph& g, std::size_t self) {
    const std::size_t in = g.inputs(self)[0];
    const Tensor& dy = g.out_grad(self);
    Tensor& dx = g.grad_buffer(in);
    const std::size_t h = dx.dim(2), w = dx.dim(3), ow = w / k;
    const std::size_t planes = dx.size() / (h * w);
    const float scale = 1.0f / static_cast<float>(k * k);
    for (std::size_t p = 0; p < planes; ++p) {
      const float* src = dy.data().data() + p * (h / k) * ow;
      float* dst = dx.data().data() + p * h * w;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xo = 0; xo < w; ++xo) dst[y * w + xo] += scale * src[(y / k) * ow + xo / k];
    }
  });
}

Var add_bias(Var x, Var bias) {
  Graph& g = same_graph("add-bias", x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (xv.rank() < 2 || bv.rank() != 1 || bv.dim(0) != xv.dim(1)) {
    throw ShapeError("add-bias: bias " + shape_str(bv.shape()) +
                     " does not match channel axis of " + shape_str(xv.shape()));
  }
  const std::size_t n = xv.dim(0), c = xv.dim(1), inner = xv.size() / (n * c);
  Tensor out = xv;
  auto o = out.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      float* p = o.data() + (i * c + ch) * inner;
      for (std::size_t j = 0; j < inner; ++j) p[j] += bv[ch];
    }
  return g.record(Op::AddBias, std::move(out), {x.id(), bias.id()},
                  [n, c, inner](Graph& g, std::size_t self) {
                    const auto& in = g.inputs(self);
                    const auto dy = g.out_grad(self).data();
                    accumulate(g, in[0], dy);
                    if (g.needs_grad(in[1])) {
                      auto db = g.grad_buffer(in[1]).data();
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t ch = 0; ch < c; ++ch) {
                          const float* p = dy.data() + (i * c + ch) * inner;
                          float acc = 0.0f;
                          for (std::size_t j = 0; j < inner; ++j) acc += p[j];
                          db[ch] += acc;
                        }
                    }
                  });
}

Var add_channel_embedding(Var x, Var emb) {
  Graph& g = same_graph("add-channel-embedding", x, emb);
  const Tensor& xv = x.value();
  const Tensor& ev = emb.value();
  if (xv.rank() != 4 || ev.rank() != 2 || ev.dim(0) != xv.dim(0) || ev.dim(1) != xv.dim(1)) {
    throw ShapeError("add-channel-embedding: embedding " + shape_str(ev.shape()) +
                     " does not match [N, C] of " + shape_str(xv.shape()));
  }
  const std::size_t nc = ev.size(), plane = xv.dim(2) * xv.dim(3);
  Tensor out = xv;
  auto o = out.data();
  for (std::size_t i = 0; i < nc; ++i) {
    float* p = o.data() + i * plane;
    for (std::size_t j = 0; j < plane; ++j) p[j] += ev[i];
  }
  return g.record(Op::AddChannelEmbedding, std::move(out), {x.id(), emb.id()},
                  [nc, plane](Graph& g, std::size_t self) {
                    const auto& in = g.inputs(self);
                    const auto dy = g.out_grad(self).data();
                    accumulate(g, in[0], dy);
                    if (g.needs_grad(in[1])) {
                      auto de = g.grad_buffer(in[1]).data();
                      for (std::size_t i = 0; i < nc; ++i) {
                        float acc = 0.0f;
                        for (std::size_t j = 0; j < plane; ++j) acc += dy[i * plane + j];
                        de[i] += acc;
                      }
                    }
                  });
}

}  // namespace ops
}  // namespace rfc

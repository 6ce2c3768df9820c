#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "rfc/tensor.hpp"

namespace rfc {

/// A named leaf tensor owned by a model. `grad` has the shape of `value`
/// once a backward pass has touched it.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

/// Ordered parameter collection with stable element addresses.
class ParamSet {
 public:
  Parameter& add(std::string name, Tensor value, bool trainable = true);

  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// True when names, shapes and values all match bit-for-bit.
  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::deque<Parameter> params_;
};

enum class Op {
  Leaf,
  Add,
  Sub,
  MulScalar,
  Matmul,
  Conv2d,
  Conv2dTranspose,
  Relu,
  Silu,
  ConcatChannels,
  Mean,
  SqNorm,
  BilinearUpsample,
  AvgPool2d,
  AddBias,
  AddChannelEmbedding,
};

const char* op_name(Op op);

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

enum class GradMode { Trace, Off };

/// Dynamic tape. Every op appends a node; backward walks the tape in reverse
/// creation order, which is a valid topological order.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  explicit Graph(GradMode mode = GradMode::Trace) : mode_(mode) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Trainable leaf that is not tied to a Parameter (gradient via grad()).
  Var variable(Tensor value);
  /// Leaf bound to `p`; backward writes p.grad when p.trainable.
  Var parameter(Parameter& p);

  /// Reverse pass from a scalar root. Gradients of every node are reset
  /// first, so consecutive calls with different roots are independent.
  /// Bound trainable parameters receive their gradient (zero when the root
  /// does not depend on them).
  void backward(Var root);

  /// Gradient of the last backward pass w.r.t. `v` (zeros if unreached).
  Tensor grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  bool tracing() const { return mode_ == GradMode::Trace; }

  // Op-author interface.
  Var record(Op op, Tensor value, std::vector<std::size_t> inputs,
             BackwardFn fn);
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& out_grad(std::size_t id) const { return nodes_[id].grad; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const {
    return nodes_[id].inputs;
  }
  /// Gradient accumulator for node `id`, zero-allocated on first use.
  Tensor& grad_buffer(std::size_t id);

 private:
  struct Node {
    Op op = Op::Leaf;
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };
  Var push_leaf(Tensor value, bool needs_grad, Parameter* param);

  GradMode mode_;
  std::deque<Node> nodes_;
};

struct ConvSpec {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Differentiable operations. No implicit broadcasting: shapes must match
/// exactly except for the documented per-channel ops.
namespace ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul_scalar(Var a, float s);
/// [m,k] x [k,n] -> [m,n]
Var matmul(Var a, Var b);
/// NCHW input, OIHW kernel.
Var conv2d(Var x, Var w, ConvSpec spec);
/// NCHW input, kernel laid out [in, out, kh, kw]. Output side
/// (H-1)*stride - 2*padding + k.
Var conv2d_transpose(Var x, Var w, ConvSpec spec);
Var relu(Var x);
Var silu(Var x);
/// Concatenates along axis 1; all other dims must agree.
Var concat_channels(Var a, Var b);
/// Mean of all entries -> scalar.
Var mean(Var x);
/// Sum of squares of all entries -> scalar.
Var sq_norm(Var x);
/// Integer-factor bilinear upsampling of NCHW (half-pixel centres).
Var bilinear_upsample(Var x, std::size_t factor);
/// Non-overlapping k x k average pooling of NCHW.
Var avgpool2d(Var x, std::size_t k);
/// x: [N, C, ...], bias: [C]; bias broadcast over every other axis.
Var add_bias(Var x, Var bias);
/// x: [N, C, H, W], emb: [N, C]; emb broadcast over H and W.
Var add_channel_embedding(Var x, Var emb);

}  // namespace ops
}  // namespace rfc

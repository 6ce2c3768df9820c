#pragma once

#include <cstdint>
#include <vector>

#include "rfc/autodiff.hpp"

namespace rfc {

struct AdamWConfig {
  float lr = 5e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.01f;
};

/// First/second moments, one pair per parameter, plus the step counter.
struct AdamWState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  static AdamWState for_params(const ParamSet& params);
};

/// Decoupled-weight-decay Adam on the raw spans; `state_m`/`state_v` must
/// match `param` in length. `step` is the 1-based step used for bias
/// correction.
void adamw_update(std::span<float> param, std::span<const float> grad,
                  std::span<float> state_m, std::span<float> state_v,
                  std::uint64_t step, const AdamWConfig& cfg);

/// One AdamW step over every trainable parameter using `p.grad`.
/// Throws ShapeError when the state does not line up with the parameters.
void adamw_step(ParamSet& params, AdamWState& state, const AdamWConfig& cfg);

/// Scales all trainable gradients so their global L2 norm is at most
/// `max_norm`; returns the norm before clipping.
double clip_grad_norm(ParamSet& params, double max_norm);

}  // namespace rfc

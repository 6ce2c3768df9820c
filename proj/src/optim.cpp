#include "rfc/optim.hpp"

#include <cmath>
#include <string>

namespace rfc {

AdamWState AdamWState::for_params(const ParamSet& params) {
  AdamWState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.value.shape());
    s.v.emplace_back(p.value.shape());
  }
  return s;
}

void adamw_update(std::span<float> param, std::span<const float> grad,
                  std::span<float> state_m, std::span<float> state_v,
                  std::uint64_t step, const AdamWConfig& cfg) {
  if (grad.size() != param.size() || state_m.size() != param.size() ||
      state_v.size() != param.size()) {
    throw ShapeError("adamw: state/gradient length does not match parameter length " +
                     std::to_string(param.size()));
  }
  if (!(cfg.lr > 0.0f)) throw std::invalid_argument("adamw: lr must be positive");
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), static_cast<double>(step));
  const float decay = 1.0f - cfg.lr * cfg.weight_decay;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const float g = grad[i];
    state_m[i] = cfg.beta1 * state_m[i] + (1.0f - cfg.beta1) * g;
    state_v[i] = cfg.beta2 * state_v[i] + (1.0f - cfg.beta2) * g * g;
    const double m_hat = state_m[i] / bc1;
    const double v_hat = state_v[i] / bc2;
    param[i] = param[i] * decay -
               static_cast<float>(cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
  }
}

void adamw_step(ParamSet& params, AdamWState& state, const AdamWConfig& cfg) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adamw: optimizer state holds " + std::to_string(state.m.size()) +
                     " moments for " + std::to_string(params.size()) + " parameters");
  }
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    if (!p.trainable) continue;
    if (state.m[i].shape() != p.value.shape() || state.v[i].shape() != p.value.shape()) {
      throw ShapeError("adamw: state for '" + p.name + "' has shape " +
                       shape_str(state.m[i].shape()) + ", parameter " +
                       shape_str(p.value.shape()));
    }
    if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
    adamw_update(p.value.data(), p.grad.data(), state.m[i].data(), state.v[i].data(),
                 state.step, cfg);
  }
}

double clip_grad_norm(ParamSet& params, double max_norm) {
  double total = 0.0;
  for (const auto& p : params) {
    if (p.trainable) total += sum_squares(p.grad);
  }
  const double norm = std::sqrt(total);
  if (norm > max_norm && norm > 0.0) {
    const auto scale = static_cast<float>(max_norm / norm);
    for (auto& p : params) {
      if (!p.trainable) continue;
      for (auto& g : p.grad.data()) g *= scale;
    }
  }
  return norm;
}

}  // namespace rfc

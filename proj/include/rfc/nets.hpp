#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "rfc/autodiff.hpp"

namespace rfc {

inline constexpr std::size_t kDefaultTimeFrequencies = 8;

/// Sinusoidal embedding [sin(2^k pi t), cos(2^k pi t)], k < K, one row per
/// entry of `t` -> [N, 2K].
Tensor time_embedding(std::span<const float> t, std::size_t num_frequencies);

struct MlpConfig {
  std::size_t data_dim = 2;
  std::vector<std::size_t> hidden{128, 128, 128};
  std::size_t time_frequencies = kDefaultTimeFrequencies;
};

/// U-shaped conv velocity field. Level l runs at base_channels *
/// channel_mult[l]; depth = channel_mult.size() - 1 downsampling stages.
struct UNetConfig {
  std::size_t channels = 4;
  std::size_t base_channels = 16;
  std::vector<std::size_t> channel_mult{1, 2, 2};
  std::size_t time_frequencies = kDefaultTimeFrequencies;

  std::size_t depth() const { return channel_mult.size() - 1; }
};

enum class UNetPreset { XS, S, M };

UNetPreset parse_unet_preset(const std::string& name);
UNetConfig unet_preset(UNetPreset preset, std::size_t channels);

/// Analytic parameter counts, independent of the constructed ParamSet.
std::size_t param_count(const MlpConfig& cfg);
std::size_t param_count(const UNetConfig& cfg);

/// Parametric velocity field v(y, t). Vector mode (MLP) takes [N, d];
/// grid mode (UNet) takes [N, C, h, w]. Output has the input's shape.
class VelocityModel {
 public:
  static VelocityModel mlp(const MlpConfig& cfg, std::uint64_t seed);
  static VelocityModel unet(const UNetConfig& cfg, std::uint64_t seed);
  /// Rebuilds a model from config_json(); parameters are freshly initialised.
  static VelocityModel from_config(const nlohmann::json& cfg, std::uint64_t seed = 0);

  /// Traced forward pass; `t` holds one time per batch element, each in [0, 1].
  Var forward(Graph& g, Var y, std::span<const float> t);
  /// Untraced evaluation.
  Tensor predict(const Tensor& y, std::span<const float> t) const;
  Tensor predict(const Tensor& y, float t) const;

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  std::size_t analytic_param_count() const;
  bool is_grid() const { return std::holds_alternative<UNetConfig>(config_); }
  nlohmann::json config_json() const;

  /// Throws ShapeError when `sample_shape` (no batch axis) is not accepted.
  void check_sample_shape(const Shape& sample_shape) const;

 private:
  using Binder = std::function<Var(const std::string&)>;
  Var forward_impl(Graph& g, Var y, std::span<const float> t, const Binder& bind) const;

  std::variant<MlpConfig, UNetConfig> config_;
  ParamSet params_;
};

struct AutoencoderConfig {
  std::size_t in_channels = 1;
  std::size_t latent_channels = 4;
  std::size_t scale_factor = 4;  // 4 or 8
  std::size_t base_width = 16;
  std::size_t max_width = 32;

  std::size_t stages() const;
  std::size_t width(std::size_t stage) const;
};

/// Small conv encoder/decoder; encode maps C x H x W to
/// latent_channels x H/f x W/f.
class ConvAutoencoder {
 public:
  static ConvAutoencoder create(const AutoencoderConfig& cfg, std::uint64_t seed);

  Var encode(Graph& g, Var x);
  Var decode(Graph& g, Var z);
  Tensor encode(const Tensor& x) const;
  Tensor decode(const Tensor& z) const;

  const AutoencoderConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

 private:
  using Binder = std::function<Var(const std::string&)>;
  Var encode_impl(Graph& g, Var x, const Binder& bind) const;
  Var decode_impl(Graph& g, Var z, const Binder& bind) const;

  AutoencoderConfig cfg_;
  ParamSet params_;
};

nlohmann::json to_json(const AutoencoderConfig& cfg);
AutoencoderConfig autoencoder_config_from_json(const nlohmann::json& j);

}  // namespace rfc

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "rfc/nets.hpp"

namespace rfc {

/// Per-channel affine standardisation of latents [N, C, h, w].
struct LatentStats {
  std::vector<float> mean;
  std::vector<float> std;

  static constexpr float kMinStd = 1e-6f;

  static LatentStats identity(std::size_t channels);
  /// Dataset-level per-channel mean / std over every entry of `raw`.
  static LatentStats fit(const Tensor& raw);

  std::size_t channels() const { return mean.size(); }
  Tensor standardize(const Tensor& raw) const;
  Tensor destandardize(const Tensor& z) const;
};

class CodecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a fitted autoencoder misses its held-out MSE target.
class ConvergenceError : public CodecError {
 public:
  ConvergenceError(const std::string& what, double achieved)
      : CodecError(what), achieved_mse(achieved) {}
  double achieved_mse;
};

struct CodecFitConfig {
  AutoencoderConfig model;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  float lr = 2e-3f;
  double holdout_fraction = 0.1;
  double target_mse = 5e-3;
};

/// Encoder/decoder pair mapping images [N, 1, H, W] to standardised latents
/// [N, C, H/f, W/f] and back.
class Codec {
 public:
  enum class Variant { Identity, ConvAutoencoder };

  Codec() = default;
  static Codec identity(std::size_t channels = 1);
  static Codec from_autoencoder(ConvAutoencoder ae, LatentStats stats);

  Variant variant() const { return variant_; }
  bool fitted() const { return fitted_; }
  std::size_t scale_factor() const;
  std::size_t latent_channels() const;
  const LatentStats& stats() const { return stats_; }
  const ConvAutoencoder* autoencoder() const { return ae_ ? &*ae_ : nullptr; }
  ConvAutoencoder* autoencoder() { return ae_ ? &*ae_ : nullptr; }

  Tensor encode(const Tensor& x) const;
  Tensor decode(const Tensor& y) const;

  /// Mean of every held-out entry of (decode(encode(x)) - x)^2.
  double reconstruction_mse(const Tensor& x) const;

  nlohmann::json config_json() const;

  /// Training outcome, empty for the identity codec.
  double holdout_mse = 0.0;
  std::vector<double> loss_curve;

 private:
  void require_fitted(const char* op) const;

  Variant variant_ = Variant::Identity;
  bool fitted_ = false;
  std::optional<ConvAutoencoder> ae_;
  LatentStats stats_;
};

/// Trains a conv autoencoder with plain reconstruction MSE on `normals`
/// ([N, 1, H, W], N >= 64), holding out the last fraction for validation, then
/// fits LatentStats on the training split. Throws ConvergenceError with the
/// achieved held-out MSE when it stays above `target_mse`.
Codec fit_autoencoder(const Tensor& normals, const CodecFitConfig& cfg, std::uint64_t seed);

}  // namespace rfc

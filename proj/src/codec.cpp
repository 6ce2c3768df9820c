#include "rfc/codec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rfc/optim.hpp"
#include "rfc/rng.hpp"

namespace rfc {

namespace {

void require_latent(const char* op, const Tensor& t, std::size_t channels) {
  if (t.rank() != 4 || t.dim(1) != channels) {
    throw ShapeError(std::string(op) + ": expected [N, " + std::to_string(channels) +
                     ", h, w], got " + shape_str(t.shape()));
  }
}

// Runs `fn` over batches of at most `batch` leading-axis rows.
template <class Fn>
Tensor batched(const Tensor& x, std::size_t batch, Fn&& fn) {
  std::vector<Tensor> parts;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < x.dim(0); start += batch) {
    idx.resize(std::min(batch, x.dim(0) - start));
    std::iota(idx.begin(), idx.end(), start);
    parts.push_back(fn(x.take(idx)));
  }
  if (parts.size() == 1) return std::move(parts[0]);
  Shape shape = parts[0].shape();
  shape[0] = x.dim(0);
  FloatBuffer out;
  out.reserve(numel(shape));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return Tensor(std::move(shape), std::move(out));
}

constexpr std::size_t kInferenceBatch = 64;

}  // namespace

LatentStats LatentStats::identity(std::size_t channels) {
  return {std::vector<float>(channels, 0.0f), std::vector<float>(channels, 1.0f)};
}

LatentStats LatentStats::fit(const Tensor& raw) {
  if (raw.rank() != 4) throw ShapeError("LatentStats: expected [N, C, h, w], got " + shape_str(raw.shape()));
  const std::size_t n = raw.dim(0), c = raw.dim(1), plane = raw.dim(2) * raw.dim(3);
  LatentStats s{std::vector<float>(c), std::vector<float>(c)};
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0, sq = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const float* p = raw.data().data() + (i * c + ch) * plane;
      for (std::size_t j = 0; j < plane; ++j) sum += p[j];
    }
    const double count = static_cast<double>(n * plane);
    const double mean = sum / count;
    for (std::size_t i = 0; i < n; ++i) {
      const float* p = raw.data().data() + (i * c + ch) * plane;
      for (std::size_t j = 0; j < plane; ++j) sq += (p[j] - mean) * (p[j] - mean);
    }
    s.mean[ch] = static_cast<float>(mean);
    s.std[ch] = std::max(static_cast<float>(std::sqrt(sq / count)), kMinStd);
  }
  return s;
}

Tensor LatentStats::standardize(const Tensor& raw) const {
  require_latent("standardize", raw, channels());
  Tensor out = raw;
  const std::size_t c = channels(), plane = raw.dim(2) * raw.dim(3);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t ch = (i / plane) % c;
    out[i] = (out[i] - mean[ch]) / std[ch];
  }
  return out;
}

Tensor LatentStats::destandardize(const Tensor& z) const {
  require_latent("destandardize", z, channels());
  Tensor out = z;
  const std::size_t c = channels(), plane = z.dim(2) * z.dim(3);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t ch = (i / plane) % c;
    out[i] = out[i] * std[ch] + mean[ch];
  }
  return out;
}

Codec Codec::identity(std::size_t channels) {
  Codec c;
  c.variant_ = Variant::Identity;
  c.fitted_ = true;
  c.stats_ = LatentStats::identity(channels);
  return c;
}

Codec Codec::from_autoencoder(ConvAutoencoder ae, LatentStats stats) {
  if (stats.channels() != ae.config().latent_channels) {
    throw CodecError("codec: latent stats have " + std::to_string(stats.channels()) +
                     " channels, autoencoder produces " +
                     std::to_string(ae.config().latent_channels));
  }
  Codec c;
  c.variant_ = Variant::ConvAutoencoder;
  c.fitted_ = true;
  c.ae_ = std::move(ae);
  c.stats_ = std::move(stats);
  return c;
}

std::size_t Codec::scale_factor() const {
  return ae_ ? ae_->config().scale_factor : 1;
}

std::size_t Codec::latent_channels() const {
  return ae_ ? ae_->config().latent_channels : stats_.channels();
}

void Codec::require_fitted(const char* op) const {
  if (!fitted_) throw CodecError(std::string(op) + ": codec has not been fitted");
}

Tensor Codec::encode(const Tensor& x) const {
  require_fitted("encode");
  if (!ae_) return stats_.standardize(x);
  return stats_.standardize(
      batched(x, kInferenceBatch, [&](const Tensor& b) { return ae_->encode(b); }));
}

Tensor Codec::decode(const Tensor& y) const {
  require_fitted("decode");
  if (!ae_) return stats_.destandardize(y);
  return batched(stats_.destandardize(y), kInferenceBatch,
                 [&](const Tensor& b) { return ae_->decode(b); });
}

double Codec::reconstruction_mse(const Tensor& x) const {
  const Tensor r = decode(encode(x));
  return sum_squares(r - x) / static_cast<double>(x.size());
}

nlohmann::json Codec::config_json() const {
  nlohmann::json j;
  j["variant"] = variant_ == Variant::Identity ? "identity" : "conv-autoencoder";
  j["latent_channels"] = latent_channels();
  j["scale_factor"] = scale_factor();
  j["stats"] = {{"mean", stats_.mean}, {"std", stats_.std}};
  if (ae_) j["model"] = to_json(ae_->config());
  j["holdout_mse"] = holdout_mse;
  return j;
}

Codec fit_autoencoder(const Tensor& normals, const CodecFitConfig& cfg, std::uint64_t seed) {
  const auto& mc = cfg.model;
  if (normals.rank() != 4 || normals.dim(1) != mc.in_channels) {
    throw ShapeError("fit_autoencoder: expected [N, " + std::to_string(mc.in_channels) +
                     ", H, W], got " + shape_str(normals.shape()));
  }
  if (normals.dim(0) < 64) {
    throw std::invalid_argument("fit_autoencoder: need at least 64 normal images, got " +
                                std::to_string(normals.dim(0)));
  }
  const std::size_t f = mc.scale_factor;
  if (normals.dim(2) % f != 0 || normals.dim(3) % f != 0) {
    throw ShapeError("fit_autoencoder: image dims " + shape_str(normals.shape()) +
                     " not divisible by scale factor " + std::to_string(f));
  }
  if (cfg.batch_size == 0 || cfg.lr <= 0) {
    throw std::invalid_argument("fit_autoencoder: batch_size and lr must be positive");
  }

  const std::size_t n = normals.dim(0);
  const auto n_hold = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(cfg.holdout_fraction * static_cast<double>(n))));
  const std::size_t n_train = n - n_hold;
  std::vector<std::size_t> train_idx(n_train), hold_idx(n_hold);
  std::iota(train_idx.begin(), train_idx.end(), 0);
  std::iota(hold_idx.begin(), hold_idx.end(), n_train);
  const Tensor train = normals.take(train_idx);
  const Tensor hold = normals.take(hold_idx);

  ConvAutoencoder ae = ConvAutoencoder::create(mc, derive_seed(seed, 0));
  AdamWState state = AdamWState::for_params(ae.params());
  AdamWConfig opt{.lr = cfg.lr, .weight_decay = 0.0f};
  Rng rng(derive_seed(seed, 1));
  std::vector<double> curve;
  const std::size_t steps_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = cfg.epochs * steps_per_epoch;
  std::size_t step = 0;
  std::vector<std::size_t> order(n_train);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < n_train; start += cfg.batch_size, ++step) {
      const std::span<const std::size_t> idx(order.data() + start,
                                             std::min(cfg.batch_size, n_train - start));
      const Tensor xb = train.take(idx);
      // Cosine decay keeps the late epochs from bouncing around the optimum.
      opt.lr = static_cast<float>(
          cfg.lr * 0.5 *
          (1 + std::cos(3.141592653589793 * static_cast<double>(step) /
                        static_cast<double>(std::max<std::size_t>(total_steps, 1)))));
      Graph g;
      Var x = g.constant(xb);
      Var rec = ae.decode(g, ae.encode(g, x));
      Var loss = ops::mul_scalar(ops::sq_norm(ops::sub(rec, x)),
                                 1.0f / static_cast<float>(xb.size()));
      const float lv = loss.value().item();
      if (!std::isfinite(lv)) {
        throw CodecError("fit_autoencoder: non-finite loss at epoch " + std::to_string(epoch));
      }
      g.backward(loss);
      clip_grad_norm(ae.params(), 1.0);
      adamw_step(ae.params(), state, opt);
      epoch_loss += lv * static_cast<double>(idx.size());
    }
    curve.push_back(epoch_loss / static_cast<double>(n_train));
  }

  const Tensor raw = batched(train, kInferenceBatch, [&](const Tensor& b) { return ae.encode(b); });
  Codec codec = Codec::from_autoencoder(std::move(ae), LatentStats::fit(raw));
  codec.loss_curve = std::move(curve);
  codec.holdout_mse = codec.reconstruction_mse(hold);
  if (!(codec.holdout_mse <= cfg.target_mse)) {
    throw ConvergenceError("fit_autoencoder: held-out MSE " + std::to_string(codec.holdout_mse) +
                               " above target " + std::to_string(cfg.target_mse),
                           codec.holdout_mse);
  }
  return codec;
}

}  // namespace rfc

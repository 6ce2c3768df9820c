#include "rfc/nets.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "rfc/rng.hpp"

namespace rfc {

namespace {

constexpr ConvSpec kSame3{1, 1};
constexpr ConvSpec kDown4{2, 1};  // 4x4 window, halves H and W; convT with the same spec doubles them

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

void add_conv(ParamSet& ps, Rng& rng, const std::string& name, std::size_t cin,
              std::size_t cout, std::size_t k, bool zero = false) {
  Shape ws{cout, cin, k, k};
  ps.add(name + ".w", zero ? Tensor(ws) : he_normal(ws, cin * k * k, rng));
  ps.add(name + ".b", Tensor({cout}));
}

void add_conv_transpose(ParamSet& ps, Rng& rng, const std::string& name, std::size_t cin,
                        std::size_t cout, std::size_t k, std::size_t stride) {
  ps.add(name + ".w", he_normal({cin, cout, k, k}, cin * k * k / (stride * stride), rng));
  ps.add(name + ".b", Tensor({cout}));
}

void add_linear(ParamSet& ps, Rng& rng, const std::string& name, std::size_t in,
                std::size_t out, bool zero = false) {
  ps.add(name + ".w", zero ? Tensor({in, out}) : he_normal({in, out}, in, rng));
  ps.add(name + ".b", Tensor({out}));
}

std::size_t conv_params(std::size_t cin, std::size_t cout, std::size_t k) {
  return cout * cin * k * k + cout;
}
std::size_t linear_params(std::size_t in, std::size_t out) { return in * out + out; }

using Binder = std::function<Var(const std::string&)>;

Var conv(const Binder& bind, const std::string& name, Var x, ConvSpec spec) {
  return ops::add_bias(ops::conv2d(x, bind(name + ".w"), spec), bind(name + ".b"));
}

Var conv_t(const Binder& bind, const std::string& name, Var x, ConvSpec spec) {
  return ops::add_bias(ops::conv2d_transpose(x, bind(name + ".w"), spec), bind(name + ".b"));
}

Var linear(const Binder& bind, const std::string& name, Var x) {
  return ops::add_bias(ops::matmul(x, bind(name + ".w")), bind(name + ".b"));
}

// conv -> +time projection -> silu -> conv -> silu
void add_block(ParamSet& ps, Rng& rng, const std::string& name, std::size_t cin,
               std::size_t cout, std::size_t emb_dim) {
  add_conv(ps, rng, name + ".conv1", cin, cout, 3);
  add_linear(ps, rng, name + ".time", emb_dim, cout);
  add_conv(ps, rng, name + ".conv2", cout, cout, 3);
}

std::size_t block_params(std::size_t cin, std::size_t cout, std::size_t emb_dim) {
  return conv_params(cin, cout, 3) + linear_params(emb_dim, cout) + conv_params(cout, cout, 3);
}

Var block(const Binder& bind, const std::string& name, Var h, Var emb) {
  Var a = conv(bind, name + ".conv1", h, kSame3);
  a = ops::add_channel_embedding(a, linear(bind, name + ".time", emb));
  a = ops::silu(a);
  return ops::silu(conv(bind, name + ".conv2", a, kSame3));
}

void check_times(std::span<const float> t, std::size_t batch) {
  if (t.size() != batch) {
    throw ShapeError("velocity_forward: " + std::to_string(t.size()) +
                     " time values for batch of " + std::to_string(batch));
  }
  for (float v : t) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw std::invalid_argument("velocity_forward: t = " + std::to_string(v) +
                                  " outside [0, 1]");
    }
  }
}

}  // namespace

Tensor time_embedding(std::span<const float> t, std::size_t num_frequencies) {
  Tensor out({t.size(), 2 * num_frequencies});
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t k = 0; k < num_frequencies; ++k) {
      const double arg = std::ldexp(1.0, static_cast<int>(k)) * std::numbers::pi * t[i];
      out[i * 2 * num_frequencies + k] = static_cast<float>(std::sin(arg));
      out[i * 2 * num_frequencies + num_frequencies + k] = static_cast<float>(std::cos(arg));
    }
  }
  return out;
}

UNetPreset parse_unet_preset(const std::string& name) {
  if (name == "XS" || name == "xs") return UNetPreset::XS;
  if (name == "S" || name == "s") return UNetPreset::S;
  if (name == "M" || name == "m") return UNetPreset::M;
  throw std::invalid_argument("unknown UNet preset '" + name + "' (expected XS, S or M)");
}

UNetConfig unet_preset(UNetPreset preset, std::size_t channels) {
  UNetConfig cfg;
  cfg.channels = channels;
  cfg.channel_mult = {1, 2, 2};
  switch (preset) {
    case UNetPreset::XS: cfg.base_channels = 16; break;
    case UNetPreset::S: cfg.base_channels = 32; break;
    case UNetPreset::M: cfg.base_channels = 64; break;
  }
  return cfg;
}

std::size_t param_count(const MlpConfig& cfg) {
  std::size_t in = cfg.data_dim + 2 * cfg.time_frequencies;
  std::size_t total = 0;
  for (std::size_t width : cfg.hidden) {
    total += linear_params(in, width);
    in = width;
  }
  return total + linear_params(in, cfg.data_dim);
}

std::size_t param_count(const UNetConfig& cfg) {
  const std::size_t emb = 2 * cfg.time_frequencies;
  const std::size_t d = cfg.depth();
  auto ch = [&](std::size_t l) { return cfg.base_channels * cfg.channel_mult[l]; };
  std::size_t total = conv_params(cfg.channels, ch(0), 3);
  for (std::size_t l = 0; l < d; ++l) {
    total += block_params(ch(l), ch(l), emb) + conv_params(ch(l), ch(l + 1), 4);
  }
  total += block_params(ch(d), ch(d), emb);
  for (std::size_t l = 0; l < d; ++l) {
    total += ch(l + 1) * ch(l) * 16 + ch(l);  // transposed conv
    total += block_params(2 * ch(l), ch(l), emb);
  }
  return total + conv_params(ch(0), cfg.channels, 3);
}

// ---------------------------------------------------------------------------
// VelocityModel

VelocityModel VelocityModel::mlp(const MlpConfig& cfg, std::uint64_t seed) {
  if (cfg.data_dim == 0) throw std::invalid_argument("mlp: data_dim must be positive");
  VelocityModel m;
  m.config_ = cfg;
  Rng rng(seed);
  std::size_t in = cfg.data_dim + 2 * cfg.time_frequencies;
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
    add_linear(m.params_, rng, "hidden" + std::to_string(i), in, cfg.hidden[i]);
    in = cfg.hidden[i];
  }
  add_linear(m.params_, rng, "out", in, cfg.data_dim, /*zero=*/true);
  return m;
}

VelocityModel VelocityModel::unet(const UNetConfig& cfg, std::uint64_t seed) {
  if (cfg.channel_mult.empty() || cfg.base_channels == 0 || cfg.channels == 0) {
    throw std::invalid_argument("unet: channels, base_channels and channel_mult must be non-empty");
  }
  VelocityModel m;
  m.config_ = cfg;
  Rng rng(seed);
  const std::size_t emb = 2 * cfg.time_frequencies;
  const std::size_t d = cfg.depth();
  auto ch = [&](std::size_t l) { return cfg.base_channels * cfg.channel_mult[l]; };
  ParamSet& ps = m.params_;
  add_conv(ps, rng, "stem", cfg.channels, ch(0), 3);
  for (std::size_t l = 0; l < d; ++l) {
    add_block(ps, rng, "enc" + std::to_string(l), ch(l), ch(l), emb);
    add_conv(ps, rng, "down" + std::to_string(l), ch(l), ch(l + 1), 4);
  }
  add_block(ps, rng, "mid", ch(d), ch(d), emb);
  for (std::size_t l = d; l-- > 0;) {
    add_conv_transpose(ps, rng, "up" + std::to_string(l), ch(l + 1), ch(l), 4, 2);
    add_block(ps, rng, "dec" + std::to_string(l), 2 * ch(l), ch(l), emb);
  }
  add_conv(ps, rng, "out", ch(0), cfg.channels, 3, /*zero=*/true);
  return m;
}

VelocityModel VelocityModel::from_config(const nlohmann::json& cfg, std::uint64_t seed) {
  const std::string kind = cfg.at("kind");
  if (kind == "mlp") {
    MlpConfig c;
    c.data_dim = cfg.at("data_dim");
    c.hidden = cfg.at("hidden").get<std::vector<std::size_t>>();
    c.time_frequencies = cfg.value("time_frequencies", kDefaultTimeFrequencies);
    return mlp(c, seed);
  }
  if (kind == "unet") {
    UNetConfig c;
    c.channels = cfg.at("channels");
    c.base_channels = cfg.at("base_channels");
    c.channel_mult = cfg.at("channel_mult").get<std::vector<std::size_t>>();
    c.time_frequencies = cfg.value("time_frequencies", kDefaultTimeFrequencies);
    return unet(c, seed);
  }
  throw std::invalid_argument("velocity model: unknown kind '" + kind + "'");
}

nlohmann::json VelocityModel::config_json() const {
  if (const auto* c = std::get_if<MlpConfig>(&config_)) {
    return {{"kind", "mlp"},
            {"data_dim", c->data_dim},
            {"hidden", c->hidden},
            {"time_frequencies", c->time_frequencies}};
  }
  const auto& c = std::get<UNetConfig>(config_);
  return {{"kind", "unet"},
          {"channels", c.channels},
          {"base_channels", c.base_channels},
          {"channel_mult", c.channel_mult},
          {"time_frequencies", c.time_frequencies}};
}

std::size_t VelocityModel::analytic_param_count() const {
  return std::visit([](const auto& c) { return param_count(c); }, config_);
}

void VelocityModel::check_sample_shape(const Shape& s) const {
  if (const auto* c = std::get_if<MlpConfig>(&config_)) {
    if (s.size() != 1 || s[0] != c->data_dim) {
      throw ShapeError("velocity_forward: MLP expects samples [" +
                       std::to_string(c->data_dim) + "], got " + shape_str(s));
    }
    return;
  }
  const auto& c = std::get<UNetConfig>(config_);
  const std::size_t div = std::size_t{1} << c.depth();
  if (s.size() != 3 || s[0] != c.channels || s[1] % div || s[2] % div || s[1] == 0 || s[2] == 0) {
    throw ShapeError("velocity_forward: UNet expects samples [" + std::to_string(c.channels) +
                     "xHxW] with H, W divisible by " + std::to_string(div) + ", got " +
                     shape_str(s));
  }
}

Var VelocityModel::forward_impl(Graph& g, Var y, std::span<const float> t,
                                const Binder& bind) const {
  const Tensor& yv = y.value();
  if (yv.rank() == 0) throw ShapeError("velocity_forward: missing batch axis");
  check_sample_shape(Shape(yv.shape().begin() + 1, yv.shape().end()));
  check_times(t, yv.dim(0));

  if (const auto* c = std::get_if<MlpConfig>(&config_)) {
    Var emb = g.constant(time_embedding(t, c->time_frequencies));
    Var h = ops::concat_channels(y, emb);
    for (std::size_t i = 0; i < c->hidden.size(); ++i) {
      h = ops::silu(linear(bind, "hidden" + std::to_string(i), h));
    }
    return linear(bind, "out", h);
  }

  const auto& c = std::get<UNetConfig>(config_);
  const std::size_t d = c.depth();
  Var emb = g.constant(time_embedding(t, c.time_frequencies));
  Var h = conv(bind, "stem", y, kSame3);
  std::vector<Var> skips;
  for (std::size_t l = 0; l < d; ++l) {
    h = block(bind, "enc" + std::to_string(l), h, emb);
    skips.push_back(h);
    h = ops::silu(conv(bind, "down" + std::to_string(l), h, kDown4));
  }
  h = block(bind, "mid", h, emb);
  for (std::size_t l = d; l-- > 0;) {
    h = ops::silu(conv_t(bind, "up" + std::to_string(l), h, kDown4));
    h = ops::concat_channels(h, skips[l]);
    h = block(bind, "dec" + std::to_string(l), h, emb);
  }
  return conv(bind, "out", h, kSame3);
}

Var VelocityModel::forward(Graph& g, Var y, std::span<const float> t) {
  return forward_impl(g, y, t, [&](const std::string& name) {
    return g.parameter(params_.at(name));
  });
}

Tensor VelocityModel::predict(const Tensor& y, std::span<const float> t) const {
  Graph g(GradMode::Off);
  Var out = forward_impl(g, g.constant(y), t, [&](const std::string& name) {
    return g.constant(params_.at(name).value);
  });
  return out.value();
}

Tensor VelocityModel::predict(const Tensor& y, float t) const {
  if (y.rank() == 0) throw ShapeError("velocity_forward: missing batch axis");
  std::vector<float> ts(y.dim(0), t);
  return predict(y, ts);
}

// ---------------------------------------------------------------------------
// ConvAutoencoder

std::size_t AutoencoderConfig::stages() const {
  std::size_t s = 0;
  std::size_t f = scale_factor;
  while (f > 1 && f % 2 == 0) {
    f /= 2;
    ++s;
  }
  if (f != 1 || s == 0) {
    throw std::invalid_argument("autoencoder: scale factor " + std::to_string(scale_factor) +
                                " must be a power of two >= 2");
  }
  return s;
}

std::size_t AutoencoderConfig::width(std::size_t stage) const {
  return std::min(base_width << stage, max_width);
}

ConvAutoencoder ConvAutoencoder::create(const AutoencoderConfig& cfg, std::uint64_t seed) {
  ConvAutoencoder ae;
  ae.cfg_ = cfg;
  const std::size_t s = cfg.stages();
  Rng rng(seed);
  ParamSet& ps = ae.params_;
  add_conv(ps, rng, "enc.stem", cfg.in_channels, cfg.width(0), 3);
  for (std::size_t i = 0; i < s; ++i) {
    add_conv(ps, rng, "enc.down" + std::to_string(i), cfg.width(i), cfg.width(i + 1), 4);
    add_conv(ps, rng, "enc.res" + std::to_string(i), cfg.width(i + 1), cfg.width(i + 1), 3);
  }
  add_conv(ps, rng, "enc.latent", cfg.width(s), cfg.latent_channels, 3);
  add_conv(ps, rng, "dec.stem", cfg.latent_channels, cfg.width(s), 3);
  for (std::size_t i = s; i-- > 0;) {
    add_conv_transpose(ps, rng, "dec.up" + std::to_string(i), cfg.width(i + 1), cfg.width(i), 4, 2);
    add_conv(ps, rng, "dec.res" + std::to_string(i), cfg.width(i), cfg.width(i), 3);
  }
  add_conv(ps, rng, "dec.out", cfg.width(0), cfg.in_channels, 3);
  return ae;
}

Var ConvAutoencoder::encode_impl(Graph& g, Var x, const Binder& bind) const {
  (void)g;
  const Tensor& xv = x.value();
  if (xv.rank() != 4 || xv.dim(1) != cfg_.in_channels || xv.dim(2) % cfg_.scale_factor ||
      xv.dim(3) % cfg_.scale_factor) {
    throw ShapeError("autoencoder encode: expected [N, " + std::to_string(cfg_.in_channels) +
                     ", H, W] with H, W divisible by " + std::to_string(cfg_.scale_factor) +
                     ", got " + shape_str(xv.shape()));
  }
  Var h = ops::silu(conv(bind, "enc.stem", x, kSame3));
  for (std::size_t i = 0; i < cfg_.stages(); ++i) {
    h = ops::silu(conv(bind, "enc.down" + std::to_string(i), h, kDown4));
    h = ops::silu(conv(bind, "enc.res" + std::to_string(i), h, kSame3));
  }
  return conv(bind, "enc.latent", h, kSame3);
}

Var ConvAutoencoder::decode_impl(Graph& g, Var z, const Binder& bind) const {
  (void)g;
  const Tensor& zv = z.value();
  if (zv.rank() != 4 || zv.dim(1) != cfg_.latent_channels) {
    throw ShapeError("autoencoder decode: expected [N, " + std::to_string(cfg_.latent_channels) +
                     ", h, w], got " + shape_str(zv.shape()));
  }
  Var h = ops::silu(conv(bind, "dec.stem", z, kSame3));
  for (std::size_t i = cfg_.stages(); i-- > 0;) {
    h = ops::silu(conv_t(bind, "dec.up" + std::to_string(i), h, kDown4));
    h = ops::silu(conv(bind, "dec.res" + std::to_string(i), h, kSame3));
  }
  return conv(bind, "dec.out", h, kSame3);
}

Var ConvAutoencoder::encode(Graph& g, Var x) {
  return encode_impl(g, x, [&](const std::string& n) { return g.parameter(params_.at(n)); });
}

Var ConvAutoencoder::decode(Graph& g, Var z) {
  return decode_impl(g, z, [&](const std::string& n) { return g.parameter(params_.at(n)); });
}

Tensor ConvAutoencoder::encode(const Tensor& x) const {
  Graph g(GradMode::Off);
  return encode_impl(g, g.constant(x), [&](const std::string& n) {
           return g.constant(params_.at(n).value);
         }).value();
}

Tensor ConvAutoencoder::decode(const Tensor& z) const {
  Graph g(GradMode::Off);
  return decode_impl(g, g.constant(z), [&](const std::string& n) {
           return g.constant(params_.at(n).value);
         }).value();
}

nlohmann::json to_json(const AutoencoderConfig& cfg) {
  return {{"in_channels", cfg.in_channels},
          {"latent_channels", cfg.latent_channels},
          {"scale_factor", cfg.scale_factor},
          {"base_width", cfg.base_width},
          {"max_width", cfg.max_width}};
}

AutoencoderConfig autoencoder_config_from_json(const nlohmann::json& j) {
  AutoencoderConfig cfg;
  cfg.in_channels = j.value("in_channels", cfg.in_channels);
  cfg.latent_channels = j.value("latent_channels", cfg.latent_channels);
  cfg.scale_factor = j.value("scale_factor", cfg.scale_factor);
  cfg.base_width = j.value("base_width", cfg.base_width);
  cfg.max_width = j.value("max_width", cfg.max_width);
  return cfg;
}

}  // namespace rfc

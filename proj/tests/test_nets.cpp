#include <gtest/gtest.h>

#include <cmath>

#include "rfc/nets.hpp"
#include "rfc/rng.hpp"

using namespace rfc;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(normal(rng));
  return t;
}

}  // namespace

TEST(TimeEmbedding, SinCosPairs) {
  const float t[] = {0.25f};
  const Tensor e = time_embedding(t, 3);
  ASSERT_EQ(e.shape(), (Shape{1, 6}));
  for (std::size_t k = 0; k < 3; ++k) {
    const double arg = std::ldexp(M_PI * 0.25, static_cast<int>(k));
    EXPECT_NEAR(e[k], std::sin(arg), 1e-6);
    EXPECT_NEAR(e[3 + k], std::cos(arg), 1e-6);
  }
}

TEST(Velocity, ZeroInitialisedOutputGivesZeroField) {
  auto mlp = VelocityModel::mlp({}, 1);
  auto unet = VelocityModel::unet(unet_preset(UNetPreset::XS, 4), 1);
  const Tensor v1 = mlp.predict(random_tensor({5, 2}, 3), 0.3f);
  const Tensor v2 = unet.predict(random_tensor({2, 4, 16, 16}, 4), 0.7f);
  for (float v : v1.data()) EXPECT_EQ(v, 0.0f);
  for (float v : v2.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(mlp.params().at("out.w").value, Tensor(mlp.params().at("out.w").value.shape()));
  EXPECT_EQ(unet.params().at("out.w").value, Tensor(unet.params().at("out.w").value.shape()));
}

TEST(Velocity, DeterministicForwardAndInit) {
  auto a = VelocityModel::unet(unet_preset(UNetPreset::XS, 4), 42);
  auto b = VelocityModel::unet(unet_preset(UNetPreset::XS, 4), 42);
  EXPECT_TRUE(a.params() == b.params());
  // Perturb the output layer so the field is non-trivial.
  Rng rng(1);
  for (auto& v : a.params().at("out.w").value.data()) v = static_cast<float>(0.1 * normal(rng));
  const Tensor y = random_tensor({3, 4, 16, 16}, 9);
  const Tensor o1 = a.predict(y, 0.5f);
  const Tensor o2 = a.predict(y, 0.5f);
  EXPECT_EQ(o1, o2);
  EXPECT_EQ(o1.shape(), y.shape());
  EXPECT_TRUE(o1.all_finite());
}

TEST(Velocity, SeedsChangeHiddenWeights) {
  auto a = VelocityModel::mlp({}, 1);
  auto b = VelocityModel::mlp({}, 2);
  EXPECT_NE(a.params().at(a.params()[0].name).value, b.params().at(b.params()[0].name).value);
}

TEST(Velocity, ParamCountMatchesFormula) {
  for (auto p : {UNetPreset::XS, UNetPreset::S, UNetPreset::M}) {
    auto m = VelocityModel::unet(unet_preset(p, 4), 0);
    EXPECT_EQ(m.params().scalar_count(), m.analytic_param_count());
  }
  for (std::size_t d : {1, 2, 7}) {
    auto m = VelocityModel::mlp({.data_dim = d, .hidden = {32, 16}}, 0);
    EXPECT_EQ(m.params().scalar_count(), param_count(MlpConfig{.data_dim = d, .hidden = {32, 16}}));
  }
  const auto xs = VelocityModel::unet(unet_preset(UNetPreset::XS, 4), 0).params().scalar_count();
  const auto s = VelocityModel::unet(unet_preset(UNetPreset::S, 4), 0).params().scalar_count();
  const auto m = VelocityModel::unet(unet_preset(UNetPreset::M, 4), 0).params().scalar_count();
  EXPECT_LT(xs, s);
  EXPECT_LT(s, m);
}

TEST(Velocity, ShapePreservedForDivisibleSizes) {
  auto m = VelocityModel::unet(unet_preset(UNetPreset::XS, 4), 5);
  Rng rng(2);
  for (auto& v : m.params().at("out.w").value.data()) v = static_cast<float>(0.1 * normal(rng));
  for (std::size_t h : {4, 8, 16, 32}) {
    const Tensor y = random_tensor({1, 4, h, 2 * h}, h);
    EXPECT_EQ(m.predict(y, 0.0f).shape(), y.shape());
  }
  EXPECT_THROW(m.predict(random_tensor({1, 4, 6, 6}, 1), 0.0f), ShapeError);
  EXPECT_THROW(m.predict(random_tensor({1, 3, 16, 16}, 1), 0.0f), ShapeError);
}

TEST(Velocity, RejectsTimeOutsideUnitInterval) {
  auto m = VelocityModel::mlp({}, 0);
  const Tensor y({2, 2});
  EXPECT_THROW(m.predict(y, 1.5f), std::invalid_argument);
  EXPECT_THROW(m.predict(y, -0.1f), std::invalid_argument);
  const float t[] = {0.5f};
  EXPECT_THROW(m.predict(y, t), ShapeError);
}

TEST(Velocity, ConfigRoundTrip) {
  auto m = VelocityModel::unet(unet_preset(UNetPreset::S, 4), 3);
  auto r = VelocityModel::from_config(m.config_json(), 3);
  EXPECT_TRUE(m.params() == r.params());
}

TEST(Velocity, GradientsReachEveryTrainableParameter) {
  auto m = VelocityModel::unet(unet_preset(UNetPreset::XS, 4), 8);
  Rng rng(4);
  for (auto& v : m.params().at("out.w").value.data()) v = static_cast<float>(0.1 * normal(rng));
  Graph g;
  const float t[] = {0.2f, 0.9f};
  Var out = m.forward(g, g.constant(random_tensor({2, 4, 16, 16}, 5)), t);
  g.backward(ops::sq_norm(out));
  for (const auto& p : m.params()) {
    EXPECT_GT(sum_squares(p.grad), 0.0) << p.name;
  }
}

TEST(Autoencoder, Shapes) {
  for (std::size_t f : {4, 8}) {
    auto ae = ConvAutoencoder::create({.scale_factor = f}, 1);
    const Tensor x = random_tensor({2, 1, 64, 64}, 1);
    const Tensor z = ae.encode(x);
    EXPECT_EQ(z.shape(), (Shape{2, 4, 64 / f, 64 / f}));
    EXPECT_EQ(ae.decode(z).shape(), x.shape());
  }
  EXPECT_THROW(ConvAutoencoder::create({.scale_factor = 3}, 1), std::invalid_argument);
  auto ae = ConvAutoencoder::create({}, 1);
  EXPECT_THROW(ae.encode(random_tensor({1, 1, 30, 30}, 1)), ShapeError);
}

TEST(Autoencoder, ConfigJsonRoundTrip) {
  AutoencoderConfig c{.latent_channels = 3, .scale_factor = 8, .base_width = 8, .max_width = 24};
  const auto r = autoencoder_config_from_json(to_json(c));
  EXPECT_EQ(r.latent_channels, 3u);
  EXPECT_EQ(r.scale_factor, 8u);
  EXPECT_EQ(r.base_width, 8u);
  EXPECT_EQ(r.max_width, 24u);
}

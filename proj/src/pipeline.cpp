#include "rfc/pipeline.hpp"

namespace rfc {

std::uint64_t stream_seed(std::uint64_t run_seed, Stream s) {
  return derive_seed(run_seed, static_cast<std::uint64_t>(s));
}

nlohmann::json seed_table(std::uint64_t run_seed) {
  const std::pair<const char*, Stream> names[] = {
      {"normals", Stream::Normals},       {"codec", Stream::Codec},
      {"textures", Stream::Textures},     {"corruption", Stream::Corruption},
      {"model_init", Stream::ModelInit},  {"train", Stream::Train},
      {"eval_cases", Stream::EvalCases},  {"reflow", Stream::Reflow},
  };
  nlohmann::json j = {{"run_seed", run_seed}};
  for (const auto& [name, s] : names) j[name] = stream_seed(run_seed, s);
  return j;
}

NormalSet gen_normals(std::size_t n, std::size_t size, std::uint64_t seed) {
  NormalSet set;
  std::vector<Tensor> images;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t s = derive_seed(seed, i);
    Phantom p = gen_phantom(s, size);
    images.push_back(p.image.reshaped({1, size, size}));
    set.foregrounds.push_back(std::move(p.foreground));
    set.seeds.push_back(s);
  }
  set.images = Tensor::stack(images);
  return set;
}

Codec build_codec(const RunConfig& cfg, const Tensor& normals) {
  if (cfg.codec_variant == "identity") return Codec::identity(normals.dim(1));
  return fit_autoencoder(normals, cfg.codec, stream_seed(cfg.seed, Stream::Codec));
}

LatentTrainingSet prepare_latents(const RunConfig& cfg, const Codec& codec, const NormalSet& normals) {
  LatentTrainingSet set;
  set.latents = codec.encode(normals.images);
  for (const auto& fg : normals.foregrounds) {
    set.foregrounds.push_back(latent_foreground(fg, codec.scale_factor()));
  }
  set.textures = TextureBank::procedural(codec, cfg.data.textures, cfg.data.image_size,
                                         stream_seed(cfg.seed, Stream::Textures));
  if (!cfg.data.texture_dir.empty()) {
    set.textures.add_pgm_dir(codec, cfg.data.texture_dir, cfg.data.image_size);
  }
  return set;
}

CorruptionPairs make_pair_source(const RunConfig& cfg, const LatentTrainingSet& set, Stream stream) {
  return CorruptionPairs(set.latents, set.foregrounds, cfg.corruption,
                         set.textures.empty() ? nullptr : &set.textures, stream_seed(cfg.seed, stream));
}

VelocityModel init_velocity(const RunConfig& cfg, const Codec& codec) {
  return VelocityModel::unet(unet_preset(cfg.net_preset, codec.latent_channels()),
                             stream_seed(cfg.seed, Stream::ModelInit));
}

std::vector<LesionCase> gen_eval_cases(const RunConfig& cfg) {
  return gen_lesion_cases(cfg.data.eval_cases, stream_seed(cfg.seed, Stream::EvalCases),
                          cfg.data.image_size, cfg.data.min_severity);
}

}  // namespace rfc

#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "rfc/config.hpp"
#include "rfc/corruption.hpp"
#include "rfc/flow.hpp"
#include "rfc/phantom.hpp"

namespace rfc {

/// Independent RNG streams derived from the run seed.
enum class Stream : std::uint64_t {
  Normals = 1,
  Codec = 2,
  Textures = 3,
  Corruption = 4,
  ModelInit = 5,
  Train = 6,
  EvalCases = 7,
  Reflow = 8,
};

std::uint64_t stream_seed(std::uint64_t run_seed, Stream s);
/// Name -> seed for every stream, for seed logs.
nlohmann::json seed_table(std::uint64_t run_seed);

struct NormalSet {
  Tensor images;                  // [N, 1, S, S]
  std::vector<Mask> foregrounds;  // image grid
  std::vector<std::uint64_t> seeds;
};

/// Unlesioned phantoms; phantom i uses derive_seed(seed, i).
NormalSet gen_normals(std::size_t n, std::size_t size, std::uint64_t seed);

/// Identity codec or a conv autoencoder fitted on `normals`.
Codec build_codec(const RunConfig& cfg, const Tensor& normals);

/// Everything the corruption sampler needs. Keep it alive (and in place) for
/// as long as a CorruptionPairs built from it is in use.
struct LatentTrainingSet {
  Tensor latents;                 // [N, C, h, w]
  std::vector<Mask> foregrounds;  // latent grid
  TextureBank textures;
};

LatentTrainingSet prepare_latents(const RunConfig& cfg, const Codec& codec, const NormalSet& normals);
CorruptionPairs make_pair_source(const RunConfig& cfg, const LatentTrainingSet& set, Stream stream);

/// Fresh UNet of the configured preset sized for the codec's latents.
VelocityModel init_velocity(const RunConfig& cfg, const Codec& codec);

/// Held-out lesion cases drawn from their own stream.
std::vector<LesionCase> gen_eval_cases(const RunConfig& cfg);

}  // namespace rfc

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "rfc/codec.hpp"
#include "rfc/corruption.hpp"
#include "rfc/flow.hpp"
#include "rfc/nets.hpp"
#include "rfc/scoring.hpp"

namespace rfc {

/// Validation failure tied to a dotted config path such as "train.lr".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field(std::move(field)) {}
  std::string field;
};

inline constexpr const char* kOutputRootEnv = "RFC_OUTPUT_ROOT";

struct DataConfig {
  std::size_t image_size = 64;
  std::size_t train_normals = 512;
  std::size_t eval_cases = 200;
  double min_severity = 0.3;
  std::size_t textures = 32;
  std::string texture_dir;  // optional directory of extra *.pgm textures
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir;
  DataConfig data;
  std::string codec_variant = "conv-autoencoder";
  CodecFitConfig codec;
  CorruptionConfig corruption;
  UNetPreset net_preset = UNetPreset::XS;
  TrainConfig train{.epochs = 80};
  ReflowConfig reflow;
  EvalConfig eval;

  /// Full tree with every default filled in.
  nlohmann::json to_json() const;
};

/// The default configuration tree.
nlohmann::json default_config_json();

/// Applies "a.b.c=value" overrides; the value is parsed as JSON when possible
/// and kept as a string otherwise. Unknown paths raise ConfigError.
void apply_override(nlohmann::json& tree, const std::string& assignment);

/// Merges `user` onto the defaults (unknown keys and type mismatches raise
/// ConfigError), applies `overrides`, then validates every field.
RunConfig resolve_config(const nlohmann::json& user, const std::vector<std::string>& overrides = {});

/// Reads a JSON config file; an empty path yields the defaults.
nlohmann::json load_config_file(const std::filesystem::path& path);

}  // namespace rfc

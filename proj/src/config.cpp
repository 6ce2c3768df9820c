#include "rfc/config.hpp"

#include "rfc/io.hpp"

namespace rfc {

using nlohmann::json;

namespace {

const char* preset_name(UNetPreset p) {
  switch (p) {
    case UNetPreset::XS: return "XS";
    case UNetPreset::S: return "S";
    case UNetPreset::M: return "M";
  }
  return "?";
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) {
    // An integer default may not take a fractional or negative value.
    if (a.is_number_unsigned()) return b.is_number_unsigned() || (b.is_number_integer() && b.get<std::int64_t>() >= 0);
    if (a.is_number_integer()) return b.is_number_integer();
    return true;
  }
  return a.type() == b.type();
}

void merge(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [key, value] : user.items()) {
    const std::string p = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError(p, "unknown field");
    json& slot = base[key];
    if (slot.is_object()) {
      merge(slot, value, p);
    } else {
      if (!same_kind(slot, value)) throw ConfigError(p, "expected " + std::string(slot.type_name()) + ", got " + value.type_name());
      slot = value;
    }
  }
}

template <typename T>
T get(const json& tree, const std::string& path) {
  const json* node = &tree;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    node = &node->at(path.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  try {
    return node->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path, "wrong type");
  }
}

void require(bool ok, const std::string& field, const std::string& msg) {
  if (!ok) throw ConfigError(field, msg);
}

// Validators report "section.field: reason".
[[noreturn]] void rethrow_validation(const std::invalid_argument& e) {
  const std::string s = e.what();
  const auto colon = s.find(": ");
  if (colon == std::string::npos) throw ConfigError("<config>", s);
  throw ConfigError(s.substr(0, colon), s.substr(colon + 2));
}

}  // namespace

json default_config_json() {
  const RunConfig d;
  return d.to_json();
}

json RunConfig::to_json() const {
  const auto& m = codec.model;
  const auto& c = corruption;
  return {
      {"seed", seed},
      {"output_dir", output_dir},
      {"data",
       {{"image_size", data.image_size},
        {"train_normals", data.train_normals},
        {"eval_cases", data.eval_cases},
        {"min_severity", data.min_severity},
        {"textures", data.textures},
        {"texture_dir", data.texture_dir}}},
      {"codec",
       {{"variant", codec_variant},
        {"latent_channels", m.latent_channels},
        {"scale_factor", m.scale_factor},
        {"base_width", m.base_width},
        {"max_width", m.max_width},
        {"epochs", codec.epochs},
        {"batch_size", codec.batch_size},
        {"lr", codec.lr},
        {"holdout_fraction", codec.holdout_fraction},
        {"target_mse", codec.target_mse}}},
      {"corruption",
       {{"min_regions", c.min_regions},
        {"max_regions", c.max_regions},
        {"min_walk_steps", c.min_walk_steps},
        {"max_walk_steps", c.max_walk_steps},
        {"min_alpha", c.min_alpha},
        {"max_alpha", c.max_alpha},
        {"noise_weight", c.noise_weight},
        {"texture_weight", c.texture_weight},
        {"max_masked_fraction", c.max_masked_fraction}}},
      {"net", {{"preset", preset_name(net_preset)}}},
      {"train",
       {{"batch_size", train.batch_size},
        {"lr", train.lr},
        {"reflow_lr", train.reflow_lr},
        {"epochs", train.epochs},
        {"clip_norm", train.clip_norm},
        {"weight_decay", train.weight_decay}}},
      {"reflow",
       {{"epochs", reflow.train.epochs},
        {"teacher_steps", reflow.teacher_steps},
        {"pair_rounds", reflow.pair_rounds}}},
      {"eval", {{"steps", eval.steps}, {"image_reference", image_reference_name(eval.image_reference)}}},
  };
}

void apply_override(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(assignment, "override must look like path=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = text;

  // Build a nested object for the path and merge it, so overrides get the
  // same unknown-field and type checks as file values.
  json patch = value;
  std::size_t end = path.size();
  while (true) {
    const auto dot = path.rfind('.', end - 1);
    const std::string key = path.substr(dot == std::string::npos ? 0 : dot + 1,
                                        end - (dot == std::string::npos ? 0 : dot + 1));
    if (key.empty()) throw ConfigError(path, "empty path component");
    patch = json{{key, patch}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  merge(tree, patch, "");
}

json load_config_file(const std::filesystem::path& path) {
  if (path.empty()) return json::object();
  std::string text;
  try {
    text = read_text(path);
  } catch (const IoError& e) {
    throw ConfigError(path.string(), e.what());
  }
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError(path.string(), "not valid JSON");
  return j;
}

RunConfig resolve_config(const json& user, const std::vector<std::string>& overrides) {
  json tree = default_config_json();
  if (!user.is_null()) merge(tree, user, "");
  for (const auto& o : overrides) apply_override(tree, o);

  RunConfig r;
  r.seed = get<std::uint64_t>(tree, "seed");
  r.output_dir = get<std::string>(tree, "output_dir");

  auto& d = r.data;
  d.image_size = get<std::size_t>(tree, "data.image_size");
  d.train_normals = get<std::size_t>(tree, "data.train_normals");
  d.eval_cases = get<std::size_t>(tree, "data.eval_cases");
  d.min_severity = get<double>(tree, "data.min_severity");
  d.textures = get<std::size_t>(tree, "data.textures");
  d.texture_dir = get<std::string>(tree, "data.texture_dir");
  require(d.image_size >= 16, "data.image_size", "must be at least 16");
  require(d.train_normals >= 64, "data.train_normals", "must be at least 64");
  require(d.min_severity > 0 && d.min_severity <= 1, "data.min_severity", "must lie in (0, 1]");

  r.codec_variant = get<std::string>(tree, "codec.variant");
  require(r.codec_variant == "identity" || r.codec_variant == "conv-autoencoder", "codec.variant",
          "must be 'identity' or 'conv-autoencoder'");
  auto& m = r.codec.model;
  m.latent_channels = get<std::size_t>(tree, "codec.latent_channels");
  m.scale_factor = get<std::size_t>(tree, "codec.scale_factor");
  m.base_width = get<std::size_t>(tree, "codec.base_width");
  m.max_width = get<std::size_t>(tree, "codec.max_width");
  r.codec.epochs = get<std::size_t>(tree, "codec.epochs");
  r.codec.batch_size = get<std::size_t>(tree, "codec.batch_size");
  r.codec.lr = get<float>(tree, "codec.lr");
  r.codec.holdout_fraction = get<double>(tree, "codec.holdout_fraction");
  r.codec.target_mse = get<double>(tree, "codec.target_mse");
  require(m.scale_factor == 4 || m.scale_factor == 8, "codec.scale_factor", "must be 4 or 8");
  require(m.latent_channels >= 1, "codec.latent_channels", "must be positive");
  require(m.base_width >= 1 && m.max_width >= m.base_width, "codec.max_width", "must be >= base_width >= 1");
  require(r.codec.batch_size >= 1, "codec.batch_size", "must be positive");
  require(r.codec.lr > 0, "codec.lr", "must be positive");
  require(r.codec.holdout_fraction > 0 && r.codec.holdout_fraction < 1, "codec.holdout_fraction",
          "must lie in (0, 1)");
  require(r.codec.target_mse > 0, "codec.target_mse", "must be positive");
  if (r.codec_variant == "conv-autoencoder") {
    require(d.image_size % m.scale_factor == 0, "data.image_size", "must be divisible by codec.scale_factor");
  }

  auto& c = r.corruption;
  c.min_regions = get<std::size_t>(tree, "corruption.min_regions");
  c.max_regions = get<std::size_t>(tree, "corruption.max_regions");
  c.min_walk_steps = get<std::size_t>(tree, "corruption.min_walk_steps");
  c.max_walk_steps = get<std::size_t>(tree, "corruption.max_walk_steps");
  c.min_alpha = get<double>(tree, "corruption.min_alpha");
  c.max_alpha = get<double>(tree, "corruption.max_alpha");
  c.noise_weight = get<double>(tree, "corruption.noise_weight");
  c.texture_weight = get<double>(tree, "corruption.texture_weight");
  c.max_masked_fraction = get<double>(tree, "corruption.max_masked_fraction");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    rethrow_validation(e);
  }

  try {
    r.net_preset = parse_unet_preset(get<std::string>(tree, "net.preset"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("net.preset", e.what());
  }

  auto& t = r.train;
  t.seed = r.seed;
  t.batch_size = get<std::size_t>(tree, "train.batch_size");
  t.lr = get<float>(tree, "train.lr");
  t.reflow_lr = get<float>(tree, "train.reflow_lr");
  t.epochs = get<std::size_t>(tree, "train.epochs");
  t.clip_norm = get<double>(tree, "train.clip_norm");
  t.weight_decay = get<float>(tree, "train.weight_decay");
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    rethrow_validation(e);
  }

  r.reflow.train = t;
  r.reflow.train.epochs = get<std::size_t>(tree, "reflow.epochs");
  r.reflow.teacher_steps = get<std::size_t>(tree, "reflow.teacher_steps");
  r.reflow.pair_rounds = get<std::size_t>(tree, "reflow.pair_rounds");
  require(r.reflow.teacher_steps >= 1, "reflow.teacher_steps", "must be positive");
  require(r.reflow.pair_rounds >= 1, "reflow.pair_rounds", "must be positive");

  r.eval.steps = get<std::vector<std::size_t>>(tree, "eval.steps");
  require(!r.eval.steps.empty(), "eval.steps", "must list at least one step count");
  for (auto s : r.eval.steps) require(s >= 1, "eval.steps", "step counts must be positive");
  try {
    r.eval.image_reference = parse_image_reference(get<std::string>(tree, "eval.image_reference"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("eval.image_reference", e.what());
  }
  return r;
}

}  // namespace rfc

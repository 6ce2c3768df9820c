#include "rfc/checkpoint.hpp"

#include <bit>
#include <cstring>

namespace rfc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

void append_params(TensorBundle& b, const std::string& prefix, const ParamSet& ps) {
  for (const auto& p : ps) b.tensors.emplace_back(prefix + p.name, p.value);
}

void restore_params(const TensorBundle& b, const std::string& prefix, ParamSet& ps) {
  for (auto& p : ps) {
    const Tensor& t = b.at(prefix + p.name);
    if (t.shape() != p.value.shape()) {
      throw CheckpointIntegrityError("checkpoint: tensor '" + prefix + p.name + "' has shape " +
                                     shape_str(t.shape()) + ", model expects " +
                                     shape_str(p.value.shape()));
    }
    p.value = t;
  }
}

void append_codec(TensorBundle& b, const Codec& codec) {
  b.meta["codec"] = codec.config_json();
  b.meta["codec"]["loss_curve"] = codec.loss_curve;
  const auto& s = codec.stats();
  b.tensors.emplace_back("codec/stats.mean", Tensor({s.mean.size()}, s.mean));
  b.tensors.emplace_back("codec/stats.std", Tensor({s.std.size()}, s.std));
  if (const auto* ae = codec.autoencoder()) append_params(b, "codec/", ae->params());
}

Codec restore_codec(const TensorBundle& b) {
  const json& j = b.meta.at("codec");
  const std::string variant = j.at("variant");
  const Tensor mean = b.at("codec/stats.mean"), sd = b.at("codec/stats.std");
  Codec codec;
  if (variant == "identity") {
    codec = Codec::identity(mean.size());
  } else if (variant == "conv-autoencoder") {
    auto ae = ConvAutoencoder::create(autoencoder_config_from_json(j.at("model")), 0);
    restore_params(b, "codec/", ae.params());
    codec = Codec::from_autoencoder(std::move(ae), LatentStats{mean.vec(), sd.vec()});
  } else {
    throw CheckpointError("checkpoint: unknown codec variant '" + variant + "'");
  }
  codec.holdout_mse = j.value("holdout_mse", 0.0);
  codec.loss_curve = j.value("loss_curve", std::vector<double>{});
  return codec;
}

}  // namespace

const Tensor& TensorBundle::at(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw CheckpointIntegrityError("checkpoint: missing tensor '" + name + "'");
}

void write_bundle(const fs::path& dir, const TensorBundle& bundle) {
  fs::create_directories(dir);
  std::string blob;
  json index = json::array();
  for (const auto& [name, t] : bundle.tensors) {
    index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", blob.size()},
                     {"length", t.size()}});
    blob.append(reinterpret_cast<const char*>(t.data().data()), t.size() * sizeof(float));
  }
  json manifest = {{"format_version", kCheckpointFormatVersion},
                   {"meta", bundle.meta},
                   {"tensors", index},
                   {"blob", kBlobFile},
                   {"blob_bytes", blob.size()},
                   {"blob_sha256", sha256_hex(blob)}};
  write_text(dir / kBlobFile, blob);
  write_text(dir / kManifestFile, manifest.dump(2) + "\n");
}

TensorBundle read_bundle(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text(dir / kManifestFile));
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint: unreadable manifest in " + dir.string() + ": " + e.what());
  }
  const int version = manifest.value("format_version", -1);
  if (version != kCheckpointFormatVersion) {
    throw CheckpointVersionError("checkpoint: format version " + std::to_string(version) +
                                 " in " + dir.string() + ", expected " +
                                 std::to_string(kCheckpointFormatVersion));
  }
  const std::string blob = read_text(dir / manifest.value("blob", std::string(kBlobFile)));
  if (blob.size() != manifest.at("blob_bytes").get<std::size_t>() ||
      sha256_hex(blob) != manifest.at("blob_sha256").get<std::string>()) {
    throw CheckpointIntegrityError("checkpoint: blob hash mismatch in " + dir.string());
  }
  TensorBundle b;
  b.meta = manifest.at("meta");
  for (const auto& e : manifest.at("tensors")) {
    const auto shape = e.at("shape").get<Shape>();
    const auto offset = e.at("offset").get<std::size_t>();
    const auto length = e.at("length").get<std::size_t>();
    if (length != numel(shape) || offset + length * sizeof(float) > blob.size()) {
      throw CheckpointIntegrityError("checkpoint: bad index entry for '" +
                                     e.at("name").get<std::string>() + "'");
    }
    FloatBuffer data(length);
    std::memcpy(data.data(), blob.data() + offset, length * sizeof(float));
    b.tensors.emplace_back(e.at("name"), Tensor(shape, std::move(data)));
  }
  return b;
}

void save_codec(const fs::path& dir, const Codec& codec) {
  TensorBundle b;
  b.meta["kind"] = "codec";
  append_codec(b, codec);
  write_bundle(dir, b);
}

Codec load_codec(const fs::path& dir) {
  const TensorBundle b = read_bundle(dir);
  if (b.meta.value("kind", "") != "codec") {
    throw CheckpointError("checkpoint: " + dir.string() + " does not hold a codec");
  }
  return restore_codec(b);
}

void save_flow(const fs::path& dir, const FlowModel& model, const Codec& codec) {
  TensorBundle b;
  b.meta["kind"] = "flow";
  b.meta["model"] = model.velocity.config_json();
  b.meta["training"] = model.metadata();
  append_params(b, "velocity/", model.velocity.params());
  append_codec(b, codec);
  write_bundle(dir, b);
}

FlowCheckpoint load_flow(const fs::path& dir) {
  const TensorBundle b = read_bundle(dir);
  if (b.meta.value("kind", "") != "flow") {
    throw CheckpointError("checkpoint: " + dir.string() + " does not hold a flow model");
  }
  FlowModel m{.velocity = VelocityModel::from_config(b.meta.at("model"))};
  restore_params(b, "velocity/", m.velocity.params());
  const json& t = b.meta.at("training");
  m.generation = t.at("generation");
  m.seed = t.at("seed");
  m.epochs = t.at("epochs");
  m.loss_curve = t.at("loss_curve").get<std::vector<double>>();
  m.status = t.at("status");
  m.teacher_id = t.at("teacher_id");
  if (t.contains("id") && t.at("id") != m.id()) {
    throw CheckpointIntegrityError("checkpoint: restored parameters do not match model id " +
                                   t.at("id").get<std::string>());
  }
  return {std::move(m), restore_codec(b)};
}

}  // namespace rfc

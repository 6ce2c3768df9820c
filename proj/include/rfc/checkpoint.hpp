#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rfc/codec.hpp"
#include "rfc/flow.hpp"
#include "rfc/io.hpp"

namespace rfc {

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kBlobFile = "tensors.bin";

class CheckpointError : public IoError {
 public:
  using IoError::IoError;
};

/// Manifest written by a different format version.
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// Blob does not match the hash or tensor index recorded in the manifest.
class CheckpointIntegrityError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// Named tensors plus free-form JSON metadata. On disk: manifest.json (format
/// version, metadata, tensor index, blob SHA-256) and tensors.bin (float32 LE).
struct TensorBundle {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& at(const std::string& name) const;
};

void write_bundle(const std::filesystem::path& dir, const TensorBundle& bundle);
TensorBundle read_bundle(const std::filesystem::path& dir);

void save_codec(const std::filesystem::path& dir, const Codec& codec);
Codec load_codec(const std::filesystem::path& dir);

/// A flow checkpoint carries the codec it was trained against.
struct FlowCheckpoint {
  FlowModel model;
  Codec codec;
};

void save_flow(const std::filesystem::path& dir, const FlowModel& model, const Codec& codec);
FlowCheckpoint load_flow(const std::filesystem::path& dir);

}  // namespace rfc

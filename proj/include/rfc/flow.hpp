#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rfc/corruption.hpp"
#include "rfc/nets.hpp"

namespace rfc {

/// Non-finite loss or state; carries where it happened.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, double lr_, std::size_t epoch_, std::size_t batch_)
      : std::runtime_error(what), lr(lr_), epoch(epoch_), batch(batch_) {}
  double lr;
  std::size_t epoch, batch;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t batch_size = 96;
  float lr = 5e-4f;
  float reflow_lr = 1e-5f;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  double clip_norm = 1.0;
  float weight_decay = 0.01f;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Supplies (y0 corrupted, y1 clean) pairs, both [M, ...], for each epoch.
class PairSource {
 public:
  virtual ~PairSource() = default;
  virtual std::pair<Tensor, Tensor> epoch(std::size_t index) = 0;
};

/// The same pair set every epoch.
class FixedPairs : public PairSource {
 public:
  FixedPairs(Tensor y0, Tensor y1);
  std::pair<Tensor, Tensor> epoch(std::size_t) override { return {y0_, y1_}; }

 private:
  Tensor y0_, y1_;
};

/// Fresh corruptions of a fixed set of clean latents every epoch.
class CorruptionPairs : public PairSource {
 public:
  /// `normals` is [N, C, h, w]; `foregrounds` has one latent-grid mask per
  /// sample or a single shared one.
  CorruptionPairs(Tensor normals, std::vector<Mask> foregrounds, CorruptionConfig cfg,
                  const TextureBank* textures, std::uint64_t seed);
  std::pair<Tensor, Tensor> epoch(std::size_t index) override;
  /// Pairs plus union masks for epoch `index`.
  std::vector<CorruptedPair> pairs(std::size_t index) const;

 private:
  Tensor normals_;
  std::vector<Mask> foregrounds_;
  CorruptionConfig cfg_;
  const TextureBank* textures_;
  std::uint64_t seed_;
};

struct FlowModel {
  VelocityModel velocity;
  int generation = 1;
  std::vector<double> loss_curve{};  // mean loss per epoch
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::string teacher_id{};        // generation 2 only
  std::string status = "ok";       // "ok" or "warning: ..."

  /// Content hash of the velocity parameters.
  std::string id() const;
  nlohmann::json metadata() const;
};

/// (1 - t) y0 + t y1.
Tensor interpolate(const Tensor& y0, const Tensor& y1, float t);
/// Per-sample times along the leading axis.
Tensor interpolate(const Tensor& y0, const Tensor& y1, std::span<const float> t);

/// Batch mean of |(y1 - y0) - v(y_t, t)|^2 (sum over each sample's entries).
double rf_loss(const VelocityModel& model, const Tensor& y0, const Tensor& y1,
               std::span<const float> t);
/// Same with the correction target y0 - y1, the objective `train` minimises:
/// v(y, t) learns the displacement that the correction step subtracts.
double correction_loss(const VelocityModel& model, const Tensor& y0, const Tensor& y1,
                       std::span<const float> t);

/// Trains `model` on pairs from `source` with AdamW at cfg.lr; returns a
/// generation-1 FlowModel. Throws TrainingError on a non-finite loss.
FlowModel train(VelocityModel model, PairSource& source, const TrainConfig& cfg);

using VelocityField = std::function<Tensor(const Tensor& z, float t)>;
VelocityField field_of(const VelocityModel& model);

enum class Direction { Forward, Reverse };

struct Trajectory {
  std::vector<Tensor> states;      // steps + 1 entries, states[0] = start
  std::vector<Tensor> velocities;  // signed step velocity per step
  const Tensor& end() const { return states.back(); }
};

/// Euler transport with h = 1/steps at left-endpoint times t_k = k/steps.
/// Forward: z += h v(z, t_k). Reverse (correction): z -= h v(z, t_k); one
/// reverse step is exactly y - v(y, 0).
Trajectory euler_solve(const VelocityField& field, const Tensor& z, std::size_t steps,
                       Direction direction);
Trajectory euler_solve(const VelocityModel& model, const Tensor& z, std::size_t steps,
                       Direction direction);
/// Reverse transport end point.
Tensor correct(const VelocityModel& model, const Tensor& y, std::size_t steps);

/// Mean over samples of (1/steps) sum_k |u_k - (z_end - z_start)|^2 /
/// |z_end - z_start|^2 along the solved trajectory (u_k signed velocities).
/// Samples with |z_end - z_start| < 1e-8 are skipped.
double straightness(const VelocityField& field, const Tensor& z_starts, std::size_t steps = 10,
                    Direction direction = Direction::Reverse);
double straightness(const VelocityModel& model, const Tensor& z_starts, std::size_t steps = 10,
                    Direction direction = Direction::Reverse);

struct ReflowConfig {
  TrainConfig train;               // train.reflow_lr is used as the step size
  std::size_t teacher_steps = 10;
  std::size_t pair_rounds = 1;     // corruption epochs drawn from the source
};

/// Builds pairs (Z0 = y0, Z1 = teacher's reverse transport of y0) with the
/// teacher frozen, initialises the student from the teacher and trains it on
/// those pairs. Returns a generation-2 FlowModel recording the teacher id.
FlowModel reflow(const FlowModel& teacher, PairSource& source, const ReflowConfig& cfg);

}  // namespace rfc

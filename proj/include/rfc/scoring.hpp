#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rfc/codec.hpp"
#include "rfc/grid.hpp"
#include "rfc/nets.hpp"
#include "rfc/phantom.hpp"

namespace rfc {

inline constexpr std::size_t kDiceThresholds = 256;

/// Threshold k of the sweep, k / 255 in float so grid-quantised scores hit it exactly.
inline float dice_threshold(std::size_t k) { return static_cast<float>(k) / 255.0f; }

/// Per-pixel score: 0.5 |x_rec - x| (channel mean) + 0.5 |y_rec - y| (channel
/// mean, bilinearly upsampled to the image grid), min-max normalised per
/// image; constant maps become all-zero. Images are [H, W] or [C, H, W],
/// latents [C, h, w] with H = f h, W = f w. Returns [H, W].
Tensor anomaly_map(const Tensor& x, const Tensor& x_rec, const Tensor& y, const Tensor& y_rec);

/// Dice with prediction = score >= threshold; 0/0 (both empty) is 1.
double dice_at(std::span<const float> scores, const Mask& gt, float threshold);

struct DiceSweep {
  double max_dice = 0.0;
  double best_threshold = 0.0;                     // smallest threshold reaching the max
  std::vector<std::pair<double, double>> curve;    // (threshold, dice)
};

/// Dice at thresholds k / 255, k = 0..255.
DiceSweep max_dice(std::span<const float> scores, const Mask& gt);

struct AnomalyReport {
  Tensor anomaly_map;
  Tensor reconstruction;
  DiceSweep dice;
  std::size_t steps_used = 0;
};

/// What the corrected image is compared against in the image term.
enum class ImageReference {
  Input,                // |D(y~) - x|
  CodecReconstruction,  // |D(y~) - D(E(x))|, cancels the codec's own error
};

struct EvalConfig {
  std::vector<std::size_t> steps{1, 5};
  ImageReference image_reference = ImageReference::CodecReconstruction;
};

ImageReference parse_image_reference(const std::string& name);
const char* image_reference_name(ImageReference r);

/// encode -> reverse Euler (steps) -> decode -> anomaly_map -> max_dice for
/// one image [H, W].
AnomalyReport analyse_case(const VelocityModel& model, const Codec& codec, const Tensor& image,
                           const Mask& gt, std::size_t steps, ImageReference reference);

struct CaseResult {
  std::size_t case_id = 0;
  std::size_t steps = 0;
  double max_dice = 0.0;
  double best_threshold = 0.0;
  std::string kind;
  double severity = 0.0;
  std::string error;  // non-empty when the case failed
};

struct StepSummary {
  std::size_t steps = 0;
  std::size_t cases = 0, failed = 0;
  double mean_max_dice = 0.0, median_max_dice = 0.0;
};

struct DatasetReport {
  std::vector<CaseResult> cases;
  std::vector<StepSummary> summary;

  std::string to_csv() const;
  nlohmann::json to_json() const;
  const StepSummary& for_steps(std::size_t steps) const;
};

/// Evaluates every case at every configured step count. Per-case failures are
/// recorded and evaluation continues.
DatasetReport evaluate_dataset(const VelocityModel& model, const Codec& codec,
                               std::span<const LesionCase> cases, const EvalConfig& cfg);

}  // namespace rfc

#include "rfc/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "rfc/flow.hpp"
#include "rfc/kernels.hpp"

namespace rfc {

namespace {

// Channel-mean absolute difference of [C, H, W] (or [H, W]) tensors -> [H, W].
Tensor channel_mean_absdiff(const char* what, const Tensor& a, const Tensor& b) {
  require_same_shape(what, a.shape(), b.shape());
  if (a.rank() != 2 && a.rank() != 3) {
    throw ShapeError(std::string(what) + ": expected [H, W] or [C, H, W], got " + shape_str(a.shape()));
  }
  const std::size_t c = a.rank() == 3 ? a.dim(0) : 1;
  const std::size_t h = a.dim(a.rank() - 2), w = a.dim(a.rank() - 1), plane = h * w;
  Tensor out({h, w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) out[i] += std::abs(a[ch * plane + i] - b[ch * plane + i]);
  }
  if (c > 1) {
    for (auto& v : out.data()) v /= static_cast<float>(c);
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

Tensor anomaly_map(const Tensor& x, const Tensor& x_rec, const Tensor& y, const Tensor& y_rec) {
  const Tensor img = channel_mean_absdiff("anomaly_map (image)", x, x_rec);
  const Tensor lat = channel_mean_absdiff("anomaly_map (latent)", y, y_rec);
  const std::size_t H = img.dim(0), W = img.dim(1), h = lat.dim(0), w = lat.dim(1);
  if (H % h != 0 || W % w != 0 || H / h != W / w) {
    throw ShapeError("anomaly_map: latent grid " + shape_str(lat.shape()) +
                     " is not an integer downscale of image " + shape_str(img.shape()));
  }
  const Tensor up = kernels::bilinear_upsample(lat, H / h);
  Tensor map({H, W});
  for (std::size_t i = 0; i < map.size(); ++i) map[i] = 0.5f * img[i] + 0.5f * up[i];
  const auto [lo, hi] = std::minmax_element(map.data().begin(), map.data().end());
  const float mn = *lo, range = *hi - *lo;
  if (!(range > 0.0f)) return Tensor({H, W});
  for (auto& v : map.data()) v = std::clamp((v - mn) / range, 0.0f, 1.0f);
  return map;
}

double dice_at(std::span<const float> scores, const Mask& gt, float threshold) {
  if (scores.size() != gt.size()) {
    throw ShapeError("dice: " + std::to_string(scores.size()) + " scores for a mask of " +
                     std::to_string(gt.size()));
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool p = scores[i] >= threshold;
    const bool g = gt.cells[i] != 0;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

DiceSweep max_dice(std::span<const float> scores, const Mask& gt) {
  if (scores.size() != gt.size()) {
    throw ShapeError("max_dice: " + std::to_string(scores.size()) + " scores for a mask of " +
                     std::to_string(gt.size()));
  }
  // bucket[k] counts pixels whose highest passed threshold is k (-1: none).
  std::vector<std::size_t> pos(kDiceThresholds + 1, 0), neg(kDiceThresholds + 1, 0);
  std::size_t total_pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const float s = scores[i];
    long k = std::isfinite(s) ? std::clamp(static_cast<long>(std::floor(s * 255.0f)), -1L, 255L) : -1;
    while (k < 255 && s >= dice_threshold(static_cast<std::size_t>(k + 1))) ++k;
    while (k >= 0 && !(s >= dice_threshold(static_cast<std::size_t>(k)))) --k;
    const auto slot = static_cast<std::size_t>(k + 1);
    if (gt.cells[i]) {
      ++pos[slot];
      ++total_pos;
    } else {
      ++neg[slot];
    }
  }
  DiceSweep out;
  out.curve.reserve(kDiceThresholds);
  std::vector<double> dice(kDiceThresholds);
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = kDiceThresholds; k-- > 0;) {
    tp += pos[k + 1];
    fp += neg[k + 1];
    const std::size_t fn = total_pos - tp;
    const std::size_t denom = 2 * tp + fp + fn;
    dice[k] = denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  out.max_dice = -1.0;
  for (std::size_t k = 0; k < kDiceThresholds; ++k) {
    out.curve.emplace_back(dice_threshold(k), dice[k]);
    if (dice[k] > out.max_dice) {
      out.max_dice = dice[k];
      out.best_threshold = dice_threshold(k);
    }
  }
  return out;
}

ImageReference parse_image_reference(const std::string& name) {
  if (name == "input") return ImageReference::Input;
  if (name == "codec") return ImageReference::CodecReconstruction;
  throw std::invalid_argument("unknown image reference '" + name + "' (expected input or codec)");
}

const char* image_reference_name(ImageReference r) {
  return r == ImageReference::Input ? "input" : "codec";
}

AnomalyReport analyse_case(const VelocityModel& model, const Codec& codec, const Tensor& image,
                           const Mask& gt, std::size_t steps, ImageReference reference) {
  if (image.rank() != 2) throw ShapeError("analyse_case: expected [H, W], got " + shape_str(image.shape()));
  const std::size_t H = image.dim(0), W = image.dim(1);
  const Tensor x = image.reshaped({1, 1, H, W});
  const Tensor y = codec.encode(x);
  const Tensor y_rec = correct(model, y, steps);
  const Tensor x_rec = codec.decode(y_rec);
  const Tensor ref = reference == ImageReference::Input ? x : codec.decode(y);
  AnomalyReport rep;
  rep.anomaly_map = anomaly_map(ref.reshaped({H, W}), x_rec.reshaped({H, W}), y.slice(0), y_rec.slice(0));
  rep.reconstruction = x_rec.reshaped({H, W});
  rep.dice = max_dice(rep.anomaly_map.data(), gt);
  rep.steps_used = steps;
  return rep;
}

std::string DatasetReport::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(9);
  os << "case_id,max_dice,best_threshold,steps,kind,severity,error\n";
  for (const auto& c : cases) {
    os << c.case_id << ',' << c.max_dice << ',' << c.best_threshold << ',' << c.steps << ','
       << c.kind << ',' << c.severity << ',' << c.error << '\n';
  }
  return os.str();
}

nlohmann::json DatasetReport::to_json() const {
  nlohmann::json j;
  j["summary"] = nlohmann::json::array();
  for (const auto& s : summary) {
    j["summary"].push_back({{"steps", s.steps},
                            {"cases", s.cases},
                            {"failed", s.failed},
                            {"mean_max_dice", s.mean_max_dice},
                            {"median_max_dice", s.median_max_dice}});
  }
  return j;
}

const StepSummary& DatasetReport::for_steps(std::size_t steps) const {
  for (const auto& s : summary) {
    if (s.steps == steps) return s;
  }
  throw std::out_of_range("report has no entry for steps = " + std::to_string(steps));
}

DatasetReport evaluate_dataset(const VelocityModel& model, const Codec& codec,
                               std::span<const LesionCase> cases, const EvalConfig& cfg) {
  if (cfg.steps.empty()) throw std::invalid_argument("eval.steps: at least one step count required");
  DatasetReport rep;
  for (std::size_t steps : cfg.steps) {
    StepSummary sum;
    sum.steps = steps;
    std::vector<double> scores;
    for (std::size_t i = 0; i < cases.size(); ++i) {
      CaseResult r;
      r.case_id = i;
      r.steps = steps;
      r.kind = lesion_kind_name(cases[i].kind);
      r.severity = cases[i].severity;
      try {
        const auto a = analyse_case(model, codec, cases[i].image, cases[i].gt_mask, steps,
                                    cfg.image_reference);
        r.max_dice = a.dice.max_dice;
        r.best_threshold = a.dice.best_threshold;
        scores.push_back(r.max_dice);
      } catch (const std::exception& e) {
        r.error = e.what();
        ++sum.failed;
      }
      rep.cases.push_back(std::move(r));
    }
    sum.cases = cases.size();
    if (!scores.empty()) {
      double acc = 0;
      for (double s : scores) acc += s;
      sum.mean_max_dice = acc / static_cast<double>(scores.size());
      sum.median_max_dice = median(scores);
    }
    rep.summary.push_back(sum);
  }
  return rep;
}

}  // namespace rfc

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dice_oracle.hpp"
#include "rfc/flow.hpp"
#include "rfc/rng.hpp"
#include "rfc/scoring.hpp"

using namespace rfc;

namespace {

Mask mask_of(const std::vector<int>& bits) {
  Mask m(1, bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) m.cells[i] = static_cast<std::uint8_t>(bits[i]);
  return m;
}

Tensor uniform_tensor(Shape s, Rng& rng) {
  Tensor t(std::move(s));
  for (auto& v : t.data()) v = static_cast<float>(uniform(rng));
  return t;
}

}  // namespace

TEST(MaxDice, PerfectScores) {
  const std::vector<float> s{1, 0, 1, 1, 0};
  EXPECT_EQ(max_dice(s, mask_of({1, 0, 1, 1, 0})).max_dice, 1.0);
}

TEST(MaxDice, HandExample) {
  const std::vector<float> s{0.9f, 0.2f, 0.8f, 0.1f};
  const auto r = max_dice(s, mask_of({1, 0, 1, 0}));
  EXPECT_EQ(r.max_dice, 1.0);
  EXPECT_GT(r.best_threshold, 0.2);
  EXPECT_LE(r.best_threshold, 0.8);
  EXPECT_EQ(r.curve.size(), 256u);
  EXPECT_EQ(r.curve.front().first, 0.0);
  EXPECT_EQ(r.curve.back().first, 1.0);
}

TEST(MaxDice, EmptyMaskConvention) {
  const std::vector<float> zeros(6, 0.0f);
  const auto r = max_dice(zeros, Mask(1, 6));
  EXPECT_EQ(r.max_dice, 1.0);
  // Threshold 0 predicts everything positive against an empty mask.
  EXPECT_EQ(r.curve.front().second, 0.0);
  const std::vector<float> s{0.5f, 0.1f};
  EXPECT_EQ(dice_at(s, Mask(1, 2), 0.3f), 0.0);
  EXPECT_EQ(dice_at(s, Mask(1, 2), 0.6f), 1.0);
}

TEST(MaxDice, MatchesBruteForceOnQuantisedScores) {
  Rng rng(1);
  for (int inst = 0; inst < 1000; ++inst) {
    const auto n = static_cast<std::size_t>(randint(rng, 1, 300));
    std::vector<float> s(n);
    Mask gt(1, n);
    const double p = uniform(rng);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = dice_threshold(static_cast<std::size_t>(randint(rng, 0, 255)));
      gt.cells[i] = uniform(rng) < p;
    }
    ASSERT_EQ(max_dice(s, gt).max_dice, oracle::brute_force_max_dice(s, gt.cells)) << inst;
  }
}

TEST(MaxDice, ContinuousScoresBoundedByOracle) {
  Rng rng(2);
  for (int inst = 0; inst < 200; ++inst) {
    std::vector<float> s(100);
    Mask gt(10, 10);
    for (std::size_t i = 0; i < 100; ++i) {
      gt.cells[i] = uniform(rng) < 0.3;
      s[i] = static_cast<float>(std::clamp(0.5 * uniform(rng) + 0.4 * gt.cells[i], 0.0, 1.0));
    }
    const double grid = max_dice(s, gt).max_dice;
    const double brute = oracle::brute_force_max_dice(s, gt.cells);
    EXPECT_LE(grid, brute + 1e-12);
    // Snapping scores down to the grid makes the two agree exactly.
    std::vector<float> q(100);
    for (std::size_t i = 0; i < 100; ++i) {
      q[i] = dice_threshold(static_cast<std::size_t>(std::floor(s[i] * 255.0f)));
      if (q[i] > s[i]) q[i] = dice_threshold(static_cast<std::size_t>(std::floor(s[i] * 255.0f)) - 1);
    }
    EXPECT_EQ(max_dice(q, gt).max_dice, oracle::brute_force_max_dice(q, gt.cells));
  }
}

TEST(MaxDice, MonotoneTransformInvariance) {
  Rng rng(3);
  for (int inst = 0; inst < 100; ++inst) {
    std::vector<float> s(64), t(64);
    Mask gt(8, 8);
    for (std::size_t i = 0; i < 64; ++i) {
      s[i] = static_cast<float>(uniform(rng));
      t[i] = s[i] * s[i] * s[i];
      gt.cells[i] = uniform(rng) < 0.4;
    }
    EXPECT_EQ(oracle::brute_force_max_dice(s, gt.cells), oracle::brute_force_max_dice(t, gt.cells));
  }
}

TEST(AnomalyMap, IdentityReconstructionIsZero) {
  Rng rng(4);
  const Tensor x = uniform_tensor({16, 16}, rng), y = uniform_tensor({4, 4, 4}, rng);
  EXPECT_EQ(anomaly_map(x, x, y, y), Tensor({16, 16}));
}

TEST(AnomalyMap, IdentityCodecReducesToImageDifference) {
  Rng rng(5);
  const Tensor x = uniform_tensor({8, 8}, rng), xr = uniform_tensor({8, 8}, rng);
  const Tensor map = anomaly_map(x, xr, x.reshaped({1, 8, 8}), xr.reshaped({1, 8, 8}));
  Tensor d({8, 8});
  for (std::size_t i = 0; i < 64; ++i) d[i] = std::abs(xr[i] - x[i]);
  const auto [lo, hi] = std::minmax_element(d.data().begin(), d.data().end());
  for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(map[i], (d[i] - *lo) / (*hi - *lo), 1e-6);
}

TEST(AnomalyMap, SinglePixelDifferencePeaksThere) {
  Rng rng(6);
  const Tensor x = uniform_tensor({16, 16}, rng), y = uniform_tensor({4, 4, 4}, rng);
  Tensor xr = x;
  xr[5 * 16 + 9] += 0.5f;
  const Tensor map = anomaly_map(x, xr, y, y);
  const auto arg = std::max_element(map.data().begin(), map.data().end()) - map.data().begin();
  EXPECT_EQ(arg, 5 * 16 + 9);
  EXPECT_EQ(map[5 * 16 + 9], 1.0f);
}

TEST(AnomalyMap, PermutationEquivariantWithIdentityScale) {
  Rng rng(7);
  const Tensor x = uniform_tensor({1, 6, 6}, rng), xr = uniform_tensor({1, 6, 6}, rng);
  std::vector<std::size_t> perm(36);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto permute = [&](const Tensor& t) {
    Tensor out(t.shape());
    for (std::size_t i = 0; i < 36; ++i) out[perm[i]] = t[i];
    return out;
  };
  const Tensor a = permute(anomaly_map(x, xr, x, xr).reshaped({1, 6, 6}));
  const Tensor b = anomaly_map(permute(x), permute(xr), permute(x), permute(xr)).reshaped({1, 6, 6});
  EXPECT_EQ(a, b);
}

TEST(AnomalyMap, ShapeErrors) {
  EXPECT_THROW(anomaly_map(Tensor({8, 8}), Tensor({8, 7}), Tensor({1, 2, 2}), Tensor({1, 2, 2})), ShapeError);
  EXPECT_THROW(anomaly_map(Tensor({8, 8}), Tensor({8, 8}), Tensor({1, 3, 3}), Tensor({1, 3, 3})), ShapeError);
}

TEST(Evaluate, UntrainedModelMatchesEmptyPredictionBaseline) {
  const auto cases = gen_lesion_cases(12, 3, 32);
  const auto model = VelocityModel::unet(unet_preset(UNetPreset::XS, 1), 0);
  const Codec codec = Codec::identity(1);
  const auto rep = evaluate_dataset(model, codec, cases, {});
  ASSERT_EQ(rep.summary.size(), 2u);
  EXPECT_EQ(rep.summary[0].steps, 1u);
  EXPECT_EQ(rep.summary[1].steps, 5u);
  // Zero velocity -> all-zero map: threshold 0 marks everything, the rest
  // mark nothing, so each case scores 2|gt| / (|gt| + HW).
  double expected = 0;
  for (const auto& c : cases) {
    const double g = static_cast<double>(c.gt_mask.count());
    expected += 2 * g / (g + static_cast<double>(c.gt_mask.size()));
  }
  expected /= static_cast<double>(cases.size());
  EXPECT_NEAR(rep.for_steps(1).mean_max_dice, expected, 1e-12);
  EXPECT_NEAR(rep.for_steps(5).mean_max_dice, expected, 1e-12);
  EXPECT_EQ(rep.cases.size(), 24u);
  const std::string csv = rep.to_csv();
  EXPECT_EQ(csv.rfind("case_id,max_dice,best_threshold,steps", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 25);
  EXPECT_EQ(rep.to_json()["summary"].size(), 2u);
}

TEST(Evaluate, FailuresAreRecordedAndEvaluationContinues) {
  auto cases = gen_lesion_cases(3, 4, 32);
  cases[1].image = Tensor({30, 30});
  const auto model = VelocityModel::unet(unet_preset(UNetPreset::XS, 1), 0);
  const auto rep = evaluate_dataset(model, Codec::identity(1), cases, {.steps = {1}});
  EXPECT_EQ(rep.for_steps(1).failed, 1u);
  EXPECT_FALSE(rep.cases[1].error.empty());
  EXPECT_TRUE(rep.cases[2].error.empty());
}

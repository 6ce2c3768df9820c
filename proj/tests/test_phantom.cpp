#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "rfc/grid.hpp"
#include "rfc/io.hpp"
#include "rfc/phantom.hpp"

using namespace rfc;

TEST(Phantom, DeterministicPerSeed) {
  EXPECT_EQ(gen_phantom(7).image, gen_phantom(7).image);
  EXPECT_NE(gen_phantom(7).image, gen_phantom(8).image);
}

TEST(Phantom, RangeAndZeroOutsideForeground) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Phantom p = gen_phantom(s);
    ASSERT_EQ(p.image.shape(), (Shape{64, 64}));
    for (std::size_t i = 0; i < p.image.size(); ++i) {
      EXPECT_GE(p.image[i], 0.0f);
      EXPECT_LE(p.image[i], 1.0f);
      if (!p.foreground.cells[i]) EXPECT_EQ(p.image[i], 0.0f);
    }
    EXPECT_TRUE(p.foreground.connected());
  }
}

TEST(Phantom, ForegroundFractionEnvelope) {
  double lo = 1, hi = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const Phantom p = gen_phantom(s);
    const double frac = static_cast<double>(p.foreground.count()) / 4096.0;
    lo = std::min(lo, frac);
    hi = std::max(hi, frac);
  }
  EXPECT_GT(lo, 0.3);
  EXPECT_LT(hi, 0.7);
}

TEST(Lesion, VanishingSeverityLeavesImageUnchanged) {
  const Phantom p = gen_phantom(3);
  for (auto kind : {LesionKind::BrightBlob, LesionKind::DarkBlob, LesionKind::TexturePatch}) {
    const LesionCase c = inject_lesion(p, 11, kind, 1e-6);
    EXPECT_LT(max_abs_diff(c.image, p.image), 1e-5);
  }
  EXPECT_THROW(inject_lesion(p, 1, LesionKind::BrightBlob, 0.0), std::invalid_argument);
}

TEST(Lesion, MaskInsideForegroundAndChangesOnlyMask) {
  for (std::uint64_t s = 0; s < 10000; ++s) {
    const Phantom p = gen_phantom(s % 37);
    const auto kind = static_cast<LesionKind>(s % 3);
    const LesionCase c = inject_lesion(p, s, kind, 0.8);
    ASSERT_TRUE(c.gt_mask.subset_of(p.foreground)) << s;
    ASSERT_TRUE(c.gt_mask.any());
    if (s % 100 == 0) {
      for (std::size_t i = 0; i < c.image.size(); ++i) {
        if (!c.gt_mask.cells[i]) ASSERT_EQ(c.image[i], p.image[i]);
      }
    }
  }
}

TEST(Lesion, BrightBlobAtFullSeverityBrightens) {
  const Phantom p = gen_phantom(5);
  const LesionCase c = inject_lesion(p, 2, LesionKind::BrightBlob, 1.0);
  for (std::size_t i = 0; i < c.image.size(); ++i) {
    if (c.gt_mask.cells[i]) EXPECT_GE(c.image[i], p.image[i]);
  }
  const LesionCase d = inject_lesion(p, 2, LesionKind::DarkBlob, 1.0);
  for (std::size_t i = 0; i < d.image.size(); ++i) {
    if (d.gt_mask.cells[i]) EXPECT_LE(d.image[i], p.image[i]);
  }
}

TEST(LesionCases, KindsAndSeveritiesCovered) {
  const auto cases = gen_lesion_cases(60, 9);
  int kinds[3] = {0, 0, 0};
  for (const auto& c : cases) {
    ++kinds[static_cast<int>(c.kind)];
    EXPECT_GE(c.severity, 0.3);
    EXPECT_LE(c.severity, 1.0);
  }
  for (int k : kinds) EXPECT_GT(k, 5);
  EXPECT_EQ(gen_lesion_cases(3, 9)[2].image, cases[2].image);
}

TEST(VectorTask, GaussianOffsetIsExact) {
  const VectorTask t = gen_vector_task("gaussian-offset", 500, 4, {.offset_x = 1.5, .offset_y = -0.75});
  for (std::size_t i = 0; i < 500; ++i) {
    EXPECT_EQ(t.x0[2 * i] - t.x1[2 * i], 1.5f);
    EXPECT_EQ(t.x0[2 * i + 1] - t.x1[2 * i + 1], -0.75f);
  }
}

TEST(VectorTask, TwoMoonsJitterScale) {
  const double jitter = 0.2;
  const VectorTask t = gen_vector_task("two-moons-perturbed", 10000, 4, {.jitter = jitter});
  double acc = 0;
  for (std::size_t i = 0; i < 10000; ++i) {
    acc += std::hypot(double(t.x0[2 * i]) - t.x1[2 * i], double(t.x0[2 * i + 1]) - t.x1[2 * i + 1]);
  }
  EXPECT_NEAR(acc / 10000, jitter, 0.05 * jitter);
}

TEST(VectorTask, SeededAndValidated) {
  EXPECT_EQ(gen_vector_task("two-moons-perturbed", 20, 1).x0, gen_vector_task("two-moons-perturbed", 20, 1).x0);
  EXPECT_THROW(gen_vector_task("spirals", 20, 1), std::invalid_argument);
  EXPECT_THROW(gen_vector_task("gaussian-offset", 0, 1), std::invalid_argument);
}

TEST(Mask, RleRoundTrip) {
  const LesionCase c = inject_lesion(gen_phantom(1), 1, LesionKind::DarkBlob, 1.0);
  EXPECT_EQ(rle_decode(rle_encode(c.gt_mask)), c.gt_mask);
  EXPECT_EQ(rle_decode(rle_encode(Mask(3, 5))), Mask(3, 5));
  EXPECT_EQ(rle_decode("2 2 0:1 1:3").count(), 3u);
  EXPECT_THROW(rle_decode("2 2 0:1 1:2"), std::invalid_argument);
  EXPECT_THROW(rle_decode("2 2 0:9"), std::invalid_argument);
  EXPECT_THROW(rle_decode("2 2 x:4"), std::invalid_argument);
}

TEST(Mask, Connectivity) {
  Mask m(3, 3);
  m.set(0, 0);
  m.set(2, 2);
  EXPECT_FALSE(m.connected());
  m.set(1, 0);
  m.set(2, 0);
  m.set(2, 1);
  EXPECT_TRUE(m.connected());
}

TEST(Pgm, RoundTripQuantised) {
  const auto dir = std::filesystem::temp_directory_path() / "rfc_pgm_test";
  std::filesystem::create_directories(dir);
  const Phantom p = gen_phantom(2);
  write_pgm(dir / "a.pgm", p.image);
  const Tensor back = read_pgm(dir / "a.pgm");
  EXPECT_EQ(back.shape(), p.image.shape());
  EXPECT_LE(max_abs_diff(back, p.image), 0.5 / 255 + 1e-6);
  write_pgm(dir / "b.pgm", back);
  EXPECT_EQ(read_pgm(dir / "b.pgm"), back);
  write_text(dir / "c.pgm", "P2\n1 1\n255\n0\n");
  EXPECT_THROW(read_pgm(dir / "c.pgm"), IoError);
  std::filesystem::remove_all(dir);
}

TEST(Sha256, KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria. Extra arguments are dotted config overrides for
// the trained-pipeline criteria (5, 6, 7, 9); --codec=DIR reuses a codec
// checkpoint instead of fitting one, --save-codec=DIR stores the fitted one.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "dice_oracle.hpp"
#include "oracle.hpp"
#include "rfc/checkpoint.hpp"
#include "rfc/config.hpp"
#include "rfc/pipeline.hpp"
#include "rfc/scoring.hpp"
#include "stats_oracle.hpp"

using namespace rfc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Tensor normal_tensor(Shape s, Rng& rng) {
  Tensor t(std::move(s));
  for (auto& v : t.data()) v = static_cast<float>(normal(rng));
  return t;
}

// --- criteria without a trained pipeline -----------------------------------

Outcome gradient_correctness() {
  std::mt19937_64 rng(20240);
  double worst = 0;
  std::string worst_op;
  std::size_t checks = 0, ops = 0;
  for (int instance = 0; instance < 20; ++instance) {
    const auto cases = oracle::all_op_cases(rng);
    ops = cases.size();
    for (const auto& gc : cases) {
      const auto r = oracle::check_gradient(gc, rng, 1e-3);
      ++checks;
      if (r.grad_rel_err > worst) {
        worst = r.grad_rel_err;
        worst_op = gc.name;
      }
    }
  }
  return {worst < 1e-3, fmt("%zu ops x 20 instances, max rel err %.2e (%s), tol 1e-3", ops, worst, worst_op.c_str())};
}

Outcome zero_init_anchor() {
  Rng rng(1);
  const Tensor normals = normal_tensor({96, 4, 16, 16}, rng);
  const Mask fg = latent_foreground(gen_phantom(3).foreground, 4);
  CorruptionPairs source(normals, {fg}, {}, nullptr, 5);
  const auto [y0, y1] = source.epoch(0);
  const auto model = VelocityModel::unet(unet_preset(UNetPreset::XS, 4), 7);
  std::vector<float> t(96);
  for (auto& v : t) v = static_cast<float>(uniform(rng));
  double expected = 0;
  for (std::size_t i = 0; i < y0.size(); ++i) {
    const double d = static_cast<double>(y1[i]) - y0[i];
    expected += d * d;
  }
  expected /= 96.0;
  const double loss = rf_loss(model, y0, y1, t);
  const double err = std::abs(loss - expected);
  return {err <= 1e-6, fmt("rf_loss %.9f vs E|y1-y0|^2 %.9f, |diff| %.2e, tol 1e-6", loss, expected, err)};
}

Outcome distribution_preservation() {
  CorruptionConfig cfg;
  cfg.noise_weight = 1.0;
  cfg.texture_weight = 0.0;
  const Mask fg = latent_foreground(gen_phantom(11).foreground, 4);
  Rng data(12), pick(13);
  std::vector<double> one_per_sample, all;
  for (std::size_t s = 0; s < 10000; ++s) {
    Rng rng(derive_seed(99, s));
    const Tensor y1 = normal_tensor({4, 16, 16}, data);
    const CorruptedPair p = make_pair(y1, fg, cfg, nullptr, rng);
    std::vector<double> masked;
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t i = 0; i < 256; ++i)
        if (p.mask.cells[i]) masked.push_back(p.y0[c * 256 + i]);
    all.insert(all.end(), masked.begin(), masked.end());
    one_per_sample.push_back(masked[static_cast<std::size_t>(randint(pick, 0, static_cast<std::int64_t>(masked.size()) - 1))]);
  }
  // KS on one entry per sample keeps the draws independent; moments use every masked entry.
  const double ks = oracle::ks_normal(one_per_sample);
  const double crit = oracle::ks_critical_001(one_per_sample.size());
  const auto m = oracle::moments(all);
  const bool ok = ks < crit && std::abs(m.mean) <= 0.02 && std::abs(m.var - 1) <= 0.03;
  return {ok, fmt("KS %.4f < %.4f (n=%zu); mean %.4f, var %.4f over %zu masked entries", ks, crit,
                  one_per_sample.size(), m.mean, m.var, all.size())};
}

Outcome constant_velocity() {
  const VectorTask task = gen_vector_task("gaussian-offset", 2048, 3);
  FixedPairs pairs(task.x0, task.x1);
  const FlowModel f = train(VelocityModel::mlp({}, 5), pairs, {.batch_size = 64, .lr = 2e-3f, .epochs = 64, .seed = 1});
  // x0 = x1 + (1.5, -1); the correction velocity is that offset.
  const VectorTask probe = gen_vector_task("gaussian-offset", 1024, 99);
  double worst_v = 0;
  for (float t : {0.0f, 0.25f, 0.5f, 0.75f, 1.0f}) {
    const Tensor v = f.velocity.predict(interpolate(probe.x0, probe.x1, t), t);
    for (std::size_t i = 0; i < 1024; ++i)
      worst_v = std::max({worst_v, std::abs(v[2 * i] - 1.5), std::abs(v[2 * i + 1] + 1.0)});
  }
  const double worst_x = max_abs_diff(correct(f.velocity, probe.x0, 1), probe.x1);
  return {worst_v < 0.05 && worst_x < 0.05,
          fmt("max |v - c| %.4f, max |x1_hat - x1| %.4f, tol 0.05", worst_v, worst_x)};
}

Outcome metric_oracle() {
  Rng rng(8);
  std::size_t mismatches = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const auto n = static_cast<std::size_t>(randint(rng, 1, 400));
    std::vector<float> s(n);
    Mask gt(1, n);
    const double p = uniform(rng);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = dice_threshold(static_cast<std::size_t>(randint(rng, 0, 255)));
      gt.cells[i] = uniform(rng) < p;
    }
    if (max_dice(s, gt).max_dice != oracle::brute_force_max_dice(s, gt.cells)) ++mismatches;
  }
  return {mismatches == 0, fmt("%zu / 1000 grid-quantised instances differ from the brute-force oracle", mismatches)};
}

// --- trained pipeline --------------------------------------------------------

struct Pipeline {
  RunConfig cfg;
  Codec codec;
  FlowModel teacher;
  FlowModel student;
  Tensor probe_clean;             // held-out normal latents
  std::vector<CorruptedPair> probe_pairs;
  std::vector<LesionCase> cases;
  double setup_seconds = 0;
};

struct Options {
  std::vector<std::string> overrides;
  std::string codec_in, codec_out;
};

Pipeline build_pipeline(const Options& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  Pipeline p;
  p.cfg = resolve_config(nlohmann::json::object(), opt.overrides);
  const RunConfig& cfg = p.cfg;
  const NormalSet normals = gen_normals(cfg.data.train_normals, cfg.data.image_size, stream_seed(cfg.seed, Stream::Normals));
  p.codec = opt.codec_in.empty() ? build_codec(cfg, normals.images) : load_codec(opt.codec_in);
  if (!opt.codec_out.empty()) save_codec(opt.codec_out, p.codec);
  std::printf("  codec: %s, holdout mse %.5f\n", cfg.codec_variant.c_str(), p.codec.holdout_mse);
  const LatentTrainingSet set = prepare_latents(cfg, p.codec, normals);
  CorruptionPairs source = make_pair_source(cfg, set, Stream::Corruption);
  TrainConfig tc = cfg.train;
  tc.seed = stream_seed(cfg.seed, Stream::Train);
  p.teacher = train(init_velocity(cfg, p.codec), source, tc);
  std::printf("  generation-1: %zu epochs, loss %.3f -> %.3f\n", p.teacher.epochs, p.teacher.loss_curve.front(),
              p.teacher.loss_curve.back());
  CorruptionPairs reflow_source = make_pair_source(cfg, set, Stream::Reflow);
  ReflowConfig rc = cfg.reflow;
  rc.train.seed = stream_seed(cfg.seed, Stream::Reflow);
  p.student = reflow(p.teacher, reflow_source, rc);
  std::printf("  generation-2: %zu epochs, loss %.3f -> %.3f\n", p.student.epochs, p.student.loss_curve.front(),
              p.student.loss_curve.back());

  // Held-out normals from a stream the training never touched.
  const NormalSet held = gen_normals(64, cfg.data.image_size, derive_seed(cfg.seed, 1000));
  const LatentTrainingSet held_set = prepare_latents(cfg, p.codec, held);
  p.probe_clean = held_set.latents;
  p.probe_pairs = CorruptionPairs(held_set.latents, held_set.foregrounds, cfg.corruption,
                                  held_set.textures.empty() ? nullptr : &held_set.textures, derive_seed(cfg.seed, 1001))
                      .pairs(0);
  p.cases = gen_eval_cases(cfg);
  p.setup_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("  pipeline ready in %.1fs\n", p.setup_seconds);
  std::fflush(stdout);
  return p;
}

Tensor stack_y0(const std::vector<CorruptedPair>& pairs) {
  std::vector<Tensor> ys;
  for (const auto& q : pairs) ys.push_back(q.y0);
  return Tensor::stack(ys);
}

Outcome single_step_adequacy(const Pipeline& p) {
  const Tensor y0 = stack_y0(p.probe_pairs);
  const Tensor ten = correct(p.teacher.velocity, y0, 10);
  const Tensor one = correct(p.teacher.velocity, y0, 1);
  // Correction magnitude is measured on the 10-step reference solution.
  const double gap = sum_squares(one - ten), magnitude = sum_squares(ten - y0);
  const double ratio = gap / magnitude, ratio_one = gap / sum_squares(one - y0);
  const double s1 = straightness(p.teacher.velocity, y0, 10);
  const double s2 = straightness(p.student.velocity, y0, 10);
  const bool ok = ratio < 0.1 && s2 <= s1 + 1e-3;
  return {ok, fmt("|1-step - 10-step|^2 / |correction|^2 = %.4f (< 0.1; %.4f against the 1-step correction); "
                  "straightness generation-1 %.5f, generation-2 %.5f (<= +1e-3)",
                  ratio, ratio_one, s1, s2)};
}

struct BenchmarkNumbers {
  double untrained = 0, trained = 0, trained5 = 0, high_blob = 0;
  std::size_t high_blob_n = 0;
  std::string trained_csv, trained_json;
};

BenchmarkNumbers benchmark(const Pipeline& p) {
  BenchmarkNumbers b;
  const auto untrained = evaluate_dataset(init_velocity(p.cfg, p.codec), p.codec, p.cases, p.cfg.eval);
  const auto trained = evaluate_dataset(p.teacher.velocity, p.codec, p.cases, p.cfg.eval);
  b.untrained = untrained.for_steps(1).mean_max_dice;
  b.trained = trained.for_steps(1).mean_max_dice;
  b.trained5 = trained.summary.size() > 1 ? trained.summary.back().mean_max_dice : b.trained;
  double sum = 0;
  for (const auto& c : trained.cases) {
    if (c.steps == 1 && c.severity >= 0.7 && c.kind != lesion_kind_name(LesionKind::TexturePatch)) {
      sum += c.max_dice;
      ++b.high_blob_n;
    }
  }
  b.high_blob = b.high_blob_n ? sum / static_cast<double>(b.high_blob_n) : 0.0;
  b.trained_csv = trained.to_csv();
  b.trained_json = trained.to_json().dump();
  return b;
}

Outcome phantom_benchmark(const Pipeline& p, const BenchmarkNumbers& b) {
  const bool ok = b.trained - b.untrained >= 0.3 && b.high_blob >= 0.5 && b.high_blob_n > 0 &&
                  p.cases.size() >= 200 && p.teacher.epochs >= 20;
  return {ok, fmt("%zu cases, mean max-Dice untrained %.3f, trained %.3f (steps 1; %.3f at 5 steps), margin %.3f "
                  "(>= 0.3); high-severity blobs %.3f over %zu cases (>= 0.5); reference %s",
                  p.cases.size(), b.untrained, b.trained, b.trained5, b.trained - b.untrained, b.high_blob,
                  b.high_blob_n, image_reference_name(p.cfg.eval.image_reference))};
}

Outcome normality_preservation(const Pipeline& p) {
  const auto& v = p.teacher.velocity;
  const std::size_t n = p.probe_clean.dim(0);
  const Tensor vc = v.predict(p.probe_clean, 0.0f);
  const std::size_t per = p.probe_clean.size() / n;
  double clean = 0;
  for (std::size_t b = 0; b < n; ++b) {
    double num = 0, den = 0;
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) {
      num += static_cast<double>(vc[i]) * vc[i];
      den += static_cast<double>(p.probe_clean[i]) * p.probe_clean[i];
    }
    clean += num / den;
  }
  clean /= static_cast<double>(n);

  const Tensor y0 = stack_y0(p.probe_pairs);
  const Tensor vm = v.predict(y0, 0.0f);
  const std::size_t c = y0.dim(1), hw = y0.dim(2) * y0.dim(3);
  double masked = 0;
  std::size_t used = 0;
  for (std::size_t b = 0; b < n; ++b) {
    const Mask& m = p.probe_pairs[b].mask;
    if (!m.any()) continue;
    double num = 0, den = 0;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < hw; ++i) {
        if (!m.cells[i]) continue;
        const std::size_t k = (b * c + ch) * hw + i;
        num += static_cast<double>(vm[k]) * vm[k];
        den += static_cast<double>(y0[k]) * y0[k];
      }
    masked += num / den;
    ++used;
  }
  masked /= static_cast<double>(used);
  return {clean <= 0.1 * masked, fmt("normals %.4f vs masked regions %.4f, ratio %.4f (<= 0.1)", clean, masked, clean / masked)};
}

Outcome persistence(const Pipeline& p, const BenchmarkNumbers& b) {
  const fs::path dir = fs::temp_directory_path() / "rfc_acceptance_ckpt";
  fs::remove_all(dir);
  save_flow(dir, p.teacher, p.codec);
  const FlowCheckpoint loaded = load_flow(dir);
  const auto again = evaluate_dataset(loaded.model.velocity, loaded.codec, p.cases, p.cfg.eval);
  const bool same = again.to_csv() == b.trained_csv && again.to_json().dump() == b.trained_json;

  const fs::path bad = dir.string() + "_bad";
  fs::remove_all(bad);
  fs::copy(dir, bad, fs::copy_options::recursive);
  {
    std::fstream f(bad / kBlobFile, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(1234);
    f.put('\x55');
  }
  bool hash_error = false;
  try {
    load_flow(bad);
  } catch (const CheckpointIntegrityError&) {
    hash_error = true;
  }
  auto manifest = nlohmann::json::parse(read_text(dir / kManifestFile));
  manifest["format_version"] = kCheckpointFormatVersion + 1;
  write_text(dir / kManifestFile, manifest.dump());
  bool version_error = false;
  try {
    load_flow(dir);
  } catch (const CheckpointVersionError&) {
    version_error = true;
  }
  fs::remove_all(dir);
  fs::remove_all(bad);
  return {same && hash_error && version_error,
          fmt("metrics bit-identical after reload: %s; corrupted blob -> CheckpointIntegrityError: %s; "
              "version mismatch -> CheckpointVersionError: %s",
              same ? "yes" : "no", hash_error ? "yes" : "no", version_error ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a.rfind("--codec=", 0) == 0) {
      opt.codec_in = a.substr(8);
    } else if (a.rfind("--save-codec=", 0) == 0) {
      opt.codec_out = a.substr(13);
    } else {
      opt.overrides.push_back(a);
    }
  }
  report(1, "gradient correctness", gradient_correctness);
  report(2, "zero-init anchor", zero_init_anchor);
  report(3, "distribution preservation", distribution_preservation);
  report(4, "constant-velocity closed form", constant_velocity);
  report(8, "metric oracle", metric_oracle);

  std::printf("building trained pipeline...\n");
  std::fflush(stdout);
  Pipeline p;
  std::string setup_error;
  try {
    p = build_pipeline(opt);
  } catch (const std::exception& e) {
    setup_error = e.what();
  }
  if (!setup_error.empty()) {
    for (int id : {5, 6, 7, 9}) report(id, "trained pipeline", [&] { return Outcome{false, "setup failed: " + setup_error}; });
    return failures;
  }
  report(5, "single-step adequacy and reflow straightness", [&] { return single_step_adequacy(p); });
  BenchmarkNumbers b;
  report(6, "end-to-end phantom benchmark", [&] {
    b = benchmark(p);
    return phantom_benchmark(p, b);
  });
  report(7, "normality preservation of transport", [&] { return normality_preservation(p); });
  report(9, "persistence", [&] { return persistence(p, b); });
  std::printf("%d criteria failed\n", failures);
  return failures;
}

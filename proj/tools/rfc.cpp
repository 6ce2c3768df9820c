// rfc: command-line front end for codec fitting, flow training, reflow,
// correction, evaluation and dataset generation.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rfc/checkpoint.hpp"
#include "rfc/config.hpp"
#include "rfc/dataset.hpp"
#include "rfc/io.hpp"
#include "rfc/pipeline.hpp"
#include "rfc/scoring.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rfc;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kOutputFormatVersion = 1;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  bool force = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config_path, "JSON config file");
  cmd->add_option("-s,--set", o.overrides, "Dotted override, e.g. train.lr=5e-4")->take_all();
  cmd->add_option("-o,--out", o.out, "Artifact directory");
  cmd->add_flag("-f,--force", o.force, "Overwrite an existing artifact directory");
}

// Artifact directory: resolved config, seed log, INCOMPLETE marker until the
// command finishes.
class RunDir {
 public:
  RunDir(const std::string& command, const CommonOptions& opts, const RunConfig& cfg,
         const json& extra_seeds = json::object()) {
    if (!opts.out.empty()) {
      path_ = opts.out;
    } else if (!cfg.output_dir.empty()) {
      path_ = cfg.output_dir;
    } else {
      const char* root = std::getenv(kOutputRootEnv);
      path_ = fs::path(root && *root ? root : "runs") / command;
    }
    if (fs::exists(path_) && !fs::is_empty(path_)) {
      if (!opts.force) {
        throw ConfigError("output_dir", path_.string() + " already exists and is not empty (use --force)");
      }
      fs::remove_all(path_);
    }
    fs::create_directories(path_);
    write_text(path_ / "INCOMPLETE", "command " + command + " has not finished\n");
    write_text(path_ / "resolved_config.json", cfg.to_json().dump(2) + "\n");
    json seeds = seed_table(cfg.seed);
    seeds["command"] = command;
    seeds["format_version"] = kOutputFormatVersion;
    for (const auto& [k, v] : extra_seeds.items()) seeds[k] = v;
    write_text(path_ / "seeds.json", seeds.dump(2) + "\n");
  }

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

  void finish() { fs::remove(path_ / "INCOMPLETE"); }

 private:
  fs::path path_;
};

RunConfig load_run_config(const CommonOptions& o) {
  return resolve_config(load_config_file(o.config_path), o.overrides);
}

void require_path(const std::string& value, const std::string& flag) {
  if (value.empty()) throw ConfigError(flag, "is required");
  if (!fs::exists(value)) throw ConfigError(flag, "'" + value + "' does not exist");
}

NormalSet training_normals(const RunConfig& cfg) {
  return gen_normals(cfg.data.train_normals, cfg.data.image_size, stream_seed(cfg.seed, Stream::Normals));
}

void write_curve(const fs::path& file, const char* header, const std::vector<double>& curve) {
  std::string csv = std::string(header) + "\n";
  for (std::size_t i = 0; i < curve.size(); ++i) csv += std::to_string(i) + "," + std::to_string(curve[i]) + "\n";
  write_text(file, csv);
}

// Standardised latents mapped to [0, 1] via (v + 3) / 6; channels side by side.
Tensor latent_mosaic(const Tensor& z) {
  const std::size_t c = z.dim(0), h = z.dim(1), w = z.dim(2);
  Tensor out({h, c * w});
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t q = 0; q < w; ++q)
        out[r * c * w + k * w + q] = std::clamp((z[(k * h + r) * w + q] + 3.0f) / 6.0f, 0.0f, 1.0f);
  return out;
}

Tensor side_by_side(std::initializer_list<Tensor> panels) {
  const std::size_t h = panels.begin()->dim(0);
  std::size_t w = 0;
  for (const auto& p : panels) w += p.dim(1);
  Tensor out({h, w});
  std::size_t off = 0;
  for (const auto& p : panels) {
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t q = 0; q < p.dim(1); ++q) out[r * w + off + q] = p[r * p.dim(1) + q];
    off += p.dim(1);
  }
  return out;
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

// --- commands ---------------------------------------------------------------

int cmd_fit_codec(const CommonOptions& o) {
  const RunConfig cfg = load_run_config(o);
  RunDir run("fit-codec", o, cfg);
  const NormalSet normals = training_normals(cfg);
  const Codec codec = build_codec(cfg, normals.images);
  save_codec(run / "codec", codec);
  write_curve(run / "codec_loss.csv", "epoch,train_mse", codec.loss_curve);
  run.finish();
  print_json({{"codec", (run / "codec").string()}, {"holdout_mse", codec.holdout_mse}});
  return 0;
}

Codec codec_for_training(const RunConfig& cfg, const std::string& codec_dir) {
  if (!codec_dir.empty()) {
    require_path(codec_dir, "--codec");
    return load_codec(codec_dir);
  }
  if (cfg.codec_variant != "identity") {
    throw ConfigError("--codec", "is required unless codec.variant is 'identity'");
  }
  return Codec::identity(1);
}

int cmd_train(const CommonOptions& o, const std::string& codec_dir) {
  const RunConfig cfg = load_run_config(o);
  const Codec codec = codec_for_training(cfg, codec_dir);
  RunDir run("train", o, cfg);
  const NormalSet normals = training_normals(cfg);
  const LatentTrainingSet set = prepare_latents(cfg, codec, normals);
  CorruptionPairs source = make_pair_source(cfg, set, Stream::Corruption);
  TrainConfig tc = cfg.train;
  tc.seed = stream_seed(cfg.seed, Stream::Train);
  const FlowModel flow = train(init_velocity(cfg, codec), source, tc);
  save_flow(run / "checkpoint", flow, codec);
  write_curve(run / "loss.csv", "epoch,loss", flow.loss_curve);
  run.finish();
  print_json({{"checkpoint", (run / "checkpoint").string()}, {"id", flow.id()}, {"status", flow.status}});
  return 0;
}

int cmd_reflow(const CommonOptions& o, const std::string& teacher_dir) {
  const RunConfig cfg = load_run_config(o);
  require_path(teacher_dir, "--teacher");
  const FlowCheckpoint teacher = load_flow(teacher_dir);
  RunDir run("reflow", o, cfg, {{"teacher_id", teacher.model.id()}});
  const NormalSet normals = training_normals(cfg);
  const LatentTrainingSet set = prepare_latents(cfg, teacher.codec, normals);
  CorruptionPairs source = make_pair_source(cfg, set, Stream::Reflow);
  ReflowConfig rc = cfg.reflow;
  rc.train.seed = stream_seed(cfg.seed, Stream::Reflow);
  const FlowModel student = reflow(teacher.model, source, rc);
  save_flow(run / "checkpoint", student, teacher.codec);
  write_curve(run / "loss.csv", "epoch,loss", student.loss_curve);
  run.finish();
  print_json({{"checkpoint", (run / "checkpoint").string()},
              {"id", student.id()},
              {"teacher_id", student.teacher_id},
              {"status", student.status}});
  return 0;
}

int cmd_correct(const CommonOptions& o, const std::string& model_dir, const std::string& input_dir,
                std::size_t steps) {
  const RunConfig cfg = load_run_config(o);
  require_path(model_dir, "--model");
  require_path(input_dir, "--input");
  if (steps == 0) steps = cfg.eval.steps.front();
  const FlowCheckpoint ck = load_flow(model_dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(input_dir))
    if (e.path().extension() == ".pgm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("--input", "no .pgm files in " + input_dir);

  RunDir run("correct", o, cfg);
  fs::create_directories(run / "reconstructions");
  fs::create_directories(run / "maps");
  std::string csv = "file,steps,map_mean,map_max\n";
  for (const auto& f : files) {
    const Tensor x = read_pgm(f);
    const AnomalyReport rep =
        analyse_case(ck.model.velocity, ck.codec, x, Mask(x.dim(0), x.dim(1)), steps, cfg.eval.image_reference);
    write_pgm(run / ("reconstructions/" + f.filename().string()), rep.reconstruction);
    write_pgm(run / ("maps/" + f.filename().string()), rep.anomaly_map);
    double mean = 0, mx = 0;
    for (float v : rep.anomaly_map.data()) {
      mean += v;
      mx = std::max(mx, static_cast<double>(v));
    }
    mean /= static_cast<double>(rep.anomaly_map.size());
    csv += f.filename().string() + "," + std::to_string(steps) + "," + std::to_string(mean) + "," +
           std::to_string(mx) + "\n";
  }
  write_text(run / "summary.csv", csv);
  run.finish();
  print_json({{"images", files.size()}, {"steps", steps}, {"out", run.path().string()}});
  return 0;
}

int cmd_eval(const CommonOptions& o, const std::string& model_dir, const std::string& data_dir,
             std::size_t dump) {
  const RunConfig cfg = load_run_config(o);
  require_path(model_dir, "--model");
  if (!data_dir.empty()) require_path(data_dir, "--data");
  const FlowCheckpoint ck = load_flow(model_dir);
  const std::vector<LesionCase> cases = data_dir.empty() ? gen_eval_cases(cfg) : read_dataset(data_dir);
  RunDir run("eval", o, cfg, {{"model_id", ck.model.id()}});
  const DatasetReport rep = evaluate_dataset(ck.model.velocity, ck.codec, cases, cfg.eval);
  write_text(run / "report.csv", rep.to_csv());
  json j = rep.to_json();
  j["format_version"] = kOutputFormatVersion;
  j["model_id"] = ck.model.id();
  j["image_reference"] = image_reference_name(cfg.eval.image_reference);
  write_text(run / "report.json", j.dump(2) + "\n");
  if (dump > 0) {
    // Triptychs: input | reconstruction | anomaly map, at the first step count.
    fs::create_directories(run / "triptychs");
    for (std::size_t i = 0; i < std::min(dump, cases.size()); ++i) {
      const auto r = analyse_case(ck.model.velocity, ck.codec, cases[i].image, cases[i].gt_mask,
                                  cfg.eval.steps.front(), cfg.eval.image_reference);
      char name[32];
      std::snprintf(name, sizeof name, "triptychs/%04zu.pgm", i);
      write_pgm(run / name, side_by_side({cases[i].image, r.reconstruction, r.anomaly_map}));
    }
  }
  run.finish();
  json summary = json::array();
  for (const auto& s : rep.summary)
    summary.push_back({{"steps", s.steps}, {"mean_max_dice", s.mean_max_dice}, {"failed", s.failed}});
  print_json({{"summary", summary}, {"out", run.path().string()}});
  return 0;
}

int cmd_phantom_gen(const CommonOptions& o, std::size_t n, std::optional<std::uint64_t> seed, bool lesions) {
  RunConfig cfg = load_run_config(o);
  if (seed) cfg.seed = *seed;
  RunDir run("phantom-gen", o, cfg);
  if (lesions) {
    const auto cases = gen_lesion_cases(n, cfg.seed, cfg.data.image_size, cfg.data.min_severity);
    write_lesion_dataset(run.path(), cases, cfg.seed);
  } else {
    std::vector<Phantom> ps;
    for (std::size_t i = 0; i < n; ++i) ps.push_back(gen_phantom(derive_seed(cfg.seed, i), cfg.data.image_size));
    write_normal_dataset(run.path(), ps, cfg.seed);
  }
  run.finish();
  print_json({{"count", n}, {"kind", lesions ? "lesions" : "normals"}, {"out", run.path().string()}});
  return 0;
}

int cmd_trajectory(const CommonOptions& o, const std::string& model_dir, std::size_t n, std::size_t steps) {
  const RunConfig cfg = load_run_config(o);
  require_path(model_dir, "--model");
  if (steps < 2) throw ConfigError("--steps", "must be at least 2");
  const FlowCheckpoint ck = load_flow(model_dir);
  RunConfig case_cfg = cfg;
  case_cfg.data.eval_cases = n;
  const auto cases = gen_eval_cases(case_cfg);
  RunDir run("trajectory", o, cfg, {{"model_id", ck.model.id()}});
  std::string csv = "case,steps,straightness,one_step_vs_n_step_mse,correction_mse\n";
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const Tensor& img = cases[i].image;
    const Tensor y = ck.codec.encode(img.reshaped({1, 1, img.dim(0), img.dim(1)}));
    const Trajectory traj = euler_solve(ck.model.velocity, y, steps, Direction::Reverse);
    const Tensor one = correct(ck.model.velocity, y, 1);
    const fs::path dir = run / ("case_" + std::to_string(i));
    fs::create_directories(dir);
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "step_%02zu", k);
      const Tensor& z = traj.states[k];
      write_pgm(dir / (std::string(stem) + "_latent.pgm"), latent_mosaic(z.slice(0)));
      write_pgm(dir / (std::string(stem) + "_image.pgm"), ck.codec.decode(z).slice(0).slice(0));
    }
    write_pgm(dir / "single_step_image.pgm", ck.codec.decode(one).slice(0).slice(0));
    const double n_el = static_cast<double>(y.size());
    csv += std::to_string(i) + "," + std::to_string(steps) + "," +
           std::to_string(straightness(ck.model.velocity, y, steps)) + "," +
           std::to_string(sum_squares(one - traj.end()) / n_el) + "," +
           std::to_string(sum_squares(traj.end() - y) / n_el) + "\n";
  }
  write_text(run / "straightness.csv", csv);
  run.finish();
  print_json({{"cases", cases.size()}, {"steps", steps}, {"out", run.path().string()}});
  return 0;
}

void report_error(const char* kind, const std::string& message, const std::string& field,
                  const std::string& config_path) {
  json j = {{"error", kind}, {"message", message}};
  if (!field.empty()) j["field"] = field;
  if (!config_path.empty()) j["config"] = config_path;
  std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent rectified-flow anomaly correction on synthetic phantoms"};
  app.require_subcommand(1);
  CommonOptions opts;
  std::string codec_dir, teacher_dir, model_dir, input_dir, data_dir;
  std::size_t steps = 0, n = 10, dump = 0;
  std::uint64_t seed_value = 0;
  bool lesions = false;

  auto* fit = app.add_subcommand("fit-codec", "Fit the latent codec on generated normals");
  add_common(fit, opts);

  auto* tr = app.add_subcommand("train", "Train a generation-1 flow");
  add_common(tr, opts);
  tr->add_option("--codec", codec_dir, "Codec checkpoint from fit-codec");

  auto* rf = app.add_subcommand("reflow", "Distil a generation-2 flow from a teacher");
  add_common(rf, opts);
  rf->add_option("--teacher", teacher_dir, "Generation-1 checkpoint")->required();

  auto* co = app.add_subcommand("correct", "Correct every PGM in a directory");
  add_common(co, opts);
  co->add_option("--model", model_dir, "Flow checkpoint")->required();
  co->add_option("--input", input_dir, "Directory of .pgm images")->required();
  co->add_option("--steps", steps, "Reverse Euler steps (default: first eval.steps entry)");

  auto* ev = app.add_subcommand("eval", "Max-Dice evaluation on lesion cases");
  add_common(ev, opts);
  ev->add_option("--model", model_dir, "Flow checkpoint")->required();
  ev->add_option("--data", data_dir, "Lesion dataset from phantom-gen --lesions (default: generated)");
  ev->add_option("--dump", dump, "Write input/reconstruction/map triptychs for the first N cases");

  auto* pg = app.add_subcommand("phantom-gen", "Export a phantom dataset");
  add_common(pg, opts);
  pg->add_option("-n,--count", n, "Number of images");
  auto* seed_opt = pg->add_option("--seed", seed_value, "Dataset seed (default: config seed)");
  pg->add_flag("--lesions", lesions, "Inject lesions and store their masks");

  auto* tj = app.add_subcommand("trajectory", "Dump reverse-ODE trajectories and straightness");
  add_common(tj, opts);
  tj->add_option("--model", model_dir, "Flow checkpoint")->required();
  tj->add_option("-n,--count", n, "Number of lesion cases");
  tj->add_option("--steps", steps, "Euler steps (default 10)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*fit) return cmd_fit_codec(opts);
    if (*tr) return cmd_train(opts, codec_dir);
    if (*rf) return cmd_reflow(opts, teacher_dir);
    if (*co) return cmd_correct(opts, model_dir, input_dir, steps);
    if (*ev) return cmd_eval(opts, model_dir, data_dir, dump);
    if (*pg) {
      return cmd_phantom_gen(opts, n, *seed_opt ? std::optional<std::uint64_t>(seed_value) : std::nullopt, lesions);
    }
    if (*tj) return cmd_trajectory(opts, model_dir, n, steps == 0 ? 10 : steps);
  } catch (const ConfigError& e) {
    report_error("config", e.what(), e.field, opts.config_path);
    return kExitConfig;
  } catch (const std::exception& e) {
    report_error("runtime", e.what(), "", opts.config_path);
    return kExitRuntime;
  }
  return kExitConfig;
}

#include "rfc/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "rfc/io.hpp"
#include "rfc/optim.hpp"
#include "rfc/rng.hpp"

namespace rfc {

namespace {

std::size_t sample_size(const Tensor& t) { return t.size() / t.dim(0); }

void require_batch(const char* op, const Tensor& a, const Tensor& b) {
  require_same_shape(op, a.shape(), b.shape());
  if (a.rank() < 2) throw ShapeError(std::string(op) + ": need a batch axis, got " + shape_str(a.shape()));
}

double batch_loss(const VelocityModel& model, const Tensor& y0, const Tensor& y1,
                  std::span<const float> t, bool correction) {
  require_batch("rf_loss", y0, y1);
  const Tensor v = model.predict(interpolate(y0, y1, t), t);
  const Tensor target = correction ? y0 - y1 : y1 - y0;
  return sum_squares(target - v) / static_cast<double>(y0.dim(0));
}

bool finite_tensor(const Tensor& t) { return t.all_finite(); }

FlowModel fit(VelocityModel model, PairSource& source, const TrainConfig& cfg, float lr,
              int generation) {
  cfg.validate();
  AdamWState state = AdamWState::for_params(model.params());
  const AdamWConfig opt{.lr = lr, .weight_decay = cfg.weight_decay};
  Rng rng(derive_seed(cfg.seed, 21));
  FlowModel out{.velocity = std::move(model)};
  out.generation = generation;
  out.seed = cfg.seed;
  out.epochs = cfg.epochs;
  VelocityModel& vm = out.velocity;

  std::vector<std::size_t> order;
  std::vector<float> t;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto [y0, y1] = source.epoch(epoch);
    require_batch("train", y0, y1);
    if (epoch == 0) {
      Shape sample(y0.shape().begin() + 1, y0.shape().end());
      vm.check_sample_shape(sample);
    }
    const std::size_t n = y0.dim(0);
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(cfg.batch_size, n - start));
      const Tensor b0 = y0.take(idx), b1 = y1.take(idx);
      t.resize(idx.size());
      for (auto& ti : t) ti = static_cast<float>(uniform(rng));
      Graph g;
      Var v = vm.forward(g, g.constant(interpolate(b0, b1, t)), t);
      Var loss = ops::mul_scalar(ops::sq_norm(ops::sub(v, g.constant(b0 - b1))),
                                 1.0f / static_cast<float>(idx.size()));
      const double lv = loss.value().item();
      if (!std::isfinite(lv)) {
        throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                ", batch " + std::to_string(batch_index) +
                                " (lr " + std::to_string(lr) + ")",
                            lr, epoch, batch_index);
      }
      g.backward(loss);
      if (cfg.clip_norm > 0) clip_grad_norm(vm.params(), cfg.clip_norm);
      adamw_step(vm.params(), state, opt);
      total += lv * static_cast<double>(idx.size());
    }
    out.loss_curve.push_back(total / static_cast<double>(n));
  }
  if (out.loss_curve.size() >= 2 && !(out.loss_curve.back() * 2 <= out.loss_curve.front())) {
    out.status = "warning: final epoch loss " + std::to_string(out.loss_curve.back()) +
                 " not below half of the first (" + std::to_string(out.loss_curve.front()) + ")";
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("train." + field + ": " + why);
  };
  if (batch_size == 0) fail("batch_size", "must be positive");
  if (!(lr > 0)) fail("lr", "must be positive");
  if (!(reflow_lr > 0)) fail("reflow_lr", "must be positive");
  if (reflow_lr > lr) fail("reflow_lr", "must not exceed lr");
  if (clip_norm < 0) fail("clip_norm", "must be non-negative");
  if (weight_decay < 0) fail("weight_decay", "must be non-negative");
}

FixedPairs::FixedPairs(Tensor y0, Tensor y1) : y0_(std::move(y0)), y1_(std::move(y1)) {
  require_batch("FixedPairs", y0_, y1_);
}

CorruptionPairs::CorruptionPairs(Tensor normals, std::vector<Mask> foregrounds,
                                 CorruptionConfig cfg, const TextureBank* textures,
                                 std::uint64_t seed)
    : normals_(std::move(normals)),
      foregrounds_(std::move(foregrounds)),
      cfg_(cfg),
      textures_(textures),
      seed_(seed) {
  cfg_.validate();
  if (normals_.rank() != 4) {
    throw ShapeError("CorruptionPairs: expected [N, C, h, w], got " + shape_str(normals_.shape()));
  }
  if (foregrounds_.size() != 1 && foregrounds_.size() != normals_.dim(0)) {
    throw std::invalid_argument("CorruptionPairs: need one foreground per sample or one shared");
  }
}

std::vector<CorruptedPair> CorruptionPairs::pairs(std::size_t index) const {
  std::vector<CorruptedPair> out;
  out.reserve(normals_.dim(0));
  for (std::size_t i = 0; i < normals_.dim(0); ++i) {
    Rng rng(derive_seed(derive_seed(seed_, index), i));
    const Mask& fg = foregrounds_.size() == 1 ? foregrounds_[0] : foregrounds_[i];
    out.push_back(make_pair(normals_.slice(i), fg, cfg_, textures_, rng));
  }
  return out;
}

std::pair<Tensor, Tensor> CorruptionPairs::epoch(std::size_t index) {
  std::vector<Tensor> y0;
  y0.reserve(normals_.dim(0));
  for (auto& p : pairs(index)) y0.push_back(std::move(p.y0));
  return {Tensor::stack(y0), normals_};
}

std::string FlowModel::id() const {
  std::string bytes;
  for (const auto& p : velocity.params()) {
    bytes += p.name;
    bytes.append(reinterpret_cast<const char*>(p.value.data().data()), p.value.size() * sizeof(float));
  }
  return sha256_hex(bytes).substr(0, 16);
}

nlohmann::json FlowModel::metadata() const {
  return {{"generation", generation}, {"seed", seed},        {"epochs", epochs},
          {"loss_curve", loss_curve}, {"status", status},     {"teacher_id", teacher_id},
          {"id", id()}};
}

Tensor interpolate(const Tensor& y0, const Tensor& y1, float t) {
  require_same_shape("interpolate", y0.shape(), y1.shape());
  if (!(t >= 0.0f && t <= 1.0f)) throw std::invalid_argument("interpolate: t outside [0, 1]");
  Tensor out(y0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0f - t) * y0[i] + t * y1[i];
  return out;
}

Tensor interpolate(const Tensor& y0, const Tensor& y1, std::span<const float> t) {
  require_batch("interpolate", y0, y1);
  if (t.size() != y0.dim(0)) {
    throw ShapeError("interpolate: " + std::to_string(t.size()) + " times for batch " +
                     std::to_string(y0.dim(0)));
  }
  const std::size_t n = sample_size(y0);
  Tensor out(y0.shape());
  for (std::size_t b = 0; b < t.size(); ++b) {
    const float tb = t[b];
    if (!(tb >= 0.0f && tb <= 1.0f)) throw std::invalid_argument("interpolate: t outside [0, 1]");
    for (std::size_t i = b * n; i < (b + 1) * n; ++i) out[i] = (1.0f - tb) * y0[i] + tb * y1[i];
  }
  return out;
}

double rf_loss(const VelocityModel& model, const Tensor& y0, const Tensor& y1,
               std::span<const float> t) {
  return batch_loss(model, y0, y1, t, false);
}

double correction_loss(const VelocityModel& model, const Tensor& y0, const Tensor& y1,
                       std::span<const float> t) {
  return batch_loss(model, y0, y1, t, true);
}

FlowModel train(VelocityModel model, PairSource& source, const TrainConfig& cfg) {
  return fit(std::move(model), source, cfg, cfg.lr, 1);
}

VelocityField field_of(const VelocityModel& model) {
  return [&model](const Tensor& z, float t) { return model.predict(z, t); };
}

Trajectory euler_solve(const VelocityField& field, const Tensor& z, std::size_t steps,
                       Direction direction) {
  if (steps == 0) throw std::invalid_argument("euler_solve: steps must be at least 1");
  const float h = 1.0f / static_cast<float>(steps);
  const float sign = direction == Direction::Forward ? 1.0f : -1.0f;
  Trajectory tr;
  tr.states.reserve(steps + 1);
  tr.states.push_back(z);
  for (std::size_t k = 0; k < steps; ++k) {
    const float tk = static_cast<float>(k) / static_cast<float>(steps);
    Tensor v = field(tr.states.back(), tk);
    require_same_shape("euler_solve", v.shape(), z.shape());
    Tensor next = tr.states.back();
    for (std::size_t i = 0; i < next.size(); ++i) next[i] += sign * h * v[i];
    if (!finite_tensor(next)) {
      throw NumericalError("euler_solve: non-finite state after step " + std::to_string(k + 1));
    }
    tr.velocities.push_back(v * sign);
    tr.states.push_back(std::move(next));
  }
  return tr;
}

Trajectory euler_solve(const VelocityModel& model, const Tensor& z, std::size_t steps,
                       Direction direction) {
  return euler_solve(field_of(model), z, steps, direction);
}

Tensor correct(const VelocityModel& model, const Tensor& y, std::size_t steps) {
  if (steps == 1) {
    // Written out so the single step is literally y - v(y, 0).
    const Tensor v = model.predict(y, 0.0f);
    Tensor out = y - v;
    if (!finite_tensor(out)) throw NumericalError("correct: non-finite output");
    return out;
  }
  return euler_solve(model, y, steps, Direction::Reverse).end();
}

double straightness(const VelocityField& field, const Tensor& z_starts, std::size_t steps,
                    Direction direction) {
  if (steps < 2) throw std::invalid_argument("straightness: steps must be at least 2");
  if (z_starts.rank() < 2) {
    throw ShapeError("straightness: need a batch axis, got " + shape_str(z_starts.shape()));
  }
  const Trajectory tr = euler_solve(field, z_starts, steps, direction);
  const std::size_t n = sample_size(z_starts);
  double total = 0;
  std::size_t used = 0;
  for (std::size_t b = 0; b < z_starts.dim(0); ++b) {
    double disp2 = 0;
    for (std::size_t i = b * n; i < (b + 1) * n; ++i) {
      const double d = static_cast<double>(tr.end()[i]) - z_starts[i];
      disp2 += d * d;
    }
    if (std::sqrt(disp2) < 1e-8) continue;
    double acc = 0;
    for (const auto& u : tr.velocities) {
      double dev = 0;
      for (std::size_t i = b * n; i < (b + 1) * n; ++i) {
        const double d = static_cast<double>(tr.end()[i]) - z_starts[i];
        const double e = u[i] - d;
        dev += e * e;
      }
      acc += dev / disp2;
    }
    total += acc / static_cast<double>(steps);
    ++used;
  }
  return used ? total / static_cast<double>(used) : 0.0;
}

double straightness(const VelocityModel& model, const Tensor& z_starts, std::size_t steps,
                    Direction direction) {
  return straightness(field_of(model), z_starts, steps, direction);
}

FlowModel reflow(const FlowModel& teacher, PairSource& source, const ReflowConfig& cfg) {
  if (teacher.generation != 1) {
    throw std::invalid_argument("reflow: teacher must be generation 1, got " +
                                std::to_string(teacher.generation));
  }
  if (cfg.pair_rounds == 0 || cfg.teacher_steps == 0) {
    throw std::invalid_argument("reflow: pair_rounds and teacher_steps must be positive");
  }
  std::vector<Tensor> z0, z1;
  for (std::size_t r = 0; r < cfg.pair_rounds; ++r) {
    Tensor y0 = source.epoch(r).first;
    Shape sample(y0.shape().begin() + 1, y0.shape().end());
    teacher.velocity.check_sample_shape(sample);
    Tensor end = euler_solve(teacher.velocity, y0, cfg.teacher_steps, Direction::Reverse).end();
    for (std::size_t i = 0; i < y0.dim(0); ++i) {
      z0.push_back(y0.slice(i));
      z1.push_back(end.slice(i));
    }
  }
  FixedPairs pairs(Tensor::stack(z0), Tensor::stack(z1));
  FlowModel student = fit(teacher.velocity, pairs, cfg.train, cfg.train.reflow_lr, 2);
  student.teacher_id = teacher.id();
  return student;
}

}  // namespace rfc

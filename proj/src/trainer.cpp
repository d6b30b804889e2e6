#include "monet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <numeric>

#include "monet/error.hpp"

namespace monet::train {

void AdamW::step(std::span<Param* const> params, const ad::GradientStore& grads, double lr) {
  for (const Param* p : params) {
    const DenseTensor* g = grads.find(p->id);
    if (g == nullptr) continue;
    if (g->shape() != p->value.shape()) throw DimensionError("adamw: gradient shape differs from parameter");
    if (!g->all_finite()) throw NumericError("adamw: non-finite gradient for parameter " + std::to_string(p->id));
  }
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (Param* p : params) {
    const DenseTensor* g = grads.find(p->id);
    if (g == nullptr) continue;
    auto [it, fresh] = moments_.try_emplace(p->id);
    if (fresh) it->second = Moments{DenseTensor(p->value.shape()), DenseTensor(p->value.shape())};
    Moments& mo = it->second;
    const bool decay = options_.weight_decay != 0.0 && (options_.decay_vectors || p->value.rank() >= 2);
    const double shrink = decay ? 1.0 - lr * options_.weight_decay : 1.0;
    double* w = p->value.raw();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double gi = (*g)[i];
      mo.m[i] = b1 * mo.m[i] + (1.0 - b1) * gi;
      mo.v[i] = b2 * mo.v[i] + (1.0 - b2) * gi * gi;
      const double mhat = mo.m[i] / c1, vhat = mo.v[i] / c2;
      w[i] = w[i] * shrink - lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
  }
}

double clip_grad_norm(ad::GradientStore& grads, double max_norm) {
  const double norm = grads.global_norm();
  if (max_norm > 0.0 && norm > max_norm) grads.scale(max_norm / norm);
  return norm;
}

void Schedule::validate() const {
  if (!(warmup >= 0.0 && warmup < total)) throw ConfigError("schedule: warmup must lie in [0, total)");
  if (!(floor <= base)) throw ConfigError("schedule: floor must not exceed the base rate");
  if (!(initial >= 0.0 && floor >= 0.0)) throw ConfigError("schedule: rates must be non-negative");
}

double lr_at(const Schedule& s, double t) {
  t = std::clamp(t, 0.0, s.total);
  if (t < s.warmup) return s.initial + (s.base - s.initial) * (t / s.warmup);
  const double span = s.total - s.warmup;
  const double progress = span > 0.0 ? (t - s.warmup) / span : 1.0;
  return s.floor + 0.5 * (s.base - s.floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

namespace {

struct BatchScore {
  std::size_t top1 = 0;
  std::size_t top5 = 0;
};

BatchScore score(const DenseTensor& logits, std::span<const std::uint32_t> targets) {
  BatchScore s;
  const std::size_t k = logits.cols();
  for (std::size_t b = 0; b < targets.size(); ++b) {
    const double t = logits.at(b, targets[b]);
    std::size_t above = 0;
    for (std::size_t j = 0; j < k; ++j) above += logits.at(b, j) > t;
    s.top1 += above < 1;
    s.top5 += above < 5;
  }
  return s;
}

std::vector<std::size_t> to_size(std::span<const std::uint32_t> v) { return {v.begin(), v.end()}; }

void check_geometry(const MonetModel& model, const data::LabeledImageSet& set) {
  const ModelConfig& c = model.config;
  if (set.height != c.image_height || set.width != c.image_width || set.channels != c.in_channels) {
    throw GeometryError("dataset images do not match the model's input geometry");
  }
  if (c.num_classes == 0 || set.num_classes > c.num_classes) {
    throw ConfigError("dataset has more classes than the model head");
  }
}

}  // namespace

Metrics evaluate(const MonetModel& model, const data::LabeledImageSet& set, std::size_t batch) {
  check_geometry(model, set);
  if (batch == 0) throw InputError("evaluate: batch must be positive");
  Metrics m;
  double loss_sum = 0.0;
  std::size_t top1 = 0, top5 = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < set.count; start += batch) {
    const std::size_t n = std::min(batch, set.count - start);
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), start);
    const DenseTensor x = data::make_batch(set, idx, model.config.channel_mean, model.config.channel_std);
    const DenseTensor logits = forward(model, x);
    std::span<const std::uint32_t> labels(set.labels.data() + start, n);
    const auto targets = to_size(labels);
    loss_sum += kernels::cross_entropy_label_smoothed(logits, targets, 0.0) * static_cast<double>(n);
    const BatchScore s = score(logits, labels);
    top1 += s.top1;
    top5 += s.top5;
  }
  m.samples = set.count;
  if (set.count > 0) {
    m.loss = loss_sum / static_cast<double>(set.count);
    m.top1 = static_cast<double>(top1) / static_cast<double>(set.count);
    m.top5 = static_cast<double>(top5) / static_cast<double>(set.count);
  }
  return m;
}

Metrics train_epoch(MonetModel& model, AdamW& opt, const data::LabeledImageSet& set, const TrainSettings& settings,
                    std::size_t epoch) {
  check_geometry(model, set);
  if (settings.batch == 0) throw InputError("train_epoch: batch must be positive");
  settings.schedule.validate();
  std::mt19937_64 rng(settings.seed * 0x9E3779B97F4A7C15ULL + epoch + 1);
  std::vector<std::size_t> order(set.count);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  auto named = model.parameters();
  std::vector<Param*> params;
  for (auto& np : named) params.push_back(np.param);

  const bool augment = settings.augment.flip || settings.augment.pad_crop;
  const std::size_t batches = (set.count + settings.batch - 1) / settings.batch;
  Metrics m;
  double loss_sum = 0.0;
  std::size_t top1 = 0, top5 = 0;
  for (std::size_t bi = 0; bi < batches; ++bi) {
    const std::size_t start = bi * settings.batch;
    const std::size_t n = std::min(settings.batch, set.count - start);
    std::span<const std::size_t> idx(order.data() + start, n);
    const DenseTensor x = data::make_batch(set, idx, model.config.channel_mean, model.config.channel_std,
                                           settings.augment, augment ? &rng : nullptr);
    std::vector<std::uint32_t> labels;
    for (std::size_t i : idx) labels.push_back(set.labels[i]);
    const auto targets = to_size(labels);

    ad::Tape tape;
    TapeBackend be(tape);
    const ad::Var logits = forward(be, model, be.input(x));
    const ad::Var loss = tape.cross_entropy(logits, targets, settings.label_smoothing);
    ad::GradientStore grads = tape.backward(loss);
    if (settings.clip_norm > 0.0) clip_grad_norm(grads, settings.clip_norm);
    const double lr = lr_at(settings.schedule, static_cast<double>(epoch) + static_cast<double>(bi) / batches);
    opt.step(params, grads, lr);

    loss_sum += loss.value().item() * static_cast<double>(n);
    const BatchScore s = score(logits.value(), labels);
    top1 += s.top1;
    top5 += s.top5;
  }
  m.samples = set.count;
  if (set.count > 0) {
    m.loss = loss_sum / static_cast<double>(set.count);
    m.top1 = static_cast<double>(top1) / static_cast<double>(set.count);
    m.top5 = static_cast<double>(top5) / static_cast<double>(set.count);
  }
  return m;
}

std::vector<EpochRecord> run(MonetModel& model, const data::LabeledImageSet& train_set,
                             const data::LabeledImageSet& val, const TrainSettings& settings,
                             const RunOptions& options) {
  AdamW opt(settings.adamw);
  std::vector<EpochRecord> history;
  std::ofstream csv;
  if (!options.csv_path.empty()) {
    csv.open(options.csv_path);
    if (!csv) throw FormatError("cannot open " + options.csv_path + " for writing");
    csv << "epoch,lr,train_loss,val_top1,val_top5\n";
  }
  for (std::size_t e = 0; e < options.epochs; ++e) {
    const Metrics tr = train_epoch(model, opt, train_set, settings, e);
    const Metrics va = evaluate(model, val, settings.batch);
    EpochRecord r{e + 1, lr_at(settings.schedule, static_cast<double>(e + 1)), tr.loss, va.top1, va.top5};
    history.push_back(r);
    if (csv.is_open()) {
      csv << r.epoch << ',' << r.lr << ',' << r.train_loss << ',' << r.val_top1 << ',' << r.val_top5 << '\n';
      csv.flush();
    }
    if (options.log_progress) {
      std::cerr << "epoch " << r.epoch << "  lr " << r.lr << "  train_loss " << r.train_loss << "  train_top1 "
                << tr.top1 << "  val_top1 " << r.val_top1 << "  val_top5 " << r.val_top5 << '\n';
    }
    if (!options.checkpoint_path.empty() && options.checkpoint_every > 0 &&
        ((e + 1) % options.checkpoint_every == 0 || e + 1 == options.epochs)) {
      save(model, options.checkpoint_path);
    }
  }
  return history;
}

}  // namespace monet::train

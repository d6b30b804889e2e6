#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "monet/autodiff.hpp"
#include "monet/data.hpp"
#include "monet/model.hpp"

namespace monet::train {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  /// Biases and norm affine vectors (rank < 2) are left undecayed unless set.
  bool decay_vectors = false;
};

/// AdamW with decoupled weight decay: w <- w(1 - lr·wd), then the bias-corrected Adam update.
class AdamW {
 public:
  explicit AdamW(AdamWOptions options = {}) : options_(options) {}

  /// One update of every listed parameter. A non-finite gradient raises NumericError and
  /// leaves parameters and moments untouched. Parameters without a gradient are skipped.
  void step(std::span<Param* const> params, const ad::GradientStore& grads, double lr);

  std::uint64_t steps() const noexcept { return step_; }
  const AdamWOptions& options() const noexcept { return options_; }

 private:
  struct Moments {
    DenseTensor m;
    DenseTensor v;
  };
  AdamWOptions options_;
  std::uint64_t step_ = 0;
  std::unordered_map<ParamId, Moments> moments_;
};

/// Rescales gradients so their global norm is at most `max_norm`; returns the norm before clipping.
double clip_grad_norm(ad::GradientStore& grads, double max_norm);

/// Linear warmup from `initial` to `base` over `warmup` epochs, then cosine decay to `floor` at `total`.
struct Schedule {
  double initial = 1e-4;
  double base = 1e-3;
  double floor = 1e-5;
  double warmup = 10;
  double total = 300;

  void validate() const;
};

/// Learning rate at epoch position t (fractional), clamped to [0, total].
double lr_at(const Schedule& s, double t);

struct TrainSettings {
  std::size_t batch = 128;
  double label_smoothing = 0.1;
  double clip_norm = 0.0;  // 0 disables clipping
  data::AugmentPolicy augment;
  Schedule schedule;
  AdamWOptions adamw;
  std::uint64_t seed = 0;
};

struct Metrics {
  double loss = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
  std::size_t samples = 0;
};

/// Mean label-smoothed loss and accuracies; batches of `batch` images, no augmentation.
Metrics evaluate(const MonetModel& model, const data::LabeledImageSet& set, std::size_t batch);

/// One pass over `set` in a seeded random order. Returns the epoch-mean training loss and the
/// accuracy of the logits seen during training.
Metrics train_epoch(MonetModel& model, AdamW& opt, const data::LabeledImageSet& set, const TrainSettings& settings,
                    std::size_t epoch);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_top1 = 0.0;
  double val_top5 = 0.0;
};

struct RunOptions {
  std::size_t epochs = 1;
  std::string csv_path;         // empty: no CSV
  std::string checkpoint_path;  // empty: no checkpoints
  std::size_t checkpoint_every = 1;
  bool log_progress = false;    // one line per epoch on stderr
};

/// Trains for `epochs`, evaluating on `val` after each epoch, writing CSV rows
/// (epoch, lr, train_loss, val_top1, val_top5) and periodic checkpoints.
std::vector<EpochRecord> run(MonetModel& model, const data::LabeledImageSet& train_set,
                             const data::LabeledImageSet& val, const TrainSettings& settings, const RunOptions& options);

}  // namespace monet::train

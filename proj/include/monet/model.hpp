#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "monet/layers.hpp"

namespace monet {

struct StageConfig {
  std::size_t hidden = 0;
  std::size_t blocks = 0;

  friend bool operator==(const StageConfig&, const StageConfig&) = default;
};

/// Architecture hyperparameters. JSON field names match the member names.
struct ModelConfig {
  std::string name = "custom";
  std::size_t depth = 1;                 // total Poly-Blocks N
  std::size_t hidden = 64;               // block width c (single-stage)
  std::vector<StageConfig> stages;       // multi-stage only; sum of blocks == depth
  std::size_t expansion = 3;             // second Mu-Layer hidden = expansion * c
  std::size_t shrinkage = 4;             // low-rank width = hidden / shrinkage
  std::size_t patch_size = 4;            // fine patch p; the coarse path uses 2p
  bool pyramid = true;                   // include the coarse 2p path
  std::size_t num_classes = 10;          // 0 = headless (pooled features out)
  std::size_t image_height = 32;
  std::size_t image_width = 32;
  std::size_t in_channels = 3;
  bool use_norm = true;
  std::string second_layer = "mu";       // "mu" or "linear" (ablation)
  double norm_eps = 1e-6;
  std::vector<double> channel_mean;      // input standardization, echoed into checkpoints
  std::vector<double> channel_std;

  bool multi_stage() const { return !stages.empty(); }
  /// Stage list with single-stage configs expanded to one stage.
  std::vector<StageConfig> stage_list() const;
  /// Throws ConfigError on the first violated invariant.
  void validate() const;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  static ModelConfig load(const std::string& path);

  static ModelConfig tiny();
  static ModelConfig small();
  static ModelConfig multi_stage_tiny();
  static ModelConfig multi_stage_small();
  /// Desk-scale CIFAR-10 model: 8 blocks of width 64 on 32×32 inputs, patch 2, 10 classes.
  static ModelConfig cifar_small();
  /// Looks up "tiny", "small", "multi-stage-tiny", "multi-stage-small", "cifar-small".
  static ModelConfig preset(const std::string& name);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Stage {
  std::vector<PolyBlockParams> blocks;
  std::optional<ConvParams> transition;  // 2×2 stride-2 downsampler into the next stage
};

struct MonetModel {
  ModelConfig config;
  PyramidEmbedParams embed;
  std::vector<Stage> stages;
  std::optional<LinearParams> head;

  std::vector<NamedParam> parameters();
  std::vector<ConstNamedParam> parameters() const;
  std::size_t parameter_count() const;
};

template <class F>
void for_each_param(MonetModel& m, const std::string& prefix, F&& f) {
  for_each_param(m.embed, prefix + "embed.", f);
  for (std::size_t s = 0; s < m.stages.size(); ++s) {
    const std::string sp = prefix + "stages." + std::to_string(s) + ".";
    for (std::size_t b = 0; b < m.stages[s].blocks.size(); ++b) {
      for_each_param(m.stages[s].blocks[b], sp + "blocks." + std::to_string(b) + ".", f);
    }
    if (m.stages[s].transition) for_each_param(*m.stages[s].transition, sp + "transition.", f);
  }
  if (m.head) for_each_param(*m.head, prefix + "head.", f);
}

/// Builds and Xavier-initializes a model; identical (config, seed) pairs give identical weights.
MonetModel build(const ModelConfig& config, std::uint64_t seed);
/// Same structure with zero weights, identity norms and no random draws.
MonetModel build_zero(const ModelConfig& config);

template <class Be>
typename Be::Value forward(Be& be, const MonetModel& model, const typename Be::Value& images) {
  const Shape& s = Be::shape(images);
  const ModelConfig& cfg = model.config;
  if (s.size() != 4 || s[1] != cfg.image_height || s[2] != cfg.image_width || s[3] != cfg.in_channels) {
    throw GeometryError("forward: images " + shape_string(s) + " do not match configured (batch, " +
                        std::to_string(cfg.image_height) + ", " + std::to_string(cfg.image_width) + ", " +
                        std::to_string(cfg.in_channels) + ")");
  }
  auto x = pyramid_embed_forward(be, model.embed, images);
  for (std::size_t si = 0; si < model.stages.size(); ++si) {
    const Stage& stage = model.stages[si];
    {
      ScopeLabel label("blocks");
      for (std::size_t bi = 0; bi < stage.blocks.size(); ++bi) {
        ScopeLabel block_label("s" + std::to_string(si) + "b" + std::to_string(bi));
        x = poly_block_forward(be, stage.blocks[bi], x);
      }
    }
    if (stage.transition) {
      ScopeLabel label("transition");
      x = be.conv2d(x, *stage.transition);
    }
  }
  if (model.head) return classifier_head(be, *model.head, x);
  ScopeLabel label("pool");
  return be.avgpool(x);
}

/// Numeric forward: (batch, H, W, C) images -> (batch, k) logits.
DenseTensor forward(const MonetModel& model, const DenseTensor& images);

// Checkpoint: "MONET-CHECKPOINT <version>\n", one line of config JSON, the tensor count, then
// for each parameter its name on one line followed by a MONETTEN tensor blob.
void save(const MonetModel& model, const std::string& path);
MonetModel load(const std::string& path);
/// Loads weights into an existing model; a structural mismatch raises ConfigError naming the tensor.
void load_into(MonetModel& model, const std::string& path);

}  // namespace monet

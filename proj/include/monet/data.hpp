#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "monet/tensor.hpp"

namespace monet::data {

/// u8 images stored (count, height, width, channels) with one class index per image.
struct LabeledImageSet {
  std::size_t count = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t num_classes = 0;
  std::vector<std::uint8_t> pixels;
  std::vector<std::uint32_t> labels;

  std::size_t image_size() const noexcept { return height * width * channels; }
  std::span<const std::uint8_t> image(std::size_t i) const { return {pixels.data() + i * image_size(), image_size()}; }
  /// Throws FormatError when counts disagree or a label is out of range.
  void validate() const;
  /// Copy of the listed images.
  LabeledImageSet subset(std::span<const std::size_t> indices) const;

  friend bool operator==(const LabeledImageSet&, const LabeledImageSet&) = default;
};

struct Cifar10 {
  LabeledImageSet train;
  LabeledImageSet test;
};

/// One CIFAR-10 binary batch: records of a label byte followed by 3072 planar RGB bytes.
LabeledImageSet read_cifar10_batch(const std::string& path);
/// data_batch_1..5.bin and test_batch.bin from `dir`; pixels converted to interleaved RGB.
Cifar10 read_cifar10_binary(const std::string& dir);
void write_cifar10_batch(const std::string& path, const LabeledImageSet& set);

/// IDX array of unsigned bytes (type code 0x08).
struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;

  friend bool operator==(const IdxArray&, const IdxArray&) = default;
};

IdxArray read_idx(const std::string& path);
void write_idx(const std::string& path, const IdxArray& a);
/// Pairs an (n, H, W) or (n, H, W, C) image file with an (n) label file.
LabeledImageSet from_idx(const IdxArray& images, const IdxArray& labels, std::size_t num_classes);

/// Internal serialization: pixels and labels as MONETTEN tensors plus the class count.
void save_image_set(const std::string& path, const LabeledImageSet& set);
LabeledImageSet load_image_set(const std::string& path);

struct AugmentPolicy {
  bool flip = false;
  bool pad_crop = false;
  std::size_t pad = 4;
};

/// The random choices of one augmentation: mirror or not, and the crop offset in the padded image.
struct AugmentDraw {
  bool flip = false;
  std::size_t dy = 0;
  std::size_t dx = 0;
};

AugmentDraw draw_augment(const AugmentPolicy& policy, std::mt19937_64& rng);
/// Applies a fixed draw: reflect-pad by policy.pad, crop back to H×W at (dy, dx), then mirror.
std::vector<std::uint8_t> apply_augment(std::span<const std::uint8_t> image, std::size_t height, std::size_t width,
                                        std::size_t channels, const AugmentPolicy& policy, const AugmentDraw& draw);
std::vector<std::uint8_t> augment(std::span<const std::uint8_t> image, std::size_t height, std::size_t width,
                                  std::size_t channels, const AugmentPolicy& policy, std::mt19937_64& rng);

/// Standard CIFAR-10 channel statistics on the [0, 1] scale.
std::vector<double> cifar10_mean();
std::vector<double> cifar10_std();

/// Builds a (batch, H, W, C) f64 tensor: pixel / 255, then (x - mean[c]) / std[c] per channel.
/// Empty mean/std leave values in [0, 1]. With a non-null rng each image is augmented first.
DenseTensor make_batch(const LabeledImageSet& set, std::span<const std::size_t> indices,
                       const std::vector<double>& mean, const std::vector<double>& std_dev,
                       const AugmentPolicy& policy = {}, std::mt19937_64* rng = nullptr);

/// Random-pixel images with random labels.
LabeledImageSet synthetic(std::size_t count, std::size_t height, std::size_t width, std::size_t channels,
                          std::size_t num_classes, std::uint64_t seed);

}  // namespace monet::data

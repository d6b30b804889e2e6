#include "monet/data.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "binary_io.hpp"
#include "monet/error.hpp"

namespace monet::data {

namespace {

constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarPlane = kCifarSide * kCifarSide;
constexpr std::size_t kCifarRecord = 1 + 3 * kCifarPlane;
constexpr std::size_t kCifarBatchRecords = 10000;

std::uintmax_t file_size_or_throw(const std::string& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw FormatError("cannot stat " + path + ": " + ec.message());
  return size;
}

std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  if (i < 0) i = -i;
  const auto m = static_cast<std::ptrdiff_t>(n);
  if (i >= m) i = 2 * (m - 1) - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

void LabeledImageSet::validate() const {
  if (pixels.size() != count * image_size()) throw FormatError("image set: pixel count does not match geometry");
  if (labels.size() != count) throw FormatError("image set: label count does not match image count");
  for (std::size_t i = 0; i < count; ++i) {
    if (labels[i] >= num_classes) {
      throw FormatError("image set: label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                        " out of range for " + std::to_string(num_classes) + " classes");
    }
  }
}

LabeledImageSet LabeledImageSet::subset(std::span<const std::size_t> indices) const {
  LabeledImageSet out;
  out.height = height;
  out.width = width;
  out.channels = channels;
  out.num_classes = num_classes;
  out.count = indices.size();
  out.pixels.reserve(indices.size() * image_size());
  for (std::size_t i : indices) {
    if (i >= count) throw InputError("subset index out of range");
    const auto img = image(i);
    out.pixels.insert(out.pixels.end(), img.begin(), img.end());
    out.labels.push_back(labels[i]);
  }
  return out;
}

LabeledImageSet read_cifar10_batch(const std::string& path) {
  const auto size = file_size_or_throw(path);
  if (size == 0 || size % kCifarRecord != 0) {
    throw FormatError(path + ": size " + std::to_string(size) + " is not a whole number of CIFAR-10 records");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  const std::size_t n = size / kCifarRecord;
  const auto raw = detail::read_bytes(in, size, "CIFAR-10 records");
  LabeledImageSet set;
  set.count = n;
  set.height = set.width = kCifarSide;
  set.channels = 3;
  set.num_classes = 10;
  set.pixels.resize(n * 3 * kCifarPlane);
  set.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const unsigned char* rec = raw.data() + r * kCifarRecord;
    set.labels[r] = rec[0];
    std::uint8_t* dst = set.pixels.data() + r * 3 * kCifarPlane;
    for (std::size_t p = 0; p < kCifarPlane; ++p) {
      for (std::size_t c = 0; c < 3; ++c) dst[p * 3 + c] = rec[1 + c * kCifarPlane + p];
    }
  }
  set.validate();
  return set;
}

void write_cifar10_batch(const std::string& path, const LabeledImageSet& set) {
  set.validate();
  if (set.height != kCifarSide || set.width != kCifarSide || set.channels != 3) {
    throw InputError("write_cifar10_batch: images must be 32x32x3");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  std::vector<char> rec(kCifarRecord);
  for (std::size_t r = 0; r < set.count; ++r) {
    rec[0] = static_cast<char>(set.labels[r]);
    const auto img = set.image(r);
    for (std::size_t p = 0; p < kCifarPlane; ++p) {
      for (std::size_t c = 0; c < 3; ++c) rec[1 + c * kCifarPlane + p] = static_cast<char>(img[p * 3 + c]);
    }
    out.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  }
  if (!out) throw FormatError("failed writing " + path);
}

Cifar10 read_cifar10_binary(const std::string& dir) {
  namespace fs = std::filesystem;
  auto batch = [&](const std::string& name) {
    const std::string path = (fs::path(dir) / name).string();
    if (!fs::exists(path)) throw FormatError("CIFAR-10 file missing: " + path);
    LabeledImageSet s = read_cifar10_batch(path);
    if (s.count != kCifarBatchRecords) {
      throw FormatError(path + ": expected " + std::to_string(kCifarBatchRecords) + " records, found " +
                        std::to_string(s.count));
    }
    return s;
  };
  Cifar10 out;
  out.train = batch("data_batch_1.bin");
  for (int i = 2; i <= 5; ++i) {
    LabeledImageSet s = batch("data_batch_" + std::to_string(i) + ".bin");
    out.train.pixels.insert(out.train.pixels.end(), s.pixels.begin(), s.pixels.end());
    out.train.labels.insert(out.train.labels.end(), s.labels.begin(), s.labels.end());
    out.train.count += s.count;
  }
  out.test = batch("test_batch.bin");
  return out;
}

IdxArray read_idx(const std::string& path) {
  const auto size = file_size_or_throw(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  unsigned char magic[4];
  if (!in.read(reinterpret_cast<char*>(magic), 4)) throw FormatError(path + ": truncated IDX header");
  if (magic[0] != 0 || magic[1] != 0) throw FormatError(path + ": bad IDX magic");
  if (magic[2] != 0x08) throw FormatError(path + ": unsupported IDX element type " + std::to_string(magic[2]));
  const std::size_t ndims = magic[3];
  if (ndims == 0) throw FormatError(path + ": IDX file declares zero dimensions");
  IdxArray a;
  std::uint64_t volume = 1;
  for (std::size_t i = 0; i < ndims; ++i) {
    const std::uint32_t d = detail::read_be_u32(in, "IDX dimension");
    a.dims.push_back(d);
    volume *= d;
    if (volume > size) break;  // checked below
  }
  const std::uint64_t header = 4 + 4 * ndims;
  if (a.dims.size() != ndims || size < header || volume != size - header) {
    throw FormatError(path + ": dimension product does not match the payload length");
  }
  const auto bytes = detail::read_bytes(in, volume, "IDX payload");
  a.data.assign(bytes.begin(), bytes.end());
  return a;
}

void write_idx(const std::string& path, const IdxArray& a) {
  std::uint64_t volume = 1;
  for (auto d : a.dims) volume *= d;
  if (a.dims.empty() || a.dims.size() > 255 || volume != a.data.size()) {
    throw InputError("write_idx: dimensions do not match the data length");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  const char magic[4] = {0, 0, 0x08, static_cast<char>(a.dims.size())};
  out.write(magic, 4);
  for (auto d : a.dims) detail::write_be_u32(out, d);
  out.write(reinterpret_cast<const char*>(a.data.data()), static_cast<std::streamsize>(a.data.size()));
  if (!out) throw FormatError("failed writing " + path);
}

LabeledImageSet from_idx(const IdxArray& images, const IdxArray& labels, std::size_t num_classes) {
  if (images.dims.size() != 3 && images.dims.size() != 4) throw FormatError("IDX images must have 3 or 4 dimensions");
  if (labels.dims.size() != 1 || labels.dims[0] != images.dims[0]) {
    throw FormatError("IDX labels must be one per image");
  }
  LabeledImageSet s;
  s.count = images.dims[0];
  s.height = images.dims[1];
  s.width = images.dims[2];
  s.channels = images.dims.size() == 4 ? images.dims[3] : 1;
  s.num_classes = num_classes;
  s.pixels = images.data;
  s.labels.assign(labels.data.begin(), labels.data.end());
  s.validate();
  return s;
}

void save_image_set(const std::string& path, const LabeledImageSet& set) {
  set.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  DenseTensor pixels({set.count, set.height, set.width, set.channels});
  for (std::size_t i = 0; i < set.pixels.size(); ++i) pixels[i] = set.pixels[i];
  DenseTensor labels({set.count});
  for (std::size_t i = 0; i < set.count; ++i) labels[i] = set.labels[i];
  write_tensor(out, DenseTensor::scalar(static_cast<double>(set.num_classes)));
  write_tensor(out, pixels);
  write_tensor(out, labels);
}

LabeledImageSet load_image_set(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  const DenseTensor k = read_tensor(in);
  const DenseTensor pixels = read_tensor(in);
  const DenseTensor labels = read_tensor(in);
  if (k.rank() != 0 || pixels.rank() != 4 || labels.rank() != 1 || labels.size() != pixels.shape()[0]) {
    throw FormatError(path + ": not an image set");
  }
  LabeledImageSet s;
  s.num_classes = static_cast<std::size_t>(k.item());
  s.count = pixels.shape()[0];
  s.height = pixels.shape()[1];
  s.width = pixels.shape()[2];
  s.channels = pixels.shape()[3];
  s.pixels.reserve(pixels.size());
  for (double v : pixels.data()) {
    if (!(v >= 0.0 && v <= 255.0) || v != std::floor(v)) throw FormatError(path + ": pixel value out of range");
    s.pixels.push_back(static_cast<std::uint8_t>(v));
  }
  for (double v : labels.data()) s.labels.push_back(static_cast<std::uint32_t>(v));
  s.validate();
  return s;
}

AugmentDraw draw_augment(const AugmentPolicy& policy, std::mt19937_64& rng) {
  AugmentDraw d;
  if (policy.pad_crop) {
    std::uniform_int_distribution<std::size_t> off(0, 2 * policy.pad);
    d.dy = off(rng);
    d.dx = off(rng);
  } else {
    d.dy = d.dx = policy.pad;
  }
  if (policy.flip) d.flip = std::bernoulli_distribution(0.5)(rng);
  return d;
}

std::vector<std::uint8_t> apply_augment(std::span<const std::uint8_t> image, std::size_t height, std::size_t width,
                                        std::size_t channels, const AugmentPolicy& policy, const AugmentDraw& draw) {
  if (image.size() != height * width * channels) throw DimensionError("augment: image size does not match geometry");
  const std::size_t pad = policy.pad_crop ? policy.pad : 0;
  if (pad >= height || pad >= width) throw InputError("augment: padding must be smaller than the image");
  if (policy.pad_crop && (draw.dy > 2 * pad || draw.dx > 2 * pad)) throw InputError("augment: crop offset out of range");
  const std::size_t oy = policy.pad_crop ? draw.dy : 0, ox = policy.pad_crop ? draw.dx : 0;
  std::vector<std::uint8_t> out(image.size());
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = reflect(static_cast<std::ptrdiff_t>(y + oy) - static_cast<std::ptrdiff_t>(pad), height);
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t cx = draw.flip ? width - 1 - x : x;
      const std::size_t sx = reflect(static_cast<std::ptrdiff_t>(cx + ox) - static_cast<std::ptrdiff_t>(pad), width);
      for (std::size_t c = 0; c < channels; ++c) out[(y * width + x) * channels + c] = image[(sy * width + sx) * channels + c];
    }
  }
  return out;
}

std::vector<std::uint8_t> augment(std::span<const std::uint8_t> image, std::size_t height, std::size_t width,
                                  std::size_t channels, const AugmentPolicy& policy, std::mt19937_64& rng) {
  if (!policy.flip && !policy.pad_crop) return {image.begin(), image.end()};
  return apply_augment(image, height, width, channels, policy, draw_augment(policy, rng));
}

std::vector<double> cifar10_mean() { return {0.4914, 0.4822, 0.4465}; }
std::vector<double> cifar10_std() { return {0.2470, 0.2435, 0.2616}; }

DenseTensor make_batch(const LabeledImageSet& set, std::span<const std::size_t> indices,
                       const std::vector<double>& mean, const std::vector<double>& std_dev,
                       const AugmentPolicy& policy, std::mt19937_64* rng) {
  const std::size_t C = set.channels;
  if ((!mean.empty() && mean.size() != C) || (!std_dev.empty() && std_dev.size() != C)) {
    throw InputError("make_batch: normalization constants do not match the channel count");
  }
  DenseTensor out({indices.size(), set.height, set.width, C});
  const std::size_t n = set.image_size();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    if (indices[b] >= set.count) throw InputError("make_batch: index out of range");
    std::vector<std::uint8_t> img;
    std::span<const std::uint8_t> src = set.image(indices[b]);
    if (rng != nullptr) {
      img = augment(src, set.height, set.width, C, policy, *rng);
      src = img;
    }
    double* dst = out.raw() + b * n;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = i % C;
      double v = src[i] / 255.0;
      if (!mean.empty()) v -= mean[c];
      if (!std_dev.empty()) v /= std_dev[c];
      dst[i] = v;
    }
  }
  return out;
}

LabeledImageSet synthetic(std::size_t count, std::size_t height, std::size_t width, std::size_t channels,
                          std::size_t num_classes, std::uint64_t seed) {
  if (num_classes == 0) throw InputError("synthetic: need at least one class");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> px(0, 255);
  std::uniform_int_distribution<std::uint32_t> label(0, static_cast<std::uint32_t>(num_classes - 1));
  LabeledImageSet s;
  s.count = count;
  s.height = height;
  s.width = width;
  s.channels = channels;
  s.num_classes = num_classes;
  s.pixels.resize(count * height * width * channels);
  for (auto& p : s.pixels) p = static_cast<std::uint8_t>(px(rng));
  for (std::size_t i = 0; i < count; ++i) s.labels.push_back(label(rng));
  return s;
}

}  // namespace monet::data

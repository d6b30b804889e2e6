#include "monet/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "binary_io.hpp"
#include "monet/error.hpp"

namespace monet {

namespace {

constexpr char kMagic[8] = {'M', 'O', 'N', 'E', 'T', 'T', 'E', 'N'};
constexpr std::uint32_t kMaxRank = 16;

}  // namespace

std::size_t shape_volume(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("zero extent in shape " + shape_string(shape));
    if (n > std::numeric_limits<std::size_t>::max() / e) throw DimensionError("shape volume overflows");
    n *= e;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

DenseTensor::DenseTensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_volume(shape_), fill) {}

DenseTensor::DenseTensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_volume(shape_)) {
    throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
  }
}

DenseTensor DenseTensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return DenseTensor(Shape{n}, std::move(v));
}

DenseTensor DenseTensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return DenseTensor(Shape{r, c}, std::move(data));
}

std::size_t DenseTensor::extent(std::size_t axis) const {
  if (axis >= shape_.size()) throw DimensionError("axis out of range for shape " + shape_string(shape_));
  return shape_[axis];
}

double DenseTensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_string(shape_));
  return data_[0];
}

DenseTensor DenseTensor::reshaped(Shape shape) const {
  if (shape_volume(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return DenseTensor(std::move(shape), data_);
}

void DenseTensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool DenseTensor::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void require_finite(const DenseTensor& t, const char* where) {
  if (!t.all_finite()) throw NumericError(std::string("non-finite value produced by ") + where);
}

void write_tensor(std::ostream& out, const DenseTensor& t) {
  out.write(kMagic, sizeof kMagic);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) detail::write_le<std::uint64_t>(out, e);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(t.raw()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  } else {
    for (double v : t.data()) detail::write_le<double>(out, v);
  }
  if (!out) throw FormatError("failed writing tensor");
}

DenseTensor read_tensor(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic)) throw FormatError("truncated tensor header");
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError("bad tensor magic");
  const auto rank = detail::read_le<std::uint32_t>(in, "tensor rank");
  if (rank > kMaxRank) throw FormatError("tensor rank " + std::to_string(rank) + " exceeds limit");
  Shape shape(rank);
  std::uint64_t volume = 1;
  for (auto& e : shape) {
    const auto v = detail::read_le<std::uint64_t>(in, "tensor extent");
    if (v == 0) throw FormatError("zero tensor extent");
    if (volume > std::numeric_limits<std::uint64_t>::max() / sizeof(double) / v) {
      throw FormatError("tensor volume overflows");
    }
    volume *= v;
    e = static_cast<std::size_t>(v);
  }
  const auto bytes = detail::read_bytes(in, volume * sizeof(double), "tensor payload");
  std::vector<double> data(volume);
  std::memcpy(data.data(), bytes.data(), bytes.size());
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& v : data) v = detail::byteswap_if_big(v);
  }
  return DenseTensor(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const DenseTensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  write_tensor(out, t);
}

DenseTensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return read_tensor(in);
}

}  // namespace monet

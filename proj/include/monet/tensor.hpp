#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace monet {

using Shape = std::vector<std::size_t>;

std::size_t shape_volume(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Row-major f64 tensor with an explicit shape. A rank-0 tensor holds one scalar.
class DenseTensor {
 public:
  DenseTensor() : data_(1, 0.0) {}
  explicit DenseTensor(Shape shape, double fill = 0.0);
  DenseTensor(Shape shape, std::vector<double> data);

  static DenseTensor scalar(double v) { return DenseTensor(Shape{}, std::vector<double>{v}); }
  static DenseTensor vector(std::vector<double> v);
  static DenseTensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t extent(std::size_t axis) const;

  /// Extent of the last axis (1 for scalars).
  std::size_t cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }
  /// Product of all extents but the last.
  std::size_t rows() const noexcept { return cols() == 0 ? 0 : size() / cols(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double* raw() noexcept { return data_.data(); }
  const double* raw() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  double item() const;

  DenseTensor reshaped(Shape shape) const;
  void fill(double v);
  bool all_finite() const noexcept;

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Throws NumericError naming `where` if any element is NaN/Inf.
void require_finite(const DenseTensor& t, const char* where);

// Binary tensor format: "MONETTEN", u32 rank, u64 extents, f64 payload, all little-endian.
void write_tensor(std::ostream& out, const DenseTensor& t);
DenseTensor read_tensor(std::istream& in);
void save_tensor(const std::string& path, const DenseTensor& t);
DenseTensor load_tensor(const std::string& path);

}  // namespace monet

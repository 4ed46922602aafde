#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pan {

using Shape = std::vector<std::size_t>;

/// Dense row-major array of doubles tagged with its shape.
///
/// The element count always equals the product of the shape. Rank 0 is not
/// used; a scalar is a tensor of shape {1}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor filled(Shape shape, double value) { return Tensor(std::move(shape), value); }
  // Rows given as nested lists, e.g. matrix({{1, 2}, {3, 4}}).
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor vector(std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  const double& operator[](std::size_t i) const noexcept { return data_[i]; }

  // Unchecked multi-index accessors for rank 2 and rank 3.
  double& at(std::size_t i, std::size_t j) noexcept { return data_[i * shape_[1] + j]; }
  const double& at(std::size_t i, std::size_t j) const noexcept { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) noexcept {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const double& at(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  // Row view of a rank-2 tensor.
  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * shape_[1], shape_[1]}; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * shape_[1], shape_[1]};
  }

  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::size_t shape_product(const Shape& shape);
std::string shape_string(const Shape& shape);

// Throws NumericError naming `op` when any element is NaN or Inf.
void require_finite(const Tensor& t, std::string_view op);

// Throws DimensionError unless `t` has exactly this shape.
void require_shape(const Tensor& t, const Shape& expected, std::string_view what);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, double s);
Tensor& operator+=(Tensor& a, const Tensor& b);

// a [n, k] times b [k, m].
Tensor matmul(const Tensor& a, const Tensor& b);
// a [n, k] times transpose(b) where b is [m, k].
Tensor matmul_transposed(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

double sum(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace pan

#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace nrmt {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
std::vector<int64_t> row_major_strides(const Shape& shape);

// Dense row-major tensor of doubles. Checkpoint files store 32-bit IEEE-754
// values; in memory we keep full doubles so finite-difference checks of the
// gradients are meaningful.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> d);

  static Tensor zeros(const Shape& s);
  static Tensor full(const Shape& s, double v);
  static Tensor scalar(double v);

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t rank() const { return static_cast<int64_t>(shape.size()); }
  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;

  double& at(std::initializer_list<int64_t> idx);
  double at(std::initializer_list<int64_t> idx) const;
};

}  // namespace nrmt

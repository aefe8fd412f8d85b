#include "nrmt/tensor.hpp"

#include <cmath>
#include <sstream>

#include "nrmt/error.hpp"

namespace nrmt {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

std::vector<int64_t> row_major_strides(const Shape& shape) {
  std::vector<int64_t> st(shape.size(), 1);
  for (int64_t i = static_cast<int64_t>(shape.size()) - 2; i >= 0; --i) {
    st[static_cast<size_t>(i)] =
        st[static_cast<size_t>(i + 1)] * shape[static_cast<size_t>(i + 1)];
  }
  return st;
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  for (int64_t dim : shape) {
    if (dim <= 0) {
      throw Error(ErrorKind::internal, "tensor dims must be positive, got " + shape_str(shape));
    }
  }
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw Error(ErrorKind::internal,
                "tensor data size " + std::to_string(data.size()) +
                    " does not match shape " + shape_str(shape));
  }
}

Tensor Tensor::zeros(const Shape& s) {
  return Tensor(s, std::vector<double>(static_cast<size_t>(shape_numel(s)), 0.0));
}

Tensor Tensor::full(const Shape& s, double v) {
  return Tensor(s, std::vector<double>(static_cast<size_t>(shape_numel(s)), v));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double& Tensor::at(std::initializer_list<int64_t> idx) {
  const auto st = row_major_strides(shape);
  int64_t off = 0;
  size_t i = 0;
  for (int64_t v : idx) off += v * st[i++];
  return data[static_cast<size_t>(off)];
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
  return const_cast<Tensor*>(this)->at(idx);
}

}  // namespace nrmt

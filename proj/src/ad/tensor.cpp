#include "hmmr/ad/tensor.hpp"

#include <cstring>
#include <sstream>

namespace hmmr::ad {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

namespace {

void validate(const Shape& shape, std::size_t n) {
  if (shape.empty()) throw ShapeError("tensor: empty shape");
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor: zero dimension in " + shape_str(shape));
  }
  if (shape_numel(shape) != n) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " elements, data has " +
                     std::to_string(n));
  }
}

}  // namespace

Tensor::Tensor() : shape_{1}, data_(std::make_shared<const std::vector<double>>(1, 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  validate(shape_, data.size());
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape_) + " is not scalar");
  return (*data_)[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  validate(shape, size());
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

bool Tensor::identical(const Tensor& other) const {
  if (shape_ != other.shape_) return false;
  return std::memcmp(ptr(), other.ptr(), size() * sizeof(double)) == 0;
}

}  // namespace hmmr::ad

#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmmr::ad {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Immutable dense row-major tensor of doubles. Copies share storage.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_->size(); }

  std::span<const double> data() const { return *data_; }
  const double* ptr() const { return data_->data(); }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  double at(std::size_t r, std::size_t c) const { return (*data_)[r * shape_.back() + c]; }
  double item() const;

  // Same storage, different shape; element count must match.
  Tensor reshaped(Shape shape) const;
  std::vector<double> to_vector() const { return *data_; }

  // Shape equal and every element bit-identical.
  bool identical(const Tensor& other) const;

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
};

}  // namespace hmmr::ad

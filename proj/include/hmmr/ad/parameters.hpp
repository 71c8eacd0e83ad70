#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hmmr/ad/tensor.hpp"

namespace hmmr::ad {

// Named trainable tensors. Order of insertion is the canonical order used by
// optimizers and checkpoints.
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor init);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const Tensor& value(std::size_t i) const { return values_.at(i); }
  void set_value(std::size_t i, Tensor t);

  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t index(const std::string& name) const;
  std::size_t total_elements() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

}  // namespace hmmr::ad

#include "hmmr/ad/parameters.hpp"

namespace hmmr::ad {

std::size_t ParameterSet::add(std::string name, Tensor init) {
  if (find(name)) throw std::invalid_argument("parameter '" + name + "' already exists");
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return values_.size() - 1;
}

void ParameterSet::set_value(std::size_t i, Tensor t) {
  if (t.shape() != values_.at(i).shape()) {
    throw ShapeError("parameter '" + names_[i] + "': expected " + shape_str(values_[i].shape()) +
                     ", got " + shape_str(t.shape()));
  }
  values_[i] = std::move(t);
}

std::optional<std::size_t> ParameterSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t ParameterSet::index(const std::string& name) const {
  if (auto i = find(name)) return *i;
  throw std::out_of_range("no parameter named '" + name + "'");
}

std::size_t ParameterSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

}  // namespace hmmr::ad

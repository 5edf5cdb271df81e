#include "ymwml/parameters.hpp"

#include <cmath>

namespace ymwml {

Tensor& ParameterStore::add(std::string name, Tensor tensor) {
  if (index_.contains(name)) throw Error(Errc::invalid_argument, "duplicate parameter " + name);
  tensor.set_requires_grad(true);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(tensor));
  return entries_.back().second;
}

bool ParameterStore::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

Tensor& ParameterStore::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw Error(Errc::invalid_argument, "unknown parameter " + std::string(name));
  return entries_[it->second].second;
}

const Tensor& ParameterStore::at(std::string_view name) const {
  return const_cast<ParameterStore*>(this)->at(name);
}

std::size_t ParameterStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

std::string ParamBuilder::full_name(std::string_view name) const {
  if (prefix_.empty()) return std::string(name);
  return prefix_ + "." + std::string(name);
}

ParamBuilder ParamBuilder::scope(std::string_view name) const {
  return ParamBuilder(*store_, *rng_, full_name(name));
}

Tensor ParamBuilder::kaiming(std::string_view name, const Shape& shape, std::size_t fan_in) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  return store_->add(full_name(name), Tensor::uniform(shape, *rng_, -bound, bound));
}

Tensor ParamBuilder::constant(std::string_view name, const Shape& shape, double value) {
  return store_->add(full_name(name), Tensor::full(shape, value));
}

}  // namespace ymwml

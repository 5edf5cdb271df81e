#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ymwml/rng.hpp"
#include "ymwml/tensor.hpp"

namespace ymwml {

/// Named learnable tensors in registration order. Iteration order is part of
/// the contract: checkpoints and optimizer state follow it.
class ParameterStore {
 public:
  using Entry = std::pair<std::string, Tensor>;

  Tensor& add(std::string name, Tensor tensor);

  bool contains(std::string_view name) const;
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  const std::vector<Entry>& entries() const { return entries_; }

  void zero_grad();

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Creates parameters under a dotted name prefix with the model's
/// initialization: Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero
/// biases, unit GN scale, zero GN shift.
class ParamBuilder {
 public:
  ParamBuilder(ParameterStore& store, Rng& rng, std::string prefix = {})
      : store_(&store), rng_(&rng), prefix_(std::move(prefix)) {}

  ParamBuilder scope(std::string_view name) const;

  Tensor kaiming(std::string_view name, const Shape& shape, std::size_t fan_in);
  Tensor constant(std::string_view name, const Shape& shape, double value);

  ParameterStore& store() { return *store_; }

 private:
  std::string full_name(std::string_view name) const;

  ParameterStore* store_;
  Rng* rng_;
  std::string prefix_;
};

}  // namespace ymwml

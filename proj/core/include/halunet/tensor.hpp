#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "halunet/feature_record.hpp"

namespace halunet {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

/// Dense row-major tensor.
template <class Real>
struct Tensor {
  Shape shape;
  std::vector<Real> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(element_count(shape), Real{0}) {}
  Tensor(Shape s, std::vector<Real> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != element_count(shape)) {
      throw Error("tensor data length " + std::to_string(data.size()) +
                  " does not match shape " + shape_string(shape));
    }
  }

  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::span<Real> span() { return data; }
  std::span<const Real> span() const { return data; }

  bool operator==(const Tensor&) const = default;
};

template <class Real>
struct ParamEntry {
  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;
  Tensor<Real> m;  // AdamW first moment
  Tensor<Real> v;  // AdamW second moment
};

/// Named parameters with gradient and optimizer-state buffers of matching
/// shape. Insertion order is the canonical (checkpoint) order.
template <class Real>
class ParamStore {
 public:
  ParamEntry<Real>& add(const std::string& name, const Shape& shape) {
    if (index_.count(name) != 0) throw Error("duplicate parameter '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back({name, Tensor<Real>(shape), Tensor<Real>(shape), Tensor<Real>(shape),
                        Tensor<Real>(shape)});
    return entries_.back();
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  ParamEntry<Real>& at(const std::string& name) { return entries_[lookup(name)]; }
  const ParamEntry<Real>& at(const std::string& name) const { return entries_[lookup(name)]; }

  std::vector<ParamEntry<Real>>& entries() { return entries_; }
  const std::vector<ParamEntry<Real>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) std::fill(e.grad.data.begin(), e.grad.data.end(), Real{0});
  }

  /// Copies values (not optimizer state) into another precision.
  template <class Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (const auto& e : entries_) {
      auto& dst = out.add(e.name, e.value.shape);
      for (std::size_t i = 0; i < e.value.size(); ++i) {
        dst.value.data[i] = static_cast<Other>(e.value.data[i]);
      }
    }
    return out;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<ParamEntry<Real>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace halunet

#pragma once

// Named, shaped parameter arrays with a deterministic registration order.
// The same store backs training (materialized as AD variables), inference
// (materialized as doubles) and checkpointing.

#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "unite/ad.hpp"

namespace unite {

struct ParamArray {
  std::string name;
  std::vector<int> shape;
  std::vector<double> v;
  bool trainable = true;  // running statistics are stored but not optimized
};

class ParamStore {
public:
  std::vector<ParamArray>& arrays() { return arrays_; }
  const std::vector<ParamArray>& arrays() const { return arrays_; }

  int add(ParamArray arr) {
    if (index_.count(arr.name)) throw std::logic_error("duplicate param: " + arr.name);
    std::size_t n = 1;
    for (int s : arr.shape) n *= static_cast<std::size_t>(s);
    if (arr.v.size() != n) throw std::logic_error("param size mismatch: " + arr.name);
    index_[arr.name] = static_cast<int>(arrays_.size());
    arrays_.push_back(std::move(arr));
    return static_cast<int>(arrays_.size()) - 1;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }
  int index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no param named " + name);
    return it->second;
  }
  ParamArray& at(const std::string& name) { return arrays_[static_cast<std::size_t>(index_of(name))]; }
  const ParamArray& at(const std::string& name) const {
    return arrays_[static_cast<std::size_t>(index_of(name))];
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& a : arrays_) n += a.v.size();
    return n;
  }

private:
  std::vector<ParamArray> arrays_;
  std::map<std::string, int> index_;
};

// Store contents materialized as a concrete scalar type. For ad::Var every
// value becomes a tape leaf, in registration order, so gradients can be read
// back per parameter after a backward sweep.
template <class T>
struct TypedParams {
  const ParamStore* store = nullptr;
  std::vector<std::vector<T>> a;

  const std::vector<T>& operator()(const std::string& name) const {
    return a[static_cast<std::size_t>(store->index_of(name))];
  }
  bool has(const std::string& name) const { return store->has(name); }
};

template <class T>
TypedParams<T> materialize(const ParamStore& store) {
  TypedParams<T> p;
  p.store = &store;
  p.a.reserve(store.arrays().size());
  for (const auto& arr : store.arrays()) {
    std::vector<T> vals;
    vals.reserve(arr.v.size());
    for (double x : arr.v) {
      if constexpr (std::is_same_v<T, ad::Var>)
        vals.push_back(arr.trainable ? ad::Var::leaf(x) : ad::Var(x));
      else
        vals.push_back(x);
    }
    p.a.push_back(std::move(vals));
  }
  return p;
}

}  // namespace unite

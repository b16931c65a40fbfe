#pragma once

#include <map>
#include <string>
#include <unordered_map>

#include "genequery/numcore/tape.hpp"
#include "genequery/numcore/tensor.hpp"

namespace gq::num {

// Named parameter tensors with matching gradient buffers. std::map keeps
// iteration lexicographic by name, which pins every parameter walk
// (optimizer steps, checkpoints, gradient checks) to one deterministic order.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    Tensor<T> value;
    Tensor<T> grad;
  };

  void add(const std::string& name, Tensor<T> value) {
    if (entries_.count(name)) fail(errc::argument, "duplicate parameter name: " + name);
    Entry e;
    e.grad = Tensor<T>(value.shape());
    e.value = std::move(value);
    entries_.emplace(name, std::move(e));
  }

  bool has(const std::string& name) const { return entries_.count(name) != 0; }
  std::size_t count() const { return entries_.size(); }

  Tensor<T>& value(const std::string& name) { return at(name).value; }
  const Tensor<T>& value(const std::string& name) const { return at(name).value; }
  Tensor<T>& grad(const std::string& name) { return at(name).grad; }
  const Tensor<T>& grad(const std::string& name) const { return at(name).grad; }

  void zero_grads() {
    for (auto& [name, e] : entries_) e.grad.fill(T(0));
  }

  void scale_grads(T s) {
    for (auto& [name, e] : entries_)
      for (auto& g : e.grad) g *= s;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [name, e] : entries_) out.add(name, e.value.template cast<U>());
    return out;
  }

 private:
  Entry& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) fail(errc::argument, "unknown parameter: " + name);
    return it->second;
  }
  const Entry& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) fail(errc::argument, "unknown parameter: " + name);
    return it->second;
  }

  std::map<std::string, Entry> entries_;
};

// Leaf refs for every parameter in one tape. Bind once per tape, then read
// accumulated leaf gradients back into the store after backward().
template <typename T>
class BoundParams {
 public:
  BoundParams(Tape<T>& tape, const ParamStore<T>& store) {
    for (const auto& [name, e] : store) refs_.emplace(name, tape.input(e.value));
  }

  typename Tape<T>::Ref operator[](const std::string& name) const {
    auto it = refs_.find(name);
    if (it == refs_.end()) fail(errc::argument, "parameter not bound: " + name);
    return it->second;
  }

  bool has(const std::string& name) const { return refs_.count(name) != 0; }

  // Accumulates tape-leaf gradients into the store (+=, so several tapes per
  // optimizer step compose).
  void accumulate_grads(const Tape<T>& tape, ParamStore<T>& store) const {
    for (const auto& [name, ref] : refs_) {
      const auto& g = tape.grad(ref);
      auto& dst = store.grad(name);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
  }

 private:
  std::unordered_map<std::string, typename Tape<T>::Ref> refs_;
};

}  // namespace gq::num

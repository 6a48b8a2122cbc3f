#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dpit/autograd.hpp"

namespace dpit {

/// splitmix64 finaliser; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  return mix_seed(mix_seed(mix_seed(base) ^ a) ^ (b * 0x2545f4914f6cdd1dULL));
}

/// Ordered collection of named tensors (learned weights, optimiser moments).
template <typename T>
class ParameterSet {
 public:
  void add(std::string name, Tensor<T> value) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter " + name);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(value));
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  Tensor<T>& at(const std::string& name) { return entries_[lookup(name)].second; }
  const Tensor<T>& at(const std::string& name) const { return entries_[lookup(name)].second; }

  std::size_t size() const { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  const std::string& name(std::size_t i) const { return entries_[i].first; }
  Tensor<T>& tensor(std::size_t i) { return entries_[i].second; }
  const Tensor<T>& tensor(std::size_t i) const { return entries_[i].second; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : entries_) n += t.size();
    return n;
  }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& [n, t] : entries_) out.add(n, t.template cast<U>());
    return out;
  }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) { return a.entries_ == b.entries_; }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter " + name);
    return it->second;
  }

  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Parameters entered as leaves on one tape.
template <typename T>
class BoundParams {
 public:
  BoundParams(Tape<T>& tape, const ParameterSet<T>& params, bool requires_grad = true) {
    vars_.reserve(params.size());
    for (const auto& [name, value] : params) {
      index_.emplace(name, vars_.size());
      vars_.push_back(tape.leaf(value, requires_grad));
    }
  }

  Var<T> operator[](const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unbound parameter " + name);
    return vars_[it->second];
  }

  /// Wraps leaves created elsewhere, e.g. by grad_check.
  BoundParams(const std::vector<std::string>& names, const std::vector<Var<T>>& vars) : vars_(vars) {
    if (names.size() != vars.size()) throw Error("BoundParams: one name per variable required");
    for (std::size_t i = 0; i < names.size(); ++i) index_.emplace(names[i], i);
  }

  /// Gradients in parameter order; zero tensors for unused parameters.
  std::vector<Tensor<T>> grads() const {
    std::vector<Tensor<T>> out;
    out.reserve(vars_.size());
    for (const auto& v : vars_) out.push_back(v.grad());
    return out;
  }

  const std::vector<Var<T>>& vars() const { return vars_; }

 private:
  std::vector<Var<T>> vars_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace dpit

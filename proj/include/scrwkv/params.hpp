#pragma once

#include <map>
#include <string>
#include <unordered_map>

#include "scrwkv/autodiff.hpp"

namespace scrwkv {

/// Ordered collection of named learnable tensors. Registration order is the
/// canonical order used by checkpoints and optimizers.
template <typename Scalar>
class ParamStore {
 public:
  Var<Scalar> add(const std::string& name, Tensor<Scalar> value) {
    if (index_.count(name)) throw ShapeError("ParamStore: duplicate parameter '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back(Var<Scalar>::parameter(std::move(value), name));
    return entries_.back();
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const Var<Scalar>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ShapeError("ParamStore: no parameter '" + name + "'");
    return entries_[it->second];
  }
  Var<Scalar>& at(const std::string& name) {
    return const_cast<Var<Scalar>&>(std::as_const(*this).at(name));
  }

  std::vector<Var<Scalar>>& vars() noexcept { return entries_; }
  const std::vector<Var<Scalar>>& vars() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  Index numel() const {
    Index n = 0;
    for (const auto& v : entries_) n += v.value().size();
    return n;
  }

  // Parameter totals grouped by the name prefix before the first '.'.
  std::map<std::string, Index> numel_by_module() const {
    std::map<std::string, Index> out;
    for (const auto& v : entries_) out[v.name().substr(0, v.name().find('.'))] += v.value().size();
    return out;
  }

 private:
  std::vector<Var<Scalar>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Registers parameters under a dotted prefix and draws their initial values.
/// Projections: truncated normal, std 0.02. Spatial kernels: uniform in
/// +-1/sqrt(fan_in). Biases: zero.
template <typename Scalar>
class ParamBuilder {
 public:
  ParamBuilder(ParamStore<Scalar>& store, Rng& rng, std::string prefix = {})
      : store_(store), rng_(rng), prefix_(std::move(prefix)) {}

  ParamBuilder scope(const std::string& name) const {
    return ParamBuilder(store_, rng_, qualify(name));
  }

  Var<Scalar> projection(const std::string& name, Shape shape) {
    return store_.add(qualify(name), truncated_normal<Scalar>(std::move(shape), rng_, Scalar(0.02)));
  }

  // Conv kernel [Cout, Cin_per_group, k, k].
  Var<Scalar> kernel(const std::string& name, Shape shape) {
    const Index fan_in = shape[1] * shape[2] * shape[3];
    const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(fan_in));
    return store_.add(qualify(name), uniform<Scalar>(std::move(shape), rng_, -bound, bound));
  }

  Var<Scalar> zeros(const std::string& name, Shape shape) {
    return store_.add(qualify(name), Tensor<Scalar>(std::move(shape)));
  }

  Var<Scalar> constant(const std::string& name, Shape shape, Scalar value) {
    return store_.add(qualify(name), Tensor<Scalar>::constant(std::move(shape), value));
  }

 private:
  std::string qualify(const std::string& name) const {
    return prefix_.empty() ? name : prefix_ + "." + name;
  }

  ParamStore<Scalar>& store_;
  Rng& rng_;
  std::string prefix_;
};

// softplus^{-1}(1): raw value whose softplus is exactly one.
inline constexpr double kSoftplusOneRaw = 0.54132485461291810;

}  // namespace scrwkv

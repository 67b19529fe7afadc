#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fsv2v/nn/graph.hpp"

namespace fsv2v::nn {

// Named parameter tensors, iterated in lexicographic name order.
template <typename T>
class ParamSet {
 public:
  using Map = std::map<std::string, Tensor<T>>;

  void insert(const std::string& name, Tensor<T> value) {
    if (!entries_.emplace(name, std::move(value)).second) {
      throw ContractError("duplicate parameter name '" + name + "'");
    }
  }
  void set(const std::string& name, Tensor<T> value) { entries_[name] = std::move(value); }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  const Tensor<T>& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }
  Tensor<T>& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
  }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& [k, v] : entries_) n += v.size();
    return n;
  }

  // Entries whose name starts with `prefix`.
  ParamSet filtered(const std::string& prefix) const {
    ParamSet out;
    for (const auto& [k, v] : entries_)
      if (k.rfind(prefix, 0) == 0) out.entries_.emplace(k, v);
    return out;
  }

  void merge(const ParamSet& other) {
    for (const auto& [k, v] : other.entries_) entries_[k] = v;
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& [k, v] : entries_) out.insert(k, v.template cast<U>());
    return out;
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) { return a.entries_ == b.entries_; }

 private:
  Map entries_;
};

enum class InitKind { he_normal, normal, zeros, constant };

struct ParamSpec {
  std::string name;
  Shape shape;
  InitKind init = InitKind::he_normal;
  double value = 0.0;  // std for `normal`, fill for `constant`, gain for `he_normal`
};

// Conv kernel [out,in,k,k] + bias [out] under `prefix`.weight / .bias.
void declare_conv(std::vector<ParamSpec>& specs, const std::string& prefix, int in, int out, int kernel,
                  double gain = 1.0);
void declare_linear(std::vector<ParamSpec>& specs, const std::string& prefix, int in, int out, double gain = 1.0);

// Deterministic: each tensor draws from its own stream seeded by (seed, name),
// so adding a parameter never perturbs the others.
ParamSet<float> initialize(const std::vector<ParamSpec>& specs, std::uint64_t seed);

std::uint64_t fnv1a(const std::string& text, std::uint64_t basis = 1469598103934665603ULL);

// Binds a ParamSet into a graph on first use. Parameters rejected by the
// trainable filter enter as constants and never accumulate gradient.
template <typename T>
class ParamBinder {
 public:
  using Filter = std::function<bool(const std::string&)>;

  ParamBinder(Graph<T>& graph, const ParamSet<T>& params, Filter trainable = {})
      : graph_(graph), params_(params), trainable_(std::move(trainable)) {}

  Var<T> operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const Tensor<T>& value = params_.at(name);
    Var<T> v = graph_.external(value, is_trainable(name));
    bound_.emplace(name, v);
    return v;
  }

  bool contains(const std::string& name) const { return params_.contains(name); }
  bool is_trainable(const std::string& name) const { return !trainable_ || trainable_(name); }
  Graph<T>& graph() const { return graph_; }
  const ParamSet<T>& params() const { return params_; }
  bool is_bound(const std::string& name) const { return bound_.count(name) != 0; }

  // Gradient for every trainable parameter; zeros where the loss did not reach.
  ParamSet<T> gradients() const {
    ParamSet<T> out;
    for (const auto& [name, value] : params_) {
      if (!is_trainable(name)) continue;
      auto it = bound_.find(name);
      if (it != bound_.end() && graph_.has_grad(it->second.id)) {
        out.insert(name, graph_.grad(it->second.id));
      } else {
        out.insert(name, Tensor<T>(value.shape(), T(0)));
      }
    }
    return out;
  }

 private:
  Graph<T>& graph_;
  const ParamSet<T>& params_;
  Filter trainable_;
  std::map<std::string, Var<T>> bound_;
};

}  // namespace fsv2v::nn

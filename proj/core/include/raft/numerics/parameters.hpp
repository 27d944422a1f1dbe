#pragma once

#include <map>
#include <string>
#include <vector>

#include "raft/numerics/rng.hpp"
#include "raft/numerics/tensor.hpp"

namespace raft::numerics {

template <typename T>
struct Parameter {
  Tensor<T> value;
  std::vector<T> grad;
  bool trainable = true;
};

// Named parameters, ordered by name so iteration (and therefore optimizer
// updates and serialization) is deterministic.
template <typename T>
class ParameterSet {
 public:
  Parameter<T>& add(const std::string& name, Tensor<T> value) {
    if (params_.count(name) != 0) throw ContractError("duplicate parameter name: " + name);
    Parameter<T> p;
    p.grad.assign(value.size(), T(0));
    p.value = std::move(value);
    return params_.emplace(name, std::move(p)).first->second;
  }

  // Gaussian init with the given std; bias-style tensors use zeros()/filled().
  Parameter<T>& add_normal(const std::string& name, Shape shape, double stddev, Rng& rng) {
    auto t = Tensor<T>::zeros(std::move(shape));
    for (auto& x : t.data) x = static_cast<T>(rng.normal() * stddev);
    return add(name, std::move(t));
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  Parameter<T>& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
  }
  const Parameter<T>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
  }

  void erase_prefix(const std::string& prefix) {
    for (auto it = params_.begin(); it != params_.end();) {
      it = it->first.rfind(prefix, 0) == 0 ? params_.erase(it) : std::next(it);
    }
  }

  void zero_grad() {
    for (auto& [name, p] : params_) std::fill(p.grad.begin(), p.grad.end(), T(0));
  }

  void set_trainable(bool trainable) {
    for (auto& [name, p] : params_) p.trainable = trainable;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += p.value.size();
    return n;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& [name, p] : params_) out.add(name, p.value.template cast<U>()).trainable = p.trainable;
    return out;
  }

 private:
  std::map<std::string, Parameter<T>> params_;
};

}  // namespace raft::numerics

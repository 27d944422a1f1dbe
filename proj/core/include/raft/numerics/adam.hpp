#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "raft/numerics/parameters.hpp"

namespace raft::numerics {

struct AdamSettings {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moments are keyed by parameter name and created
// on first use; frozen (non-trainable) parameters are skipped.
template <typename T>
class AdamState {
 public:
  explicit AdamState(AdamSettings settings = {}) : settings_(settings) {}

  const AdamSettings& settings() const { return settings_; }
  std::size_t step_count() const { return t_; }

  void step(ParameterSet<T>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(settings_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(settings_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : params) {
      if (!p.trainable) continue;
      if (p.grad.size() != p.value.size()) {
        throw DimensionError("adam: gradient size mismatch for " + name);
      }
      auto& m = first_[name];
      auto& v = second_[name];
      if (m.empty()) {
        m.assign(p.value.size(), 0.0);
        v.assign(p.value.size(), 0.0);
      } else if (m.size() != p.value.size()) {
        throw DimensionError("adam: accumulator shape changed for " + name);
      }
      for (std::size_t i = 0; i < m.size(); ++i) {
        const double g = p.grad[i];
        m[i] = settings_.beta1 * m[i] + (1.0 - settings_.beta1) * g;
        v[i] = settings_.beta2 * v[i] + (1.0 - settings_.beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p.value.data[i] -= static_cast<T>(settings_.lr * mhat / (std::sqrt(vhat) + settings_.eps));
      }
    }
  }

  const std::vector<double>& first_moment(const std::string& name) const { return first_.at(name); }
  const std::vector<double>& second_moment(const std::string& name) const { return second_.at(name); }

 private:
  AdamSettings settings_;
  std::size_t t_ = 0;
  std::map<std::string, std::vector<double>> first_;
  std::map<std::string, std::vector<double>> second_;
};

}  // namespace raft::numerics

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ftgan/tensor.hpp"

namespace ftgan::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // same shape as value
  bool trainable = true;
};

// Named, insertion-ordered parameter collection. Non-trainable entries hold
// normalization running statistics.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, Shape shape, bool trainable = true, double fill = 0.0);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.contains(name); }

  std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  std::size_t trainable_count() const;
  double grad_norm() const;

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace ftgan::nn

#include "ftgan/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "ftgan/params.hpp"

namespace ftgan::nn {

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

std::string to_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (int d : shape_)
    require(d >= 0, ErrorKind::kShape, "negative tensor dimension in " + to_string(shape_));
  data_.assign(numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  require(data_.size() == numel(shape_), ErrorKind::kShape,
          "tensor data size " + std::to_string(data_.size()) + " does not match shape " +
              to_string(shape_));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape s) const {
  require(numel(s) == data_.size(), ErrorKind::kShape,
          "cannot reshape " + to_string(shape_) + " to " + to_string(s));
  return Tensor(std::move(s), data_);
}

Parameter& ParameterSet::add(const std::string& name, Shape shape, bool trainable, double fill) {
  require(!index_.contains(name), ErrorKind::kInvalidArgument, "duplicate parameter '" + name + "'");
  Parameter p;
  p.name = name;
  p.value = Tensor(shape, fill);
  p.grad = Tensor(std::move(shape), 0.0);
  p.trainable = trainable;
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return params_.back();
}

Parameter& ParameterSet::get(const std::string& name) {
  const auto it = index_.find(name);
  require(it != index_.end(), ErrorKind::kUnknownTensor, "unknown parameter '" + name + "'");
  return params_[it->second];
}

const Parameter& ParameterSet::get(const std::string& name) const {
  const auto it = index_.find(name);
  require(it != index_.end(), ErrorKind::kUnknownTensor, "unknown parameter '" + name + "'");
  return params_[it->second];
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

std::size_t ParameterSet::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.trainable) n += p.value.size();
  return n;
}

double ParameterSet::grad_norm() const {
  double acc = 0;
  for (const auto& p : params_)
    if (p.trainable)
      for (double g : p.grad.data()) acc += g * g;
  return std::sqrt(acc);
}

}  // namespace ftgan::nn

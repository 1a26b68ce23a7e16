#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "zsasr/tensor.hpp"

namespace zsasr {

// Named trainable leaves in registration order. Registration order is the
// serialization order and the optimizer's iteration order.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  Tensor add_zeros(const std::string& name, Shape shape);
  Tensor add_ones(const std::string& name, Shape shape);
  Tensor add_normal(const std::string& name, Shape shape, double stddev);
  // Normal(0, 1/sqrt(fan_in)) for an in x out projection.
  Tensor add_linear(const std::string& name, std::size_t in, std::size_t out);

  std::size_t size() const { return params_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Tensor>& tensors() const { return params_; }
  std::vector<Tensor>& tensors() { return params_; }
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t total_values() const;

  void zero_grad();
  // Parameter values, deep-copied, in registration order.
  std::vector<std::vector<double>> snapshot() const;
  void load(const std::vector<std::vector<double>>& values);

 private:
  Tensor add(const std::string& name, Tensor t);

  std::uint64_t seed_;
  std::vector<std::string> names_;
  std::vector<Tensor> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace zsasr

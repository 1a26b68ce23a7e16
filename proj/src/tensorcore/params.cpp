#include "zsasr/params.hpp"

#include <cmath>

#include "zsasr/rng.hpp"

namespace zsasr {

Tensor ParamStore::add(const std::string& name, Tensor t) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  t.set_requires_grad(true);
  index_[name] = params_.size();
  names_.push_back(name);
  params_.push_back(t);
  return t;
}

Tensor ParamStore::add_zeros(const std::string& name, Shape shape) {
  return add(name, Tensor::zeros(std::move(shape)));
}

Tensor ParamStore::add_ones(const std::string& name, Shape shape) {
  return add(name, Tensor::full(std::move(shape), 1.0));
}

Tensor ParamStore::add_normal(const std::string& name, Shape shape, double stddev) {
  Rng rng(seed_, "init/" + name);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return add(name, Tensor(std::move(shape), std::move(v)));
}

Tensor ParamStore::add_linear(const std::string& name, std::size_t in, std::size_t out) {
  return add_normal(name, {in, out}, 1.0 / std::sqrt(double(in)));
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return params_[it->second];
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::vector<std::vector<double>> ParamStore::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.emplace_back(p.data().begin(), p.data().end());
  return out;
}

void ParamStore::load(const std::vector<std::vector<double>>& values) {
  if (values.size() != params_.size()) {
    throw std::invalid_argument("parameter count mismatch: store has " +
                                std::to_string(params_.size()) + ", got " +
                                std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto dst = params_[i].mutable_data();
    if (values[i].size() != dst.size()) {
      throw std::invalid_argument("parameter " + names_[i] + " size mismatch");
    }
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

}  // namespace zsasr

#include "mbssl/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mbssl/kernels.hpp"

namespace mbssl {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {
std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}
}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  if (shape_.size() > 2) throw std::invalid_argument("tensor rank above 2 is not supported");
  values_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_.size() > 2) throw std::invalid_argument("tensor rank above 2 is not supported");
  if (element_count(shape_) != values_.size()) {
    throw std::invalid_argument("tensor shape " + shape_string(shape_) + " does not match " +
                                std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const { return shape_.size() == 2 ? shape_[0] : 1; }

std::size_t Tensor::cols() const {
  switch (shape_.size()) {
    case 0:
      return 1;
    case 1:
      return shape_[0];
    default:
      return shape_[1];
  }
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw std::logic_error("item() on tensor of shape " + shape_string(shape_));
  }
  return values_[0];
}

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double squared_norm(const Tensor& t) { return kernels::dot(t.values(), t.values()); }

void ParameterStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  index_.emplace(name, names_.size());
  names_.push_back(name);
  tensors_.push_back(std::move(value));
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return tensors_[it->second];
}

Tensor& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return tensors_[it->second];
}

std::size_t ParameterStore::total_size() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

bool ParameterStore::operator==(const ParameterStore& other) const {
  return names_ == other.names_ && tensors_ == other.tensors_;
}

void accumulate(NamedGradients& a, const NamedGradients& b, double scale) {
  for (const auto& [name, grad] : b) {
    auto it = a.find(name);
    if (it == a.end()) {
      Tensor copy = grad;
      if (scale != 1.0) {
        for (double& v : copy.values()) v *= scale;
      }
      a.emplace(name, std::move(copy));
      continue;
    }
    if (!it->second.same_shape(grad)) {
      throw std::invalid_argument("gradient shape mismatch for " + name + ": " +
                                  shape_string(it->second.shape()) + " vs " +
                                  shape_string(grad.shape()));
    }
    kernels::axpy(scale, grad.values(), it->second.values());
  }
}

NamedGradients scaled(const NamedGradients& g, double scale) {
  NamedGradients out;
  accumulate(out, g, scale);
  return out;
}

double dot(const NamedGradients& a, const NamedGradients& b) {
  double sum = 0.0;
  for (const auto& [name, grad] : a) {
    auto it = b.find(name);
    if (it != b.end()) sum += kernels::dot(grad.values(), it->second.values());
  }
  return sum;
}

double norm(const NamedGradients& g) {
  double sum = 0.0;
  for (const auto& [name, grad] : g) sum += squared_norm(grad);
  return std::sqrt(sum);
}

}  // namespace mbssl

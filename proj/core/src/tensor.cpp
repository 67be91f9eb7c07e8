#include "capvae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "capvae/error.hpp"

namespace capvae::nn {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have rank >= 1");
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  values_.assign(element_count(shape_), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  check_shape(shape_);
  if (values_.size() != element_count(shape_))
    throw ShapeError("value count " + std::to_string(values_.size()) + " does not match shape " +
                     shape_string(shape_));
}

template <typename T>
T BasicTensor<T>::item() const {
  if (values_.size() != 1)
    throw ShapeError("item() requires a single-element tensor, got " + shape_string(shape_));
  return values_[0];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  if (element_count(shape) != values_.size())
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return BasicTensor(std::move(shape), values_);
}

template <typename T>
void BasicTensor<T>::fill(T v) {
  std::fill(values_.begin(), values_.end(), v);
}

template <typename T>
bool BasicTensor<T>::all_finite() const {
  // v - v is 0 for finite v and NaN for inf or NaN; the sum stays vectorisable.
  T acc{0};
  for (auto v : values_) acc += v - v;
  return acc == T{0};
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace capvae::nn

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "capvae/tensor.hpp"

namespace capvae::nn {

template <typename T>
struct Parameter {
  Parameter() = default;
  Parameter(std::string n, BasicTensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;

  void zero_grad() { grad.fill(T{0}); }
};

template <typename T>
class Graph;

// Handle to a node recorded in a Graph. Cheap to copy; valid while the graph lives.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = 0;

  const BasicTensor<T>& value() const { return graph->value(id); }
  const Shape& shape() const { return value().shape(); }
};

// Define-by-run tape. Nodes are appended in execution order, so reverse
// insertion order is a valid topological order for the backward sweep.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(BasicTensor<T> value);
  Var<T> parameter(Parameter<T>& p);

  // Appends an op node. Non-finite forward values raise NumericError naming
  // `op`. The backward closure is dropped when no input needs a gradient.
  Var<T> record(std::string_view op, BasicTensor<T> value, std::initializer_list<Var<T>> inputs,
                BackwardFn backward);

  // Reverse sweep from a scalar loss; accumulates into Parameter::grad.
  void backward(Var<T> loss);

  const BasicTensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  // Gradient buffer of a node, allocated as zeros on first access.
  BasicTensor<T>& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_.at(id).grad.empty(); }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t input(std::size_t id, std::size_t k) const { return nodes_.at(id).inputs.at(k); }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    BasicTensor<T> value;
    BasicTensor<T> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter<T>* parameter = nullptr;
    bool requires_grad = false;
    std::string op;
  };

  std::deque<Node> nodes_;  // references stay valid as the tape grows
  bool consumed_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace capvae::nn

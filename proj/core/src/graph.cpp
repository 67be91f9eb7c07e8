#include "capvae/graph.hpp"

#include "capvae/error.hpp"

namespace capvae::nn {

template <typename T>
Var<T> Graph<T>::constant(BasicTensor<T> value) {
  if (!value.all_finite()) throw NumericError("constant: non-finite input value");
  Node n;
  n.value = std::move(value);
  n.op = "constant";
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Graph<T>::parameter(Parameter<T>& p) {
  if (!p.value.all_finite()) throw NumericError("parameter " + p.name + ": non-finite value");
  if (p.grad.shape() != p.value.shape())
    throw StateError("parameter " + p.name + ": gradient shape " + shape_string(p.grad.shape()) +
                     " does not match value shape " + shape_string(p.value.shape()));
  Node n;
  n.value = p.value;
  n.parameter = &p;
  n.requires_grad = true;
  n.op = "parameter";
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Graph<T>::record(std::string_view op, BasicTensor<T> value,
                        std::initializer_list<Var<T>> inputs, BackwardFn backward) {
  if (consumed_) throw StateError(std::string(op) + ": graph already differentiated");
  if (!value.all_finite()) throw NumericError(std::string(op) + ": non-finite value in forward pass");
  Node n;
  n.value = std::move(value);
  n.op = op;
  for (const auto& v : inputs) {
    if (v.graph != this) throw StateError(std::string(op) + ": input belongs to another graph");
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || nodes_.at(v.id).requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

template <typename T>
BasicTensor<T>& Graph<T>::grad(std::size_t id) {
  auto& n = nodes_.at(id);
  if (n.grad.empty()) n.grad = BasicTensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
void Graph<T>::backward(Var<T> loss) {
  if (nodes_.empty()) throw StateError("backward: no recorded graph");
  if (consumed_) throw StateError("backward: graph already differentiated");
  if (loss.graph != this || loss.id >= nodes_.size())
    throw StateError("backward: loss is not part of this graph");
  if (nodes_[loss.id].value.size() != 1)
    throw ShapeError("backward: loss must be scalar, got " +
                     shape_string(nodes_[loss.id].value.shape()));
  consumed_ = true;
  if (!nodes_[loss.id].requires_grad) return;

  grad(loss.id).fill(T{1});
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (!n.grad.all_finite()) throw NumericError(n.op + ": non-finite gradient in backward pass");
    if (n.parameter != nullptr) {
      auto& acc = n.parameter->grad;
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += n.grad[k];
    } else if (n.backward) {
      n.backward(*this, i);
    }
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace capvae::nn

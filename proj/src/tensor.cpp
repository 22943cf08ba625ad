#include "destnet/tensor.hpp"

#include <sstream>

namespace destnet {

namespace {
thread_local Graph* t_active_graph = nullptr;
}  // namespace

Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

static void check_shape(const Shape& shape) {
  for (Index d : shape) {
    if (d < 1) throw DimensionError("tensor extents must be >= 1, got " + shape_str(shape));
  }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_shape(shape);
  auto impl = std::make_shared<TensorImpl>();
  impl->value = Array::Zero(shape_numel(shape));
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  t.value().setConstant(value);
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != static_cast<Index>(data.size())) {
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->value = Eigen::Map<const Array>(data.data(), static_cast<Index>(data.size()));
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from_array(Shape shape, Array data, bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("array length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->value = std::move(data);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar_tensor(double value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

double Tensor::scalar() const {
  if (numel() != 1) throw UsageError("scalar() on tensor of shape " + shape_str(shape()));
  return impl_->value[0];
}

Array& Tensor::grad() {
  if (impl_->grad.size() == 0) impl_->grad = Array::Zero(impl_->value.size());
  return impl_->grad;
}

const Array& Tensor::grad() const {
  if (impl_->grad.size() == 0) {
    throw UsageError("gradient read before any backward pass touched this tensor");
  }
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_->grad.size() > 0) impl_->grad.setZero();
}

double Tensor::at(std::initializer_list<Index> idx) const {
  const Shape& s = impl_->shape;
  if (idx.size() != s.size()) {
    throw DimensionError("index rank " + std::to_string(idx.size()) +
                         " vs tensor rank " + std::to_string(s.size()));
  }
  Index flat = 0;
  size_t axis = 0;
  for (Index i : idx) {
    if (i < 0 || i >= s[axis]) throw DimensionError("index out of bounds on axis " + std::to_string(axis));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return impl_->value[flat];
}

Tensor Tensor::detached_copy() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->value = impl_->value;
  impl->requires_grad = false;
  return Tensor(std::move(impl));
}

void Graph::backward(const Tensor& root) {
  if (root.numel() != 1) {
    throw UsageError("backward root must be scalar, got " + shape_str(root.shape()));
  }
  root.impl()->grad = Array::Ones(1);
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
}

GraphScope::GraphScope(Graph& graph) : previous_(t_active_graph) {
  t_active_graph = &graph;
}

GraphScope::~GraphScope() { t_active_graph = previous_; }

Graph* active_graph() { return t_active_graph; }

void backward(const Tensor& loss) {
  Graph* g = loss.graph();
  if (!g) throw UsageError("backward on a tensor that was not recorded on a graph");
  g->backward(loss);
}

}  // namespace destnet

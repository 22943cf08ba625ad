#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "destnet/errors.hpp"

namespace destnet {

using Index = std::int64_t;
using Shape = std::vector<Index>;

/// Flat row-major storage for tensor contents and gradients.
using Array = Eigen::ArrayXd;

Index shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Graph;

struct TensorImpl {
  Shape shape;
  Array value;
  Array grad;  // empty until first accumulation
  bool requires_grad = false;
  Graph* graph = nullptr;  // tape this tensor was recorded on, if any
};

/// Value-semantic handle to a tensor node. Copies alias the same storage,
/// which is what lets recorded backward steps accumulate into the tensors
/// the caller still holds.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor from_array(Shape shape, Array data, bool requires_grad = false);
  /// Scalar convenience.
  static Tensor scalar_tensor(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  Index rank() const { return static_cast<Index>(impl_->shape.size()); }
  Index dim(Index axis) const { return impl_->shape[static_cast<size_t>(axis)]; }
  Index numel() const { return impl_->value.size(); }

  const Array& value() const { return impl_->value; }
  Array& value() { return impl_->value; }

  double scalar() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

  bool has_grad() const { return impl_->grad.size() > 0; }
  /// Gradient storage, allocated and zeroed on first use.
  Array& grad();
  const Array& grad() const;
  void zero_grad();

  /// Element access by multi-index (row-major), for tests and small code paths.
  double at(std::initializer_list<Index> idx) const;

  /// Deep copy with no gradient state and no tape link.
  Tensor detached_copy() const;

  Graph* graph() const { return impl_->graph; }
  void set_graph(Graph* g) { impl_->graph = g; }

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

/// Reverse-mode tape. Operations append backward steps in forward order;
/// backward() replays them in reverse, which is a valid topological order of
/// the recorded DAG because every parent is recorded before its child.
class Graph {
 public:
  void record(std::function<void()> step) { tape_.push_back(std::move(step)); }

  /// Seed d(root)/d(root) = 1 and propagate. Gradients accumulate; the
  /// caller zeroes them between backward passes.
  void backward(const Tensor& root);

  std::size_t size() const { return tape_.size(); }
  void clear() { tape_.clear(); }

 private:
  std::vector<std::function<void()>> tape_;
};

/// RAII activation of a tape on the current thread. Operations record onto
/// the innermost active tape; with no tape active they run purely forward.
class GraphScope {
 public:
  explicit GraphScope(Graph& graph);
  ~GraphScope();
  GraphScope(const GraphScope&) = delete;
  GraphScope& operator=(const GraphScope&) = delete;

 private:
  Graph* previous_;
};

Graph* active_graph();

/// Backward through the tape that recorded `loss`.
void backward(const Tensor& loss);

}  // namespace destnet

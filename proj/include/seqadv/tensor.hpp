#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace seqadv {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;   // row-major
  std::vector<double> grad;   // empty until the tensor participates in a backward pass
  bool requires_grad = false;
  int node = -1;              // index into the active ComputationRecord, -1 if detached
};

// Dense n-dimensional tensor of 64-bit reals. Copying a Tensor copies the
// handle, not the storage: parameters updated in place stay visible to every
// holder, and gradients written by backward() land where callers can see them.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor vec(std::vector<double> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t extent(std::size_t d) const { return impl_->shape[d]; }
  std::size_t size() const { return impl_->data.size(); }

  std::vector<double>& values() { return impl_->data; }
  const std::vector<double>& values() const { return impl_->data; }
  double* data() { return impl_->data.data(); }
  const double* data() const { return impl_->data.data(); }

  double item() const;                 // scalar tensors only
  double at(std::size_t i) const { return impl_->data[i]; }
  double at2(std::size_t r, std::size_t c) const;  // rank-2 only

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  // Gradient buffer, allocated (zeroed) on first touch.
  std::vector<double>& grad();
  bool has_grad() const { return !impl_->grad.empty(); }
  void zero_grad();

  int node() const { return impl_->node; }

  TensorImpl* impl() { return impl_.get(); }
  const TensorImpl* impl() const { return impl_.get(); }
  std::shared_ptr<TensorImpl> impl_ptr() const { return impl_; }

  // Deep copy with no graph membership.
  Tensor clone() const;

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Append-only record of operations for one forward pass. Node order is the
// topological order; backward() walks it once in reverse. One record is owned
// by one logical thread; distinct records may run concurrently.
class ComputationRecord {
 public:
  struct Node {
    const char* op;
    std::vector<int> inputs;
    std::function<void()> pull;  // accumulates output grad into input grads
  };

  int push(const char* op, std::vector<int> inputs, std::function<void()> pull);
  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_[i]; }

  void run_backward_from(int root_node);

  static ComputationRecord* active();

 private:
  friend class RecordScope;
  std::vector<Node> nodes_;
};

// RAII: installs a fresh record as this thread's active one. Operations executed
// outside any scope run in pure inference mode (no graph, results detached).
class RecordScope {
 public:
  RecordScope();
  ~RecordScope();
  RecordScope(const RecordScope&) = delete;
  RecordScope& operator=(const RecordScope&) = delete;

  ComputationRecord& record() { return record_; }

 private:
  ComputationRecord record_;
  ComputationRecord* prev_;
};

// ---- differentiable primitives ---------------------------------------------
// Binary ops accept equal shapes, a scalar operand, or a length-n vector
// against an [m x n] matrix (row broadcast).

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor sigmoid(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor log_op(const Tensor& x);
Tensor sqrt_op(const Tensor& x);
Tensor abs_op(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor scale(const Tensor& x, double c);     // c * x
Tensor add_const(const Tensor& x, double c); // x + c
Tensor reciprocal(const Tensor& x);

// Same element count, new extents; elements keep row-major order.
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);  // scalar

Tensor matmul(const Tensor& a, const Tensor& b);

// y = x . W^T + b  with x [batch x in] or [in], W [out x in], b [out] or empty.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Valid cross-correlation, stride 1. x [C x H x W], k [F x C x kh x kw], bias [F].
Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias);

// 2x2 window, stride 2; ties route to the first cell in row-major order.
Tensor maxpool2d(const Tensor& x);

// Seeds d(root)/d(root) = 1 and pulls gradients back through the active record.
// Gradients accumulate additively; callers zero parameter grads beforehand.
void backward(const Tensor& root);

// Max over coordinates of |analytic - central| / max(1e-12, |analytic| + |central|).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps);

}  // namespace seqadv

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tasd {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;

/// Dense row-major tensor of doubles with an optional link into the eager
/// computation graph. Copies share storage (handle semantics); use clone()
/// for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  /// Direct write access; does not record anything in the graph.
  std::span<double> mutable_values();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  bool is_leaf() const;

  /// Reverse-mode pass from this scalar. Leaf gradients accumulate across
  /// calls until zero_grad(); interior buffers are rebuilt on every call.
  /// Returns the number of graph nodes replayed.
  std::size_t backward() const;

  /// Same values, no graph link, requires_grad=false.
  Tensor detach() const;
  /// Independent storage with the same values and requires_grad flag.
  Tensor clone() const;

  const void* storage_id() const;
  TensorImpl* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;

  friend Tensor make_result(Shape, std::vector<double>,
                            std::vector<Tensor>,
                            std::function<void(TensorImpl&)>);
  friend class GradientTape;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until materialized
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  // Propagates this->grad into parents' grad buffers.
  std::function<void(TensorImpl&)> backward_fn;

  bool needs_grad_buffer() const { return requires_grad; }
  std::vector<double>& ensure_grad();
};

/// Topologically ordered record of the graph beneath a scalar loss.
class GradientTape {
 public:
  explicit GradientTape(const Tensor& loss);

  const std::vector<TensorImpl*>& nodes() const { return order_; }
  /// Seeds d loss/d loss and replays nodes in reverse order.
  std::size_t replay(double seed = 1.0);

 private:
  std::shared_ptr<TensorImpl> root_;
  std::vector<TensorImpl*> order_;
};

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Elementwise. `b` may equal `a`'s shape or any trailing suffix of it, in
// which case it is broadcast over the leading axes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor transpose(const Tensor& x, std::size_t axis_a, std::size_t axis_b);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin,
             std::size_t end);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x, std::size_t axis);

/// Rows of `weight` ([vocab, d]) selected by `ids`; result [ids.size(), d].
Tensor embedding(const Tensor& weight, std::span<const int> ids);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
/// tanh-approximation GELU.
Tensor gelu(const Tensor& x);

/// Softmax over the last axis. `additive_mask`, when given, holds one value
/// per trailing [rows, cols] (or [cols]) position; -inf entries are excluded.
Tensor softmax_lastdim(const Tensor& x,
                       std::span<const double> additive_mask = {});

/// Mean cross-entropy of logits [l, V] against `targets` at positions where
/// `valid` is true.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     const std::vector<bool>& valid);

Tensor mse(const Tensor& a, const Tensor& b);

}  // namespace tasd

#include "tasd/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace tasd {

namespace {

thread_local bool g_grad_enabled = true;

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

[[noreturn]] void fail_shape(const std::string& op, const Shape& a,
                             const Shape& b) {
  throw std::invalid_argument(op + ": shape mismatch " + shape_str(a) +
                              " vs " + shape_str(b));
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) {
    strides[i - 1] = strides[i] * shape[i];
  }
  return strides;
}

}  // namespace

Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> parents,
                   std::function<void(TensorImpl&)> backward_fn) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      impl->requires_grad = true;
      for (const auto& p : parents) impl->parents.push_back(p.impl_);
      impl->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(std::move(impl));
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<double>& TensorImpl::ensure_grad() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  return grad;
}

// ---------------------------------------------------------------------------
// Tensor handle

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw std::invalid_argument("tensor: zero-sized dimension in " +
                                            shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("tensor: shape " + shape_str(shape) +
                                " does not hold " +
                                std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::size(std::size_t axis) const {
  if (axis >= dim()) {
    throw std::out_of_range("tensor: axis " + std::to_string(axis) +
                            " out of range for " + shape_str(shape()));
  }
  return shape()[axis];
}

std::size_t Tensor::numel() const { return impl_->values.size(); }

std::span<const double> Tensor::values() const { return impl_->values; }
std::span<double> Tensor::mutable_values() { return impl_->values; }

double Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("item: tensor " + shape_str(shape()) +
                                " is not a scalar");
  }
  return impl_->values[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != dim()) {
    throw std::out_of_range("at: index rank mismatch for " +
                            shape_str(shape()));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= shape()[axis]) throw std::out_of_range("at: index out of range");
    flat = flat * shape()[axis] + i;
    ++axis;
  }
  return impl_->values[flat];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { impl_->requires_grad = flag; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }
std::span<double> Tensor::mutable_grad() { return impl_->ensure_grad(); }
void Tensor::zero_grad() { impl_->grad.clear(); }
bool Tensor::is_leaf() const { return !impl_->backward_fn; }

std::size_t Tensor::backward() const {
  if (numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                shape_str(shape()));
  }
  GradientTape tape(*this);
  return tape.replay(1.0);
}

Tensor Tensor::detach() const {
  return from(shape(), impl_->values, false);
}

Tensor Tensor::clone() const {
  return from(shape(), impl_->values, requires_grad());
}

const void* Tensor::storage_id() const { return impl_->values.data(); }

// ---------------------------------------------------------------------------
// Tape

GradientTape::GradientTape(const Tensor& loss) : root_(loss.impl_) {
  if (!root_->requires_grad) return;
  // Iterative post-order DFS over nodes that carry gradients.
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(root_.get(), 0);
  seen.insert(root_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorImpl* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order_.push_back(node);
      stack.pop_back();
    }
  }
}

std::size_t GradientTape::replay(double seed) {
  if (order_.empty()) return 0;
  for (auto* node : order_) {
    if (node->backward_fn) node->grad.assign(node->values.size(), 0.0);
  }
  root_->ensure_grad()[0] += seed;
  std::size_t visited = 0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
    ++visited;
  }
  return visited;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Elementwise

namespace {

enum class BinaryKind { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind,
              const char* name) {
  const bool a_big = a.numel() >= b.numel();
  const Shape& big = a_big ? a.shape() : b.shape();
  const Shape& small = a_big ? b.shape() : a.shape();
  if (!is_suffix(small, big)) fail_shape(name, a.shape(), b.shape());
  const std::size_t n = shape_numel(big);
  const std::size_t na = a.numel();
  const std::size_t nb = b.numel();
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[i % na];
    const double y = bv[i % nb];
    switch (kind) {
      case BinaryKind::kAdd: out[i] = x + y; break;
      case BinaryKind::kSub: out[i] = x - y; break;
      case BinaryKind::kMul: out[i] = x * y; break;
    }
  }
  return make_result(big, std::move(out), {a, b}, [kind, na, nb](TensorImpl& self) {
    TensorImpl& pa = *self.parents[0];
    TensorImpl& pb = *self.parents[1];
    const auto& g = self.grad;
    if (pa.requires_grad) {
      auto& ga = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i % na] += kind == BinaryKind::kMul ? g[i] * pb.values[i % nb] : g[i];
      }
    }
    if (pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (kind) {
          case BinaryKind::kAdd: gb[i % nb] += g[i]; break;
          case BinaryKind::kSub: gb[i % nb] -= g[i]; break;
          case BinaryKind::kMul: gb[i % nb] += g[i] * pa.values[i % na]; break;
        }
      }
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, BinaryKind::kAdd, "add");
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, BinaryKind::kSub, "sub");
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, BinaryKind::kMul, "mul");
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a}, [factor](TensorImpl& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() < 2 || b.dim() < 2 ||
      a.shape()[a.dim() - 1] != b.shape()[b.dim() - 2]) {
    fail_shape("matmul", a.shape(), b.shape());
  }
  const std::size_t p = a.shape()[a.dim() - 2];
  const std::size_t q = a.shape()[a.dim() - 1];
  const std::size_t r = b.shape()[b.dim() - 1];

  // Broadcast leading (batch) dimensions, numpy style.
  const Shape a_batch(a.shape().begin(), a.shape().end() - 2);
  const Shape b_batch(b.shape().begin(), b.shape().end() - 2);
  const std::size_t rank = std::max(a_batch.size(), b_batch.size());
  Shape batch(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da =
        i + a_batch.size() >= rank ? a_batch[i + a_batch.size() - rank] : 1;
    const std::size_t db =
        i + b_batch.size() >= rank ? b_batch[i + b_batch.size() - rank] : 1;
    if (da != db && da != 1 && db != 1) fail_shape("matmul", a.shape(), b.shape());
    batch[i] = std::max(da, db);
  }
  const std::size_t n_batch = shape_numel(batch);
  std::vector<std::size_t> a_off(n_batch), b_off(n_batch);
  {
    const auto a_str = strides_of(a_batch);
    const auto b_str = strides_of(b_batch);
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t k = 0; k < n_batch; ++k) {
      std::size_t ao = 0, bo = 0;
      for (std::size_t i = 0; i < rank; ++i) {
        const std::ptrdiff_t ia = static_cast<std::ptrdiff_t>(i + a_batch.size()) -
                                  static_cast<std::ptrdiff_t>(rank);
        const std::ptrdiff_t ib = static_cast<std::ptrdiff_t>(i + b_batch.size()) -
                                  static_cast<std::ptrdiff_t>(rank);
        if (ia >= 0 && a_batch[ia] != 1) ao += idx[i] * a_str[ia];
        if (ib >= 0 && b_batch[ib] != 1) bo += idx[i] * b_str[ib];
      }
      a_off[k] = ao * p * q;
      b_off[k] = bo * q * r;
      for (std::size_t i = rank; i-- > 0;) {
        if (++idx[i] < batch[i]) break;
        idx[i] = 0;
      }
    }
  }

  Shape out_shape = batch;
  out_shape.push_back(p);
  out_shape.push_back(r);
  std::vector<double> out(n_batch * p * r);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t k = 0; k < n_batch; ++k) {
    MutMap(out.data() + k * p * r, p, r).noalias() =
        ConstMap(av + a_off[k], p, q) * ConstMap(bv + b_off[k], q, r);
  }
  return make_result(
      std::move(out_shape), std::move(out), {a, b},
      [p, q, r, a_off = std::move(a_off), b_off = std::move(b_off)](TensorImpl& self) {
        TensorImpl& pa = *self.parents[0];
        TensorImpl& pb = *self.parents[1];
        const std::size_t n = a_off.size();
        for (std::size_t k = 0; k < n; ++k) {
          ConstMap g(self.grad.data() + k * p * r, p, r);
          if (pa.requires_grad) {
            MutMap(pa.ensure_grad().data() + a_off[k], p, q).noalias() +=
                g * ConstMap(pb.values.data() + b_off[k], q, r).transpose();
          }
          if (pb.requires_grad) {
            MutMap(pb.ensure_grad().data() + b_off[k], q, r).noalias() +=
                ConstMap(pa.values.data() + a_off[k], p, q).transpose() * g;
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Shape manipulation

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) fail_shape("reshape", x.shape(), shape);
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(out), {x}, [](TensorImpl& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const std::size_t rank = x.dim();
  if (axes.size() != rank) {
    throw std::out_of_range("permute: expected " + std::to_string(rank) +
                            " axes for " + shape_str(x.shape()));
  }
  std::vector<bool> used(rank, false);
  for (auto ax : axes) {
    if (ax >= rank || used[ax]) {
      throw std::out_of_range("permute: invalid axis list for " +
                              shape_str(x.shape()));
    }
    used[ax] = true;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = x.shape()[axes[i]];
  const auto in_str = strides_of(x.shape());
  const std::size_t n = x.numel();
  // map[out_flat] = in_flat
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < rank; ++i) src += idx[i] * in_str[axes[i]];
    map[k] = src;
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<double> out(n);
  auto xv = x.values();
  for (std::size_t k = 0; k < n; ++k) out[k] = xv[map[k]];
  return make_result(std::move(out_shape), std::move(out), {x},
                     [map = std::move(map)](TensorImpl& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t k = 0; k < map.size(); ++k) {
                         g[map[k]] += self.grad[k];
                       }
                     });
}

Tensor transpose(const Tensor& x, std::size_t axis_a, std::size_t axis_b) {
  if (axis_a >= x.dim() || axis_b >= x.dim()) {
    throw std::out_of_range("transpose: axis out of range for " +
                            shape_str(x.shape()));
  }
  std::vector<std::size_t> axes(x.dim());
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[axis_a], axes[axis_b]);
  return permute(x, axes);
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) {
    throw std::out_of_range("concat: axis " + std::to_string(axis) +
                            " out of range for " + shape_str(first));
  }
  std::size_t total = 0;
  for (const auto& t : parts) {
    if (t.dim() != first.size()) fail_shape("concat", first, t.shape());
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (i != axis && t.shape()[i] != first[i]) fail_shape("concat", first, t.shape());
    }
    total += t.shape()[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  Shape out_shape = first;
  out_shape[axis] = total;
  std::vector<double> out(outer * total * inner);
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& t : parts) {
    const std::size_t w = t.shape()[axis] * inner;
    auto tv = t.values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(tv.begin() + o * w, w, out.begin() + o * total * inner + offset);
    }
    widths.push_back(w);
    offset += w;
  }
  return make_result(std::move(out_shape), std::move(out), parts,
                     [outer, row = total * inner, widths](TensorImpl& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         TensorImpl& p = *self.parents[k];
                         if (p.requires_grad) {
                           auto& g = p.ensure_grad();
                           for (std::size_t o = 0; o < outer; ++o) {
                             for (std::size_t i = 0; i < widths[k]; ++i) {
                               g[o * widths[k] + i] += self.grad[o * row + off + i];
                             }
                           }
                         }
                         off += widths[k];
                       }
                     });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin,
             std::size_t end) {
  if (axis >= x.dim()) {
    throw std::out_of_range("slice: axis " + std::to_string(axis) +
                            " out of range for " + shape_str(x.shape()));
  }
  if (begin >= end || end > x.shape()[axis]) {
    throw std::out_of_range("slice: bad range on " + shape_str(x.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.shape()[i];
  for (std::size_t i = axis + 1; i < x.dim(); ++i) inner *= x.shape()[i];
  const std::size_t src_row = x.shape()[axis] * inner;
  const std::size_t w = (end - begin) * inner;
  const std::size_t start = begin * inner;
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  std::vector<double> out(outer * w);
  auto xv = x.values();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv.begin() + o * src_row + start, w, out.begin() + o * w);
  }
  return make_result(std::move(out_shape), std::move(out), {x},
                     [outer, src_row, w, start](TensorImpl& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t i = 0; i < w; ++i) {
                           g[o * src_row + start + i] += self.grad[o * w + i];
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  auto xv = x.values();
  const double total = std::accumulate(xv.begin(), xv.end(), 0.0);
  return make_result({1}, {total}, {x}, [](TensorImpl& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x, std::size_t axis) {
  if (axis >= x.dim()) {
    throw std::out_of_range("mean: axis " + std::to_string(axis) +
                            " out of range for " + shape_str(x.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.shape()[i];
  for (std::size_t i = axis + 1; i < x.dim(); ++i) inner *= x.shape()[i];
  const std::size_t len = x.shape()[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < x.dim(); ++i) {
    if (i != axis) out_shape.push_back(x.shape()[i]);
  }
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<double> out(outer * inner, 0.0);
  auto xv = x.values();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < len; ++k) {
      for (std::size_t i = 0; i < inner; ++i) {
        out[o * inner + i] += xv[(o * len + k) * inner + i];
      }
    }
  }
  for (auto& v : out) v /= static_cast<double>(len);
  return make_result(std::move(out_shape), std::move(out), {x},
                     [outer, inner, len](TensorImpl& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       const double f = 1.0 / static_cast<double>(len);
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t k = 0; k < len; ++k) {
                           for (std::size_t i = 0; i < inner; ++i) {
                             g[(o * len + k) * inner + i] += f * self.grad[o * inner + i];
                           }
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// Embedding

Tensor embedding(const Tensor& weight, std::span<const int> ids) {
  if (weight.dim() != 2) {
    throw std::invalid_argument("embedding: weight must be 2-D, got " +
                                shape_str(weight.shape()));
  }
  if (ids.empty()) throw std::invalid_argument("embedding: empty id list");
  const std::size_t vocab = weight.shape()[0];
  const std::size_t d = weight.shape()[1];
  std::vector<int> rows(ids.begin(), ids.end());
  std::vector<double> out(rows.size() * d);
  auto wv = weight.values();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= vocab) {
      throw std::out_of_range("embedding: id " + std::to_string(rows[i]) +
                              " outside vocabulary of " + std::to_string(vocab));
    }
    std::copy_n(wv.begin() + rows[i] * d, d, out.begin() + i * d);
  }
  const std::size_t n = rows.size();
  return make_result({n, d}, std::move(out), {weight},
                     [rows = std::move(rows), d](TensorImpl& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t i = 0; i < rows.size(); ++i) {
                         for (std::size_t j = 0; j < d; ++j) {
                           g[rows[i] * d + j] += self.grad[i * d + j];
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// Normalization and nonlinearity

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    fail_shape("layer_norm", x.shape(), gamma.shape());
  }
  const std::size_t rows = x.numel() / d;
  std::vector<double> xhat(x.numel());
  std::vector<double> rstd(rows);
  std::vector<double> out(x.numel());
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xv[r * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xv[r * d + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (xv[r * d + j] - mu) * rstd[r];
      out[r * d + j] = xhat[r * d + j] * gv[j] + bv[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [d, rows, xhat = std::move(xhat), rstd = std::move(rstd)](TensorImpl& self) {
        TensorImpl& px = *self.parents[0];
        TensorImpl& pg = *self.parents[1];
        TensorImpl& pb = *self.parents[2];
        const auto& g = self.grad;
        if (pg.requires_grad) {
          auto& gg = pg.ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) gg[i % d] += g[i] * xhat[i];
        }
        if (pb.requires_grad) {
          auto& gb = pb.ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
        }
        if (px.requires_grad) {
          auto& gx = px.ensure_grad();
          std::vector<double> dxhat(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              dxhat[j] = g[r * d + j] * pg.values[j];
              m1 += dxhat[j];
              m2 += dxhat[j] * xhat[r * d + j];
            }
            m1 /= static_cast<double>(d);
            m2 /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              gx[r * d + j] += rstd[r] * (dxhat[j] - m1 - xhat[r * d + j] * m2);
            }
          }
        }
      });
}

Tensor gelu(const Tensor& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  auto xv = x.values();
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xv[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v)));
  }
  return make_result(x.shape(), std::move(out), {x}, [](TensorImpl& self) {
    TensorImpl& px = *self.parents[0];
    auto& g = px.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = px.values[i];
      const double t = std::tanh(kC * (v + kA * v * v * v));
      const double dt = (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
      g[i] += self.grad[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
    }
  });
}

Tensor softmax_lastdim(const Tensor& x, std::span<const double> additive_mask) {
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.numel() / cols;
  const std::size_t mask_n = additive_mask.size();
  if (mask_n != 0 && (mask_n % cols != 0 || rows % (mask_n / cols) != 0)) {
    throw std::invalid_argument("softmax: mask of " + std::to_string(mask_n) +
                                " values does not tile " + shape_str(x.shape()));
  }
  auto xv = x.values();
  std::vector<double> out(x.numel());
  std::vector<double> z(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = xv[r * cols + c];
      if (std::isnan(v)) throw std::domain_error("softmax: NaN input");
      z[c] = mask_n ? v + additive_mask[(r * cols + c) % mask_n] : v;
      mx = std::max(mx, z[c]);
    }
    if (!std::isfinite(mx)) {
      throw std::domain_error("softmax: row " + std::to_string(r) +
                              " has no finite entry");
    }
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      z[c] = std::exp(z[c] - mx);
      total += z[c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = z[c] / total;
  }
  return make_result(x.shape(), std::move(out), {x}, [cols, rows](TensorImpl& self) {
    auto& g = self.parents[0]->ensure_grad();
    const auto& y = self.values;
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        dot += self.grad[r * cols + c] * y[r * cols + c];
      }
      for (std::size_t c = 0; c < cols; ++c) {
        g[r * cols + c] += y[r * cols + c] * (self.grad[r * cols + c] - dot);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Losses

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     const std::vector<bool>& valid) {
  if (logits.dim() != 2) {
    throw std::invalid_argument("cross_entropy: logits must be [l, V], got " +
                                shape_str(logits.shape()));
  }
  const std::size_t l = logits.shape()[0];
  const std::size_t vocab = logits.shape()[1];
  if (targets.size() != l || valid.size() != l) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(l) +
                                " positions but " + std::to_string(targets.size()) +
                                " targets / " + std::to_string(valid.size()) +
                                " mask entries");
  }
  const auto count = static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
  if (count == 0) throw std::invalid_argument("cross_entropy: empty validity mask");
  auto lv = logits.values();
  std::vector<double> probs(l * vocab, 0.0);
  double loss = 0.0;
  for (std::size_t t = 0; t < l; ++t) {
    if (!valid[t]) continue;
    if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= vocab) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(targets[t]) +
                              " outside vocabulary of " + std::to_string(vocab));
    }
    const double* row = lv.data() + t * vocab;
    const double mx = *std::max_element(row, row + vocab);
    double total = 0.0;
    for (std::size_t c = 0; c < vocab; ++c) {
      probs[t * vocab + c] = std::exp(row[c] - mx);
      total += probs[t * vocab + c];
    }
    for (std::size_t c = 0; c < vocab; ++c) probs[t * vocab + c] /= total;
    loss += std::log(total) + mx - row[targets[t]];
  }
  loss /= static_cast<double>(count);
  std::vector<int> tgt(targets.begin(), targets.end());
  return make_result(
      {1}, {loss}, {logits},
      [probs = std::move(probs), tgt = std::move(tgt), valid, vocab, count](TensorImpl& self) {
        auto& g = self.parents[0]->ensure_grad();
        const double f = self.grad[0] / static_cast<double>(count);
        for (std::size_t t = 0; t < tgt.size(); ++t) {
          if (!valid[t]) continue;
          for (std::size_t c = 0; c < vocab; ++c) g[t * vocab + c] += f * probs[t * vocab + c];
          g[t * vocab + tgt[t]] -= f;
        }
      });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) fail_shape("mse", a.shape(), b.shape());
  const Tensor diff = sub(a, b);
  return scale(sum(mul(diff, diff)), 1.0 / static_cast<double>(a.numel()));
}

}  // namespace tasd

#include "deixis/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>

namespace deixis {
namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool backward_done = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;

  std::size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

const std::shared_ptr<TensorNode>& node(const Tensor& t) { return t.node_; }

Tensor wrap(std::shared_ptr<TensorNode> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

}  // namespace detail

namespace {

using detail::TensorNode;

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor: empty shape");
  for (std::size_t extent : shape) {
    if (extent == 0) throw std::invalid_argument("tensor: zero extent");
  }
}

TensorNode& ref(const Tensor& t) {
  const auto& n = detail::node(t);
  if (!n) throw std::invalid_argument("tensor: operand is undefined");
  return *n;
}

std::size_t node_rows(const TensorNode& n) {
  return n.shape.size() == 1 ? 1 : n.shape[0];
}

std::size_t node_cols(const TensorNode& n) {
  return n.shape.size() == 1 ? n.shape[0] : n.shape[1];
}

void require_rank2ish(const TensorNode& n, const char* op) {
  if (n.shape.size() > 2)
    throw std::invalid_argument(std::string(op) + ": rank > 2 not supported");
}

// Builds the result node of an operation. The backprop closure receives the
// result node and must accumulate into its parents' grad buffers.
Tensor make_op(Shape shape, std::vector<double> value,
               std::initializer_list<const Tensor*> parents,
               std::function<void(TensorNode&)> backprop) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  for (const Tensor* p : parents) {
    auto& pn = detail::node(*p);
    if (!pn) throw std::invalid_argument("tensor: operand is undefined");
    n->requires_grad = n->requires_grad || pn->requires_grad;
    n->parents.push_back(pn);
  }
  if (n->requires_grad) {
    n->backprop = std::move(backprop);
  } else {
    n->parents.clear();  // constants do not pin a tape
  }
  return detail::wrap(std::move(n));
}

ConstMatMap as_matrix(const TensorNode& n) {
  return ConstMatMap(n.value.data(), static_cast<Eigen::Index>(node_rows(n)),
                     static_cast<Eigen::Index>(node_cols(n)));
}

MatMap grad_matrix(TensorNode& n) {
  n.ensure_grad();
  return MatMap(n.grad.data(), static_cast<Eigen::Index>(node_rows(n)),
                static_cast<Eigen::Index>(node_cols(n)));
}

}  // namespace

// --- Tensor basics ----------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  validate_shape(shape);
  auto n = std::make_shared<TensorNode>();
  n->value.assign(shape_product(shape), value);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return detail::wrap(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  validate_shape(shape);
  if (shape_product(shape) != values.size())
    throw std::invalid_argument("tensor: shape does not match value count");
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return detail::wrap(std::move(n));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

const Shape& Tensor::shape() const { return ref(*this).shape; }
std::size_t Tensor::size() const { return ref(*this).size(); }
std::size_t Tensor::rank() const { return ref(*this).shape.size(); }
std::size_t Tensor::rows() const { return node_rows(ref(*this)); }
std::size_t Tensor::cols() const { return node_cols(ref(*this)); }

double Tensor::at(std::size_t i) const {
  const auto& n = ref(*this);
  if (i >= n.size()) throw std::out_of_range("tensor: index out of range");
  return n.value[i];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  const auto& n = ref(*this);
  if (r >= node_rows(n) || c >= node_cols(n))
    throw std::out_of_range("tensor: index out of range");
  return n.value[r * node_cols(n) + c];
}

double Tensor::item() const {
  const auto& n = ref(*this);
  if (n.size() != 1)
    throw std::invalid_argument("tensor: item() requires a size-1 tensor");
  return n.value[0];
}

std::span<const double> Tensor::data() const {
  const auto& n = ref(*this);
  return {n.value.data(), n.value.size()};
}

std::span<double> Tensor::mutable_data() {
  auto& n = ref(*this);
  return {n.value.data(), n.value.size()};
}

bool Tensor::requires_grad() const { return ref(*this).requires_grad; }

bool Tensor::has_grad() const { return !ref(*this).grad.empty(); }

std::span<const double> Tensor::grad() const {
  auto& n = ref(*this);
  n.ensure_grad();
  return {n.grad.data(), n.grad.size()};
}

void Tensor::zero_grad() {
  auto& n = ref(*this);
  n.grad.assign(n.value.size(), 0.0);
  n.backward_done = false;
}

void Tensor::reset_backward_state() { ref(*this).backward_done = false; }

bool Tensor::all_finite() const {
  for (double v : ref(*this).value) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::backward() {
  auto root = node_;
  if (!root) throw std::invalid_argument("backward: undefined tensor");
  if (root->size() != 1)
    throw std::invalid_argument("backward: root must be a scalar");
  if (root->backward_done)
    throw std::runtime_error(
        "backward: already run on this root without reset");
  root->backward_done = true;

  // Post-order DFS gives producers before consumers; replay reversed.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->parents.size()) {
      TensorNode* parent = top.first->parents[top.second].get();
      ++top.second;
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(top.first);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->requires_grad && n->backprop) n->backprop(*n);
  }
}

// --- operations ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  auto& an = ref(a);
  auto& bn = ref(b);
  if (an.shape.size() != 2 || bn.shape.size() != 2)
    throw std::invalid_argument("matmul: operands must be rank-2");
  const std::size_t m = an.shape[0], k = an.shape[1];
  const std::size_t k2 = bn.shape[0], n = bn.shape[1];
  if (k != k2) throw std::invalid_argument("matmul: inner extents differ");

  std::vector<double> out(m * n);
  MatMap(out.data(), m, n) = as_matrix(an) * as_matrix(bn);

  auto* ap = &an;
  auto* bp = &bn;
  return make_op({m, n}, std::move(out), {&a, &b}, [ap, bp](TensorNode& self) {
    ConstMatMap g(self.grad.data(), node_rows(self), node_cols(self));
    if (ap->requires_grad) grad_matrix(*ap) += g * as_matrix(*bp).transpose();
    if (bp->requires_grad) grad_matrix(*bp) += as_matrix(*ap).transpose() * g;
  });
}

Tensor transpose(const Tensor& a) {
  auto& an = ref(a);
  if (an.shape.size() != 2)
    throw std::invalid_argument("transpose: operand must be rank-2");
  const std::size_t m = an.shape[0], n = an.shape[1];
  std::vector<double> out(m * n);
  MatMap(out.data(), n, m) = as_matrix(an).transpose();
  auto* ap = &an;
  return make_op({n, m}, std::move(out), {&a}, [ap](TensorNode& self) {
    ConstMatMap g(self.grad.data(), node_rows(self), node_cols(self));
    grad_matrix(*ap) += g.transpose();
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  auto& an = ref(a);
  auto& bn = ref(b);
  if (an.shape != bn.shape)
    throw std::invalid_argument("add: shape mismatch");
  std::vector<double> out(an.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = an.value[i] + bn.value[i];
  auto* ap = &an;
  auto* bp = &bn;
  return make_op(an.shape, std::move(out), {&a, &b},
                 [ap, bp](TensorNode& self) {
                   if (ap->requires_grad) {
                     ap->ensure_grad();
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       ap->grad[i] += self.grad[i];
                   }
                   if (bp->requires_grad) {
                     bp->ensure_grad();
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       bp->grad[i] += self.grad[i];
                   }
                 });
}

Tensor add_rows(const Tensor& x, const Tensor& bias) {
  auto& xn = ref(x);
  auto& bn = ref(bias);
  require_rank2ish(xn, "add_rows");
  if (bn.shape.size() != 1 || bn.shape[0] != node_cols(xn))
    throw std::invalid_argument("add_rows: bias must be rank-1 of width cols");
  const std::size_t m = node_rows(xn), n = node_cols(xn);
  std::vector<double> out(xn.size());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c)
      out[r * n + c] = xn.value[r * n + c] + bn.value[c];
  auto* xp = &xn;
  auto* bp = &bn;
  return make_op(xn.shape, std::move(out), {&x, &bias},
                 [xp, bp, m, n](TensorNode& self) {
                   if (xp->requires_grad) {
                     xp->ensure_grad();
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       xp->grad[i] += self.grad[i];
                   }
                   if (bp->requires_grad) {
                     bp->ensure_grad();
                     for (std::size_t r = 0; r < m; ++r)
                       for (std::size_t c = 0; c < n; ++c)
                         bp->grad[c] += self.grad[r * n + c];
                   }
                 });
}

Tensor scale(const Tensor& x, double factor) {
  auto& xn = ref(x);
  std::vector<double> out(xn.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * xn.value[i];
  auto* xp = &xn;
  return make_op(xn.shape, std::move(out), {&x}, [xp, factor](TensorNode& self) {
    xp->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      xp->grad[i] += factor * self.grad[i];
  });
}

Tensor relu(const Tensor& x) {
  auto& xn = ref(x);
  std::vector<double> out(xn.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = xn.value[i] > 0.0 ? xn.value[i] : 0.0;
  auto* xp = &xn;
  return make_op(xn.shape, std::move(out), {&x}, [xp](TensorNode& self) {
    xp->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (xp->value[i] > 0.0) xp->grad[i] += self.grad[i];
  });
}

Tensor sigmoid(const Tensor& x) {
  auto& xn = ref(x);
  std::vector<double> out(xn.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xn.value[i];
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  auto* xp = &xn;
  return make_op(xn.shape, std::move(out), {&x}, [xp](TensorNode& self) {
    xp->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double s = self.value[i];
      xp->grad[i] += s * (1.0 - s) * self.grad[i];
    }
  });
}

Tensor softmax_rows(const Tensor& x) {
  auto& xn = ref(x);
  require_rank2ish(xn, "softmax_rows");
  const std::size_t m = node_rows(xn), n = node_cols(xn);
  std::vector<double> out(xn.size());
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = xn.value.data() + r * n;
    double* orow = out.data() + r * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n; ++c) mx = std::max(mx, row[c]);
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      // -inf logits (masked entries) contribute exactly zero weight
      orow[c] = std::isinf(row[c]) && row[c] < 0.0 ? 0.0 : std::exp(row[c] - mx);
      total += orow[c];
    }
    if (!(total > 0.0))
      throw std::invalid_argument("softmax_rows: row has no finite entry");
    for (std::size_t c = 0; c < n; ++c) orow[c] /= total;
  }
  auto* xp = &xn;
  return make_op(xn.shape, std::move(out), {&x}, [xp, m, n](TensorNode& self) {
    xp->ensure_grad();
    for (std::size_t r = 0; r < m; ++r) {
      const double* w = self.value.data() + r * n;
      const double* g = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += w[c] * g[c];
      double* xg = xp->grad.data() + r * n;
      for (std::size_t c = 0; c < n; ++c) xg[c] += w[c] * (g[c] - dot);
    }
  });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double epsilon) {
  auto& xn = ref(x);
  auto& gn = ref(gain);
  auto& bn = ref(bias);
  require_rank2ish(xn, "layer_norm_rows");
  const std::size_t m = node_rows(xn), n = node_cols(xn);
  if (gn.shape.size() != 1 || gn.shape[0] != n || bn.shape.size() != 1 ||
      bn.shape[0] != n)
    throw std::invalid_argument("layer_norm_rows: gain/bias must have width cols");

  std::vector<double> out(xn.size());
  // cache normalized rows and inverse stddev for the backward pass
  auto normalized = std::make_shared<std::vector<double>>(xn.size());
  auto inv_std = std::make_shared<std::vector<double>>(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = xn.value.data() + r * n;
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += row[c];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double d = row[c] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double istd = 1.0 / std::sqrt(var + epsilon);
    (*inv_std)[r] = istd;
    for (std::size_t c = 0; c < n; ++c) {
      const double y = (row[c] - mu) * istd;
      (*normalized)[r * n + c] = y;
      out[r * n + c] = y * gn.value[c] + bn.value[c];
    }
  }
  auto* xp = &xn;
  auto* gp = &gn;
  auto* bp = &bn;
  return make_op(
      xn.shape, std::move(out), {&x, &gain, &bias},
      [xp, gp, bp, m, n, normalized, inv_std](TensorNode& self) {
        for (std::size_t r = 0; r < m; ++r) {
          const double* g = self.grad.data() + r * n;
          const double* y = normalized->data() + r * n;
          if (gp->requires_grad) {
            gp->ensure_grad();
            for (std::size_t c = 0; c < n; ++c) gp->grad[c] += g[c] * y[c];
          }
          if (bp->requires_grad) {
            bp->ensure_grad();
            for (std::size_t c = 0; c < n; ++c) bp->grad[c] += g[c];
          }
          if (xp->requires_grad) {
            xp->ensure_grad();
            double mean_dy = 0.0, mean_dyy = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
              const double dy = g[c] * gp->value[c];
              mean_dy += dy;
              mean_dyy += dy * y[c];
            }
            mean_dy /= static_cast<double>(n);
            mean_dyy /= static_cast<double>(n);
            double* xg = xp->grad.data() + r * n;
            const double istd = (*inv_std)[r];
            for (std::size_t c = 0; c < n; ++c) {
              const double dy = g[c] * gp->value[c];
              xg[c] += istd * (dy - mean_dy - y[c] * mean_dyy);
            }
          }
        }
      });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty())
    throw std::invalid_argument("concat_cols: no operands");
  std::size_t m = node_rows(ref(parts[0]));
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    auto& pn = ref(p);
    require_rank2ish(pn, "concat_cols");
    if (node_rows(pn) != m)
      throw std::invalid_argument("concat_cols: row counts differ");
    total += node_cols(pn);
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    auto& pn = ref(p);
    const std::size_t pc = node_cols(pn);
    for (std::size_t r = 0; r < m; ++r)
      std::copy_n(pn.value.data() + r * pc, pc,
                  out.data() + r * total + offset);
    offset += pc;
  }

  auto n = std::make_shared<TensorNode>();
  n->shape = {m, total};
  n->value = std::move(out);
  for (const Tensor& p : parts) {
    auto& pn = detail::node(p);
    n->requires_grad = n->requires_grad || pn->requires_grad;
    n->parents.push_back(pn);
  }
  if (n->requires_grad) {
    n->backprop = [m, total](TensorNode& self) {
      std::size_t off = 0;
      for (auto& parent : self.parents) {
        const std::size_t pc = node_cols(*parent);
        if (parent->requires_grad) {
          parent->ensure_grad();
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < pc; ++c)
              parent->grad[r * pc + c] += self.grad[r * total + off + c];
        }
        off += pc;
      }
    };
  } else {
    n->parents.clear();
  }
  return detail::wrap(std::move(n));
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  auto& xn = ref(x);
  require_rank2ish(xn, "slice_cols");
  const std::size_t m = node_rows(xn), n = node_cols(xn);
  if (count == 0 || start + count > n)
    throw std::invalid_argument("slice_cols: range out of bounds");
  std::vector<double> out(m * count);
  for (std::size_t r = 0; r < m; ++r)
    std::copy_n(xn.value.data() + r * n + start, count, out.data() + r * count);
  auto* xp = &xn;
  return make_op({m, count}, std::move(out), {&x},
                 [xp, start, count, m, n](TensorNode& self) {
                   xp->ensure_grad();
                   for (std::size_t r = 0; r < m; ++r)
                     for (std::size_t c = 0; c < count; ++c)
                       xp->grad[r * n + start + c] +=
                           self.grad[r * count + c];
                 });
}

Tensor reshape(const Tensor& x, Shape shape) {
  auto& xn = ref(x);
  validate_shape(shape);
  if (shape_product(shape) != xn.size())
    throw std::invalid_argument("reshape: element count differs");
  std::vector<double> out = xn.value;
  auto* xp = &xn;
  return make_op(std::move(shape), std::move(out), {&x},
                 [xp](TensorNode& self) {
                   xp->ensure_grad();
                   for (std::size_t i = 0; i < self.grad.size(); ++i)
                     xp->grad[i] += self.grad[i];
                 });
}

Tensor sum(const Tensor& x) {
  auto& xn = ref(x);
  double total = 0.0;
  for (double v : xn.value) total += v;
  auto* xp = &xn;
  return make_op({1}, {total}, {&x}, [xp](TensorNode& self) {
    xp->ensure_grad();
    for (double& g : xp->grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  auto& xn = ref(x);
  double total = 0.0;
  for (double v : xn.value) total += v;
  const double inv = 1.0 / static_cast<double>(xn.size());
  auto* xp = &xn;
  return make_op({1}, {total * inv}, {&x}, [xp, inv](TensorNode& self) {
    xp->ensure_grad();
    for (double& g : xp->grad) g += self.grad[0] * inv;
  });
}

Tensor add_n(std::span<const Tensor> terms) {
  if (terms.empty()) throw std::invalid_argument("add_n: no operands");
  auto& first = ref(terms[0]);
  std::vector<double> out = first.value;
  for (std::size_t t = 1; t < terms.size(); ++t) {
    auto& tn = ref(terms[t]);
    if (tn.shape != first.shape)
      throw std::invalid_argument("add_n: shape mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tn.value[i];
  }

  auto n = std::make_shared<TensorNode>();
  n->shape = first.shape;
  n->value = std::move(out);
  for (const Tensor& t : terms) {
    auto& tn = detail::node(t);
    n->requires_grad = n->requires_grad || tn->requires_grad;
    n->parents.push_back(tn);
  }
  if (n->requires_grad) {
    n->backprop = [](TensorNode& self) {
      for (auto& parent : self.parents) {
        if (!parent->requires_grad) continue;
        parent->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          parent->grad[i] += self.grad[i];
      }
    };
  } else {
    n->parents.clear();
  }
  return detail::wrap(std::move(n));
}

Tensor scaled_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const std::vector<std::uint8_t>* key_mask) {
  auto& qn = ref(q);
  auto& kn = ref(k);
  auto& vn = ref(v);
  if (qn.shape.size() != 2 || kn.shape.size() != 2 || vn.shape.size() != 2)
    throw std::invalid_argument("scaled_attention: operands must be rank-2");
  if (qn.shape[1] != kn.shape[1])
    throw std::invalid_argument("scaled_attention: Q/K widths differ");
  if (kn.shape[0] != vn.shape[0])
    throw std::invalid_argument("scaled_attention: K/V key counts differ");
  const std::size_t key_count = kn.shape[0];
  if (key_mask) {
    if (key_mask->size() != key_count)
      throw std::invalid_argument("scaled_attention: mask length mismatch");
    if (std::all_of(key_mask->begin(), key_mask->end(),
                    [](std::uint8_t b) { return b != 0; }))
      throw std::invalid_argument("scaled_attention: all keys masked");
  }

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(qn.shape[1]));
  Tensor logits = scale(matmul(q, transpose(k)), inv_sqrt_d);
  if (key_mask) {
    const double neg_inf = -std::numeric_limits<double>::infinity();
    std::vector<double> penalty(qn.shape[0] * key_count, 0.0);
    for (std::size_t r = 0; r < qn.shape[0]; ++r)
      for (std::size_t c = 0; c < key_count; ++c)
        if ((*key_mask)[c]) penalty[r * key_count + c] = neg_inf;
    logits = add(logits, Tensor::from({qn.shape[0], key_count},
                                      std::move(penalty)));
  }
  return matmul(softmax_rows(logits), v);
}

Tensor bce_loss(const Tensor& scores, const Tensor& labels) {
  auto& sn = ref(scores);
  auto& ln = ref(labels);
  if (sn.size() != ln.size())
    throw std::invalid_argument("bce_loss: score/label lengths differ");
  constexpr double kClamp = 1e-12;
  const std::size_t n = sn.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(sn.value[i], kClamp, 1.0 - kClamp);
    const double y = ln.value[i];
    total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  auto* sp = &sn;
  auto* lp = &ln;
  return make_op({1}, {total * inv_n}, {&scores, &labels},
                 [sp, lp, n, inv_n](TensorNode& self) {
                   if (!sp->requires_grad) return;
                   sp->ensure_grad();
                   const double g = self.grad[0] * inv_n;
                   for (std::size_t i = 0; i < n; ++i) {
                     const double p = sp->value[i];
                     if (p <= kClamp || p >= 1.0 - kClamp) continue;
                     const double y = lp->value[i];
                     sp->grad[i] += g * (-y / p + (1.0 - y) / (1.0 - p));
                   }
                 });
}

}  // namespace deixis

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace deixis {

using Shape = std::vector<std::size_t>;

class Tensor;

namespace detail {
struct TensorNode;
const std::shared_ptr<TensorNode>& node(const Tensor& t);
Tensor wrap(std::shared_ptr<TensorNode> n);
}  // namespace detail

// Dense 64-bit float tensor with reverse-mode differentiation.
//
// Every operation records itself on a dynamic tape; calling backward() on a
// scalar result walks the tape once and accumulates gradients into every
// tensor created with requires_grad. Graphs are rebuilt per forward pass,
// which keeps variable sequence lengths trivial. Single-owner mutation, no
// internal locking; independent graphs may live on independent threads.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rank() const;
  // Two-dimensional accessors; rank-1 tensors behave as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double at(std::size_t i) const;
  double at(std::size_t r, std::size_t c) const;
  double item() const;  // value of a size-1 tensor

  std::span<const double> data() const;
  // Direct mutation of leaf values (parameter init, optimizer updates).
  std::span<double> mutable_data();

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Reverse-mode sweep from a size-1 root. Throws on a non-scalar root or
  // when invoked twice on the same root without reset.
  void backward();
  void reset_backward_state();

  bool all_finite() const;

  // Identity comparison (same underlying node).
  bool same_as(const Tensor& other) const { return node_ == other.node_; }

 private:
  friend const std::shared_ptr<detail::TensorNode>& detail::node(
      const Tensor& t);
  friend Tensor detail::wrap(std::shared_ptr<detail::TensorNode> n);

  std::shared_ptr<detail::TensorNode> node_;
};

// --- operations ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
// x: (m,n), bias: rank-1 length n, broadcast over rows.
Tensor add_rows(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double factor);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
// Per-row normalization with per-column gain/bias (rank-1, length cols).
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double epsilon = 1e-5);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor reshape(const Tensor& x, Shape shape);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor add_n(std::span<const Tensor> terms);

// softmax(Q Kᵀ / √d) V with an optional boolean key mask; masked keys receive
// exactly zero attention weight. Throws if every key is masked.
Tensor scaled_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const std::vector<std::uint8_t>* key_mask = nullptr);

// Mean over tokens of -[y ln p + (1-y) ln(1-p)], scores clamped 1e-12 away
// from {0,1} before the logs. Labels are treated as constants.
Tensor bce_loss(const Tensor& scores, const Tensor& labels);

}  // namespace deixis

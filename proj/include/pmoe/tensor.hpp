#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "pmoe/matrix.hpp"

namespace pmoe {

enum class Activation { Tanh, Sigmoid, Gelu };

std::string_view to_string(Activation a) noexcept;
Activation parse_activation(std::string_view name);

// Scalar activation and its first two derivatives. GELU uses the exact
// Gaussian-CDF form x·Φ(x).
double activate(Activation a, double x) noexcept;
double activate_d1(Activation a, double x) noexcept;
double activate_d2(Activation a, double x) noexcept;

namespace detail {
struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g);
};
}  // namespace detail

/// A 2-D value in a reverse-mode autodiff graph. Copies share the node.
/// Values are immutable once created; only leaf values may be replaced by an
/// optimizer between passes through mutable_value().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor(Matrix::scalar(v), requires_grad);
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  double item() const;

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  /// Gradient accumulated by backward(); a zero matrix if nothing flowed in.
  Matrix grad() const;
  void zero_grad();

  /// Fresh leaf holding a copy of this value (no history).
  Tensor detach() const { return Tensor(node_->value, false); }

  const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  friend Tensor make_result(Matrix value, std::vector<Tensor> parents,
                            std::function<void(detail::Node&)> backward);

  std::shared_ptr<detail::Node> node_;
};

/// Builds an op result. History is recorded only when a parent is tracked.
Tensor make_result(Matrix value, std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backward);

/// Populates grad on every tracked node reachable from `loss`.
/// Throws ContractError if loss is not 1×1.
void backward(const Tensor& loss);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);        // elementwise
Tensor scale(const Tensor& a, double k);
Tensor mul_scalar(const Tensor& s, const Tensor& a);  // s is 1×1
Tensor add_row(const Tensor& a, const Tensor& row);   // row is 1×cols, added to every row
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);
Tensor concat_rows(const Tensor& top, const Tensor& bottom);
Tensor concat_cols(const Tensor& left, const Tensor& right);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor activation(const Tensor& a, Activation kind);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mean_rows(const Tensor& a);  // column means, 1×cols
Tensor dot(const Tensor& a, const Tensor& b);
Tensor normalize_rows(const Tensor& a);  // each row divided by its L2 norm
/// out[k] = a(index[k].first, index[k].second), shaped n×1.
Tensor gather(const Tensor& a, std::span<const std::pair<std::size_t, std::size_t>> index);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }

/// Mean cross-entropy of row-wise logits against integer labels.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

}  // namespace pmoe

#include "pmoe/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <unordered_set>

#include "pmoe/error.hpp"

namespace pmoe {

std::string_view to_string(Activation a) noexcept {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Gelu: return "gelu";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "gelu" || name == "GELU") return Activation::Gelu;
  throw ConfigError("unknown activation '" + std::string(name) + "' (expected tanh|sigmoid|gelu)");
}

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }
double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

double activate(Activation a, double x) noexcept {
  switch (a) {
    case Activation::Tanh: return std::tanh(x);
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::Gelu: return x * normal_cdf(x);
  }
  return 0.0;
}

double activate_d1(Activation a, double x) noexcept {
  switch (a) {
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::Sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case Activation::Gelu: return normal_cdf(x) + x * normal_pdf(x);
  }
  return 0.0;
}

double activate_d2(Activation a, double x) noexcept {
  switch (a) {
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return -2.0 * t * (1.0 - t * t);
    }
    case Activation::Sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s) * (1.0 - 2.0 * s);
    }
    case Activation::Gelu: return normal_pdf(x) * (2.0 - x * x);
  }
  return 0.0;
}

void detail::Node::accumulate(const Matrix& g) {
  if (!requires_grad) return;
  if (grad.empty() && value.size() != 0) {
    grad = g;
    return;
  }
  auto& d = grad.data();
  const auto& s = g.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) {
    throw ContractError("item() on non-scalar tensor " + value().shape_string());
  }
  return value()(0, 0);
}

Matrix Tensor::grad() const {
  if (node_->grad.empty()) return Matrix(rows(), cols());
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad = Matrix(); }

Tensor make_result(Matrix value, std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backward_fn) {
  auto n = std::make_shared<detail::Node>();
  n->value = std::move(value);
  const bool tracked = std::any_of(parents.begin(), parents.end(),
                                   [](const Tensor& p) { return p.requires_grad(); });
  if (tracked) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("backward: loss must be a 1x1 scalar, got " +
                        (loss.defined() ? loss.value().shape_string() : std::string("undefined")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(Matrix::scalar(1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

namespace {
detail::Node& parent(detail::Node& self, std::size_t i) { return *self.parents[i]; }

Matrix elementwise(const Matrix& a, auto fn) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = fn(a.data()[i]);
  return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shapes differ, " + a.value().shape_string() +
                         " vs " + b.value().shape_string());
  }
}
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  return make_result(matmul(a.value(), b.value()), {a, b}, [](detail::Node& self) {
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    if (pa.requires_grad) pa.accumulate(matmul(self.grad, transpose(pb.value)));
    if (pb.requires_grad) pb.accumulate(matmul(transpose(pa.value), self.grad));
  });
}

Tensor transpose(const Tensor& a) {
  return make_result(transpose(a.value()), {a}, [](detail::Node& self) {
    parent(self, 0).accumulate(transpose(self.grad));
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Matrix v = a.value();
  for (std::size_t i = 0; i < v.size(); ++i) v.data()[i] += b.value().data()[i];
  return make_result(std::move(v), {a, b}, [](detail::Node& self) {
    parent(self, 0).accumulate(self.grad);
    parent(self, 1).accumulate(self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Matrix v = a.value();
  for (std::size_t i = 0; i < v.size(); ++i) v.data()[i] -= b.value().data()[i];
  return make_result(std::move(v), {a, b}, [](detail::Node& self) {
    parent(self, 0).accumulate(self.grad);
    parent(self, 1).accumulate(elementwise(self.grad, [](double g) { return -g; }));
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Matrix v = a.value();
  for (std::size_t i = 0; i < v.size(); ++i) v.data()[i] *= b.value().data()[i];
  return make_result(std::move(v), {a, b}, [](detail::Node& self) {
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    if (pa.requires_grad) {
      Matrix g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= pb.value.data()[i];
      pa.accumulate(g);
    }
    if (pb.requires_grad) {
      Matrix g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= pa.value.data()[i];
      pb.accumulate(g);
    }
  });
}

Tensor scale(const Tensor& a, double k) {
  return make_result(elementwise(a.value(), [k](double x) { return k * x; }), {a},
                     [k](detail::Node& self) {
                       parent(self, 0).accumulate(elementwise(self.grad, [k](double g) { return k * g; }));
                     });
}

Tensor mul_scalar(const Tensor& s, const Tensor& a) {
  const double k = s.item();
  return make_result(elementwise(a.value(), [k](double x) { return k * x; }), {s, a},
                     [k](detail::Node& self) {
                       auto& ps = parent(self, 0);
                       auto& pa = parent(self, 1);
                       if (ps.requires_grad) {
                         double acc = 0.0;
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           acc += self.grad.data()[i] * pa.value.data()[i];
                         ps.accumulate(Matrix::scalar(acc));
                       }
                       if (pa.requires_grad)
                         pa.accumulate(elementwise(self.grad, [k](double g) { return k * g; }));
                     });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: expected 1x" + std::to_string(a.cols()) + " row, got " +
                         row.value().shape_string());
  }
  Matrix v = a.value();
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j) v(i, j) += row.value()(0, j);
  return make_result(std::move(v), {a, row}, [](detail::Node& self) {
    parent(self, 0).accumulate(self.grad);
    auto& pr = parent(self, 1);
    if (pr.requires_grad) {
      Matrix g(1, self.grad.cols());
      for (std::size_t i = 0; i < self.grad.rows(); ++i)
        for (std::size_t j = 0; j < self.grad.cols(); ++j) g(0, j) += self.grad(i, j);
      pr.accumulate(g);
    }
  });
}

Tensor softmax_rows(const Tensor& a) {
  return make_result(softmax_rows(a.value()), {a}, [](detail::Node& self) {
    // dx_j = y_j (g_j - Σ_k g_k y_k)
    const Matrix& y = self.value;
    Matrix g(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) s += self.grad(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) g(i, j) = y(i, j) * (self.grad(i, j) - s);
    }
    parent(self, 0).accumulate(g);
  });
}

Tensor log_softmax_rows(const Tensor& a) {
  const Matrix& x = a.value();
  if (!x.all_finite()) throw NumericError("log_softmax_rows: non-finite input " + x.shape_string());
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double v : r) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < r.size(); ++j) out(i, j) = r[j] - lse;
  }
  return make_result(std::move(out), {a}, [](detail::Node& self) {
    // dx_j = g_j - softmax_j Σ_k g_k
    const Matrix& ly = self.value;
    Matrix g(ly.rows(), ly.cols());
    for (std::size_t i = 0; i < ly.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < ly.cols(); ++j) s += self.grad(i, j);
      for (std::size_t j = 0; j < ly.cols(); ++j)
        g(i, j) = self.grad(i, j) - std::exp(ly(i, j)) * s;
    }
    parent(self, 0).accumulate(g);
  });
}

Tensor concat_rows(const Tensor& top, const Tensor& bottom) {
  const std::size_t split = top.rows();
  return make_result(concat_rows(top.value(), bottom.value()), {top, bottom},
                     [split](detail::Node& self) {
                       auto& pt = parent(self, 0);
                       auto& pb = parent(self, 1);
                       if (pt.requires_grad && split > 0) pt.accumulate(slice_rows(self.grad, 0, split));
                       if (pb.requires_grad && self.grad.rows() > split)
                         pb.accumulate(slice_rows(self.grad, split, self.grad.rows()));
                     });
}

Tensor concat_cols(const Tensor& left, const Tensor& right) {
  const std::size_t split = left.cols();
  return make_result(concat_cols(left.value(), right.value()), {left, right},
                     [split](detail::Node& self) {
                       auto& pl = parent(self, 0);
                       auto& pr = parent(self, 1);
                       if (pl.requires_grad && split > 0) pl.accumulate(slice_cols(self.grad, 0, split));
                       if (pr.requires_grad && self.grad.cols() > split)
                         pr.accumulate(slice_cols(self.grad, split, self.grad.cols()));
                     });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no parts");
  Matrix v = parts[0].value();
  std::vector<std::size_t> offsets{0};
  for (std::size_t k = 1; k < parts.size(); ++k) {
    offsets.push_back(v.cols());
    v = concat_cols(v, parts[k].value());
  }
  offsets.push_back(v.cols());
  std::vector<Tensor> ps(parts.begin(), parts.end());
  return make_result(std::move(v), std::move(ps), [offsets](detail::Node& self) {
    for (std::size_t k = 0; k + 1 < offsets.size(); ++k) {
      auto& p = parent(self, k);
      if (p.requires_grad && offsets[k + 1] > offsets[k])
        p.accumulate(slice_cols(self.grad, offsets[k], offsets[k + 1]));
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no parts");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& t : parts) {
    if (t.cols() != cols) throw DimensionError("concat_rows: column counts differ");
    rows += t.rows();
  }
  Matrix v(rows, cols);
  std::vector<std::size_t> offsets{0};
  for (const auto& t : parts) {
    const auto src = t.value().data();
    std::copy(src.begin(), src.end(), v.data().begin() + static_cast<std::ptrdiff_t>(offsets.back() * cols));
    offsets.push_back(offsets.back() + t.rows());
  }
  std::vector<Tensor> ps(parts.begin(), parts.end());
  return make_result(std::move(v), std::move(ps), [offsets](detail::Node& self) {
    for (std::size_t k = 0; k + 1 < offsets.size(); ++k) {
      auto& p = parent(self, k);
      if (p.requires_grad && offsets[k + 1] > offsets[k])
        p.accumulate(slice_rows(self.grad, offsets[k], offsets[k + 1]));
    }
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  const std::size_t total = a.rows();
  return make_result(slice_rows(a.value(), begin, end), {a}, [begin, total](detail::Node& self) {
    Matrix g(total, self.grad.cols());
    for (std::size_t i = 0; i < self.grad.rows(); ++i)
      for (std::size_t j = 0; j < self.grad.cols(); ++j) g(begin + i, j) = self.grad(i, j);
    parent(self, 0).accumulate(g);
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  const std::size_t total = a.cols();
  return make_result(slice_cols(a.value(), begin, end), {a}, [begin, total](detail::Node& self) {
    Matrix g(self.grad.rows(), total);
    for (std::size_t i = 0; i < self.grad.rows(); ++i)
      for (std::size_t j = 0; j < self.grad.cols(); ++j) g(i, begin + j) = self.grad(i, j);
    parent(self, 0).accumulate(g);
  });
}

Tensor activation(const Tensor& a, Activation kind) {
  return make_result(elementwise(a.value(), [kind](double x) { return activate(kind, x); }), {a},
                     [kind](detail::Node& self) {
                       const Matrix& x = parent(self, 0).value;
                       Matrix g = self.grad;
                       for (std::size_t i = 0; i < g.size(); ++i)
                         g.data()[i] *= activate_d1(kind, x.data()[i]);
                       parent(self, 0).accumulate(g);
                     });
}

Tensor exp(const Tensor& a) {
  return make_result(elementwise(a.value(), [](double x) { return std::exp(x); }), {a},
                     [](detail::Node& self) {
                       Matrix g = self.grad;
                       for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= self.value.data()[i];
                       parent(self, 0).accumulate(g);
                     });
}

Tensor log(const Tensor& a) {
  return make_result(elementwise(a.value(), [](double x) { return std::log(x); }), {a},
                     [](detail::Node& self) {
                       const Matrix& x = parent(self, 0).value;
                       Matrix g = self.grad;
                       for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] /= x.data()[i];
                       parent(self, 0).accumulate(g);
                     });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t r = a.rows();
  const std::size_t c = a.cols();
  return make_result(Matrix::scalar(s), {a}, [r, c](detail::Node& self) {
    parent(self, 0).accumulate(Matrix(r, c, self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Tensor mean_rows(const Tensor& a) {
  const std::size_t r = a.rows();
  Matrix v(1, a.cols());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) v(0, j) += a.value()(i, j);
  for (double& x : v.data()) x /= static_cast<double>(r);
  return make_result(std::move(v), {a}, [r](detail::Node& self) {
    Matrix g(r, self.grad.cols());
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) = self.grad(0, j) / static_cast<double>(r);
    parent(self, 0).accumulate(g);
  });
}

Tensor normalize_rows(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  Matrix v = a.value();
  std::vector<double> norms(r);
  for (std::size_t i = 0; i < r; ++i) {
    double n = 0.0;
    for (std::size_t j = 0; j < c; ++j) n += v(i, j) * v(i, j);
    n = std::sqrt(n);
    if (n == 0.0) throw NumericError("normalize_rows: zero row");
    norms[i] = n;
    for (std::size_t j = 0; j < c; ++j) v(i, j) /= n;
  }
  Matrix y = v;
  return make_result(std::move(v), {a}, [y = std::move(y), norms](detail::Node& self) {
    Matrix g(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double yg = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) yg += y(i, j) * self.grad(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) g(i, j) = (self.grad(i, j) - y(i, j) * yg) / norms[i];
    }
    parent(self, 0).accumulate(g);
  });
}

Tensor dot(const Tensor& a, const Tensor& b) { return sum(mul(a, b)); }

Tensor gather(const Tensor& a, std::span<const std::pair<std::size_t, std::size_t>> index) {
  Matrix v(index.size(), 1);
  for (std::size_t k = 0; k < index.size(); ++k) {
    const auto [r, c] = index[k];
    if (r >= a.rows() || c >= a.cols()) throw DimensionError("gather: index out of range");
    v(k, 0) = a.value()(r, c);
  }
  std::vector<std::pair<std::size_t, std::size_t>> idx(index.begin(), index.end());
  const std::size_t rows = a.rows();
  const std::size_t cols = a.cols();
  return make_result(std::move(v), {a}, [idx = std::move(idx), rows, cols](detail::Node& self) {
    Matrix g(rows, cols);
    for (std::size_t k = 0; k < idx.size(); ++k) g(idx[k].first, idx[k].second) += self.grad(k, 0);
    parent(self, 0).accumulate(g);
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  if (labels.size() != logits.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         logits.value().shape_string() + " logits");
  }
  if (labels.empty()) throw ContractError("cross_entropy: empty batch");
  std::vector<std::pair<std::size_t, std::size_t>> idx;
  idx.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) idx.emplace_back(i, labels[i]);
  return scale(mean(gather(log_softmax_rows(logits), idx)), -1.0);
}

}  // namespace pmoe

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "fsw/core/array.hpp"

namespace fsw {

namespace detail {
struct Node {
  Array value;
  Array grad;  // allocated lazily by ensure_grad()
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // accumulates self.grad into parents

  void ensure_grad() {
    if (grad.empty()) grad = Array(value.shape());
  }
};
using NodePtr = std::shared_ptr<Node>;
}  // namespace detail

/// Disables graph construction while alive (evaluation paths).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  static bool active();

 private:
  bool prev_;
};

/// Reverse-mode autograd handle over an Array. Copying a Tensor copies the
/// handle, not the data; detach() copies the value out of the graph.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(detail::NodePtr n) : n_(std::move(n)) {}

  static Tensor constant(Array v);
  static Tensor param(Array v);  // trainable leaf
  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double v);
  static Tensor scalar(double v);

  bool defined() const { return static_cast<bool>(n_); }
  const Array& value() const;
  Array& mutable_value();
  const Array& grad() const;
  bool has_grad() const;
  bool requires_grad() const;
  void zero_grad();
  Tensor detach() const;

  /// Backpropagate from a scalar tensor.
  void backward() const;

  const std::vector<int>& shape() const { return value().shape(); }
  int ndim() const { return value().ndim(); }
  int dim(int i) const { return value().dim(i); }
  int64_t numel() const { return value().numel(); }
  double item() const;

  const detail::NodePtr& node() const { return n_; }

 private:
  detail::NodePtr n_;
};

// --- elementwise (numpy-style broadcasting on binary ops) -------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double c);
Tensor mul(const Tensor& a, double c);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double c) { return add(a, c); }
inline Tensor operator+(double c, const Tensor& a) { return add(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return add(a, -c); }
inline Tensor operator-(double c, const Tensor& a) { return add(neg(a), c); }
inline Tensor operator*(const Tensor& a, double c) { return mul(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul(a, c); }
inline Tensor operator/(const Tensor& a, double c) { return mul(a, 1.0 / c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// --- unary -------------------------------------------------------------------
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor tanh(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);

// --- reductions ---------------------------------------------------------------
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a, const std::vector<int>& dims, bool keepdim);
Tensor mean(const Tensor& a, const std::vector<int>& dims, bool keepdim);

// --- shape --------------------------------------------------------------------
Tensor reshape(const Tensor& a, std::vector<int> shape);
/// Repeats an [N,C,1,1] tensor over an HxW grid.
Tensor expand_hw(const Tensor& a, int h, int w);

// --- linear algebra / conv -----------------------------------------------------
/// c = a·b. `ta`/`tb` mark the stored operand as transposed. Both set is
/// unsupported.
Tensor matmul(const Tensor& a, const Tensor& b, bool ta = false, bool tb = false);
/// x [N,Cin,H,W], w [Cout,Cin,kh,kw], optional bias [Cout].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
/// x [N,Cin,H,W], w [Cin,Cout,kh,kw], optional bias [Cout].
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
/// Differentiable bilinear resize of [N,C,H,W] to [N,C,oh,ow].
Tensor resize_bilinear(const Tensor& x, int oh, int ow);

// --- vector helpers (operate on [N,D]) ----------------------------------------
/// Per-sample cosine similarity of [N,D] pairs -> [N]. Throws ZeroVector if a
/// row norm underflows.
Tensor cosine_similarity_rows(const Tensor& a, const Tensor& b);

}  // namespace fsw

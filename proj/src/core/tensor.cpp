#include "fsw/core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "fsw/core/kernels.hpp"
#include "fsw/errors.hpp"

namespace fsw {

namespace {

thread_local bool g_no_grad = false;

constexpr int64_t kParThreshold = 1 << 13;

inline bool par_ok(int64_t n) { return kernels::parallel_enabled() && n > kParThreshold; }

Tensor make_op(Array value, std::vector<Tensor> inputs, std::function<void(detail::Node&)> bw) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  bool req = false;
  if (!g_no_grad)
    for (const auto& t : inputs)
      if (t.defined() && t.requires_grad()) req = true;
  node->requires_grad = req;
  if (req) {
    node->parents.reserve(inputs.size());
    for (const auto& t : inputs) node->parents.push_back(t.node());
    node->backward = std::move(bw);
  }
  return Tensor(node);
}

// ---- broadcasting machinery -------------------------------------------------

// Shapes are right-aligned and padded with leading 1s, numpy style.
std::vector<int> padded(const std::vector<int>& s, int rank) {
  std::vector<int> out(static_cast<size_t>(rank), 1);
  std::copy(s.begin(), s.end(), out.end() - static_cast<int64_t>(s.size()));
  return out;
}

std::vector<int> broadcast_shape(const std::vector<int>& a, const std::vector<int>& b) {
  const int rank = std::max(a.size(), b.size());
  auto pa = padded(a, rank), pb = padded(b, rank);
  std::vector<int> out(static_cast<size_t>(rank));
  for (int i = 0; i < rank; ++i) {
    if (pa[i] == pb[i]) out[i] = pa[i];
    else if (pa[i] == 1) out[i] = pb[i];
    else if (pb[i] == 1) out[i] = pa[i];
    else
      throw ShapeMismatch("cannot broadcast " + Array::to_string(a) + " with " + Array::to_string(b));
  }
  return out;
}

// Strides of `shape` as seen from `out_shape` (0 where broadcast).
std::vector<int64_t> broadcast_strides(const std::vector<int>& shape, const std::vector<int>& out_shape) {
  const int rank = static_cast<int>(out_shape.size());
  auto ps = padded(shape, rank);
  std::vector<int64_t> st(static_cast<size_t>(rank));
  int64_t acc = 1;
  for (int i = rank - 1; i >= 0; --i) {
    st[i] = (ps[i] == 1) ? 0 : acc;
    acc *= ps[i];
  }
  return st;
}

std::vector<int64_t> dense_strides(const std::vector<int>& shape) {
  std::vector<int64_t> st(shape.size());
  int64_t acc = 1;
  for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
    st[static_cast<size_t>(i)] = acc;
    acc *= shape[static_cast<size_t>(i)];
  }
  return st;
}

inline int64_t map_index(int64_t linear, const std::vector<int>& out_shape, const std::vector<int64_t>& out_strides,
                         const std::vector<int64_t>& src_strides) {
  int64_t off = 0;
  for (size_t i = 0; i < out_shape.size(); ++i) {
    const int64_t c = linear / out_strides[i];
    linear -= c * out_strides[i];
    off += c * src_strides[i];
  }
  return off;
}

template <class F>
Array broadcast_eval(const Array& a, const Array& b, F f) {
  if (a.same_shape(b)) {
    Array out(a.shape());
    const int64_t n = out.numel();
#pragma omp parallel for if (par_ok(n)) schedule(static)
    for (int64_t i = 0; i < n; ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  auto os = broadcast_shape(a.shape(), b.shape());
  Array out(os);
  const auto ost = dense_strides(os);
  const auto ast = broadcast_strides(a.shape(), os);
  const auto bst = broadcast_strides(b.shape(), os);
  const int64_t n = out.numel();
#pragma omp parallel for if (par_ok(n)) schedule(static)
  for (int64_t i = 0; i < n; ++i)
    out[i] = f(a[map_index(i, os, ost, ast)], b[map_index(i, os, ost, bst)]);
  return out;
}

// out[i] = f(g[i], a[map], b[map]) over the broadcast output shape.
template <class F>
Array broadcast_eval3(const Array& g, const Array& a, const Array& b, F f) {
  const auto& os = g.shape();
  Array out(os);
  const auto ost = dense_strides(os);
  const auto ast = broadcast_strides(a.shape(), os);
  const auto bst = broadcast_strides(b.shape(), os);
  const int64_t n = out.numel();
#pragma omp parallel for if (par_ok(n)) schedule(static)
  for (int64_t i = 0; i < n; ++i)
    out[i] = f(g[i], a[map_index(i, os, ost, ast)], b[map_index(i, os, ost, bst)]);
  return out;
}

// Accumulate `src` (broadcast-shaped vs dst) into dst: dst[j] += sum of src
// over the axes dst is narrower in. Deterministic gather per dst element.
void accumulate_reduced(Array& dst, const Array& src) {
  if (dst.same_shape(src)) {
    const int64_t n = dst.numel();
#pragma omp parallel for if (par_ok(n)) schedule(static)
    for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
    return;
  }
  const int rank = static_cast<int>(src.shape().size());
  const auto dshape = padded(dst.shape(), rank);
  const auto& sshape = src.shape();
  // reduced dims: dst==1, src>1
  std::vector<int> red_dims, red_sizes;
  for (int i = 0; i < rank; ++i)
    if (dshape[i] == 1 && sshape[static_cast<size_t>(i)] > 1) {
      red_dims.push_back(i);
      red_sizes.push_back(sshape[static_cast<size_t>(i)]);
    }
  const auto sst = dense_strides(sshape);
  std::vector<int64_t> red_strides;
  for (int d : red_dims) red_strides.push_back(sst[static_cast<size_t>(d)]);
  int64_t red_count = 1;
  for (int s : red_sizes) red_count *= s;

  const int64_t dn = dst.numel();
  const auto& dshape_dense = dshape;
  const auto ddense = dense_strides(dshape_dense);
#pragma omp parallel for if (par_ok(dn * red_count)) schedule(static)
  for (int64_t j = 0; j < dn; ++j) {
    // dst coords -> base offset in src space
    int64_t rem = j, base = 0;
    for (int i = 0; i < rank; ++i) {
      const int64_t c = rem / ddense[static_cast<size_t>(i)];
      rem -= c * ddense[static_cast<size_t>(i)];
      base += c * sst[static_cast<size_t>(i)] * (dshape_dense[static_cast<size_t>(i)] == 1 ? 0 : 1);
    }
    double acc = 0.0;
    // odometer over reduced dims
    std::vector<int64_t> ctr(red_dims.size(), 0);
    for (int64_t r = 0; r < red_count; ++r) {
      int64_t off = base;
      for (size_t q = 0; q < red_dims.size(); ++q) off += ctr[q] * red_strides[q];
      acc += src[off];
      for (int64_t q = static_cast<int64_t>(red_dims.size()) - 1; q >= 0; --q) {
        if (++ctr[static_cast<size_t>(q)] < red_sizes[static_cast<size_t>(q)]) break;
        ctr[static_cast<size_t>(q)] = 0;
      }
    }
    dst[j] += acc;
  }
}

void accumulate_into(detail::Node& parent, const Array& contribution) {
  parent.ensure_grad();
  accumulate_reduced(parent.grad, contribution);
}

template <class F>
Tensor binary_op(const Tensor& a, const Tensor& b, F f, std::function<void(detail::Node&)> bw) {
  return make_op(broadcast_eval(a.value(), b.value(), f), {a, b}, std::move(bw));
}

template <class FwdF, class GradF>
Tensor unary_op(const Tensor& a, FwdF f, GradF dfdx_from_xy) {
  const Array& x = a.value();
  Array y(x.shape());
  const int64_t n = x.numel();
#pragma omp parallel for if (par_ok(n)) schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] = f(x[i]);
  return make_op(std::move(y), {a}, [dfdx_from_xy](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const int64_t n2 = self.value.numel();
#pragma omp parallel for if (par_ok(n2)) schedule(static)
    for (int64_t i = 0; i < n2; ++i) p.grad[i] += self.grad[i] * dfdx_from_xy(p.value[i], self.value[i]);
  });
}

}  // namespace

// ---- NoGradGuard -------------------------------------------------------------

NoGradGuard::NoGradGuard() : prev_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = prev_; }
bool NoGradGuard::active() { return g_no_grad; }

// ---- Tensor ------------------------------------------------------------------

Tensor Tensor::constant(Array v) {
  auto n = std::make_shared<detail::Node>();
  n->value = std::move(v);
  return Tensor(std::move(n));
}

Tensor Tensor::param(Array v) {
  auto n = std::make_shared<detail::Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(std::vector<int> shape) { return constant(Array(std::move(shape))); }
Tensor Tensor::full(std::vector<int> shape, double v) { return constant(Array(std::move(shape), v)); }
Tensor Tensor::scalar(double v) { return constant(Array::scalar(v)); }

const Array& Tensor::value() const {
  if (!n_) throw Error("use of undefined tensor");
  return n_->value;
}

Array& Tensor::mutable_value() {
  if (!n_) throw Error("use of undefined tensor");
  return n_->value;
}

const Array& Tensor::grad() const {
  if (!n_ || n_->grad.empty()) throw Error("tensor has no gradient");
  return n_->grad;
}

bool Tensor::has_grad() const { return n_ && !n_->grad.empty(); }
bool Tensor::requires_grad() const { return n_ && n_->requires_grad; }

void Tensor::zero_grad() {
  if (n_ && !n_->grad.empty()) n_->grad.fill(0.0);
}

Tensor Tensor::detach() const { return constant(value()); }

double Tensor::item() const {
  if (numel() != 1) throw ShapeMismatch("item(): tensor has " + std::to_string(numel()) + " elements");
  return value()[0];
}

void Tensor::backward() const {
  if (!n_) throw Error("backward on undefined tensor");
  if (n_->value.numel() != 1) throw ShapeMismatch("backward requires a scalar root");
  // iterative post-order DFS for the topological order
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, size_t>> stack{{n_.get(), 0}};
  seen.insert(n_.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      detail::Node* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  n_->ensure_grad();
  n_->grad.fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

// ---- binary ops ----------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x + y; },
      [](detail::Node& self) {
        for (int k = 0; k < 2; ++k) {
          auto& p = *self.parents[static_cast<size_t>(k)];
          if (p.requires_grad) accumulate_into(p, self.grad);
        }
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x - y; },
      [](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) accumulate_into(pa, self.grad);
        if (pb.requires_grad) {
          Array ng(self.grad.shape());
          const int64_t n = ng.numel();
#pragma omp parallel for if (par_ok(n)) schedule(static)
          for (int64_t i = 0; i < n; ++i) ng[i] = -self.grad[i];
          accumulate_into(pb, ng);
        }
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x * y; },
      [](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad)
          accumulate_into(pa, broadcast_eval3(self.grad, pb.value, pb.value, [](double g, double bv, double) { return g * bv; }));
        if (pb.requires_grad)
          accumulate_into(pb, broadcast_eval3(self.grad, pa.value, pa.value, [](double g, double av, double) { return g * av; }));
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x / y; },
      [](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad)
          accumulate_into(pa, broadcast_eval3(self.grad, pb.value, pb.value, [](double g, double bv, double) { return g / bv; }));
        if (pb.requires_grad)
          accumulate_into(pb, broadcast_eval3(self.grad, pa.value, pb.value,
                                              [](double g, double av, double bv) { return -g * av / (bv * bv); }));
      });
}

Tensor add(const Tensor& a, double c) {
  return unary_op(
      a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor mul(const Tensor& a, double c) {
  return unary_op(
      a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Tensor neg(const Tensor& a) {
  return unary_op(
      a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

// ---- unary ops ------------------------------------------------------------------

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary_op(
      a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor abs(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor sqrt(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::sqrt(x); },
      // zero-input convention keeps the clamp_min(sqrt(var), eps) chain NaN-free
      [](double, double y) { return y > 0 ? 0.5 / y : 0.0; });
}

Tensor square(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor softplus(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor clamp_min(const Tensor& a, double lo) {
  return unary_op(
      a, [lo](double x) { return x > lo ? x : lo; }, [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

// ---- reductions --------------------------------------------------------------------

Tensor sum(const Tensor& a) {
  const Array& x = a.value();
  double s = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) s += x[i];
  return make_op(Array::scalar(s), {a}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const double g = self.grad[0];
    const int64_t n = p.value.numel();
#pragma omp parallel for if (par_ok(n)) schedule(static)
    for (int64_t i = 0; i < n; ++i) p.grad[i] += g;
  });
}

Tensor mean(const Tensor& a) {
  const int64_t n = a.numel();
  Tensor s = sum(a);
  return mul(s, 1.0 / static_cast<double>(n));
}

namespace {

Array reduce_dims(const Array& x, const std::vector<int>& dims, bool do_mean) {
  std::vector<int> out_shape = x.shape();
  int64_t red_count = 1;
  for (int d : dims) {
    if (d < 0 || d >= x.ndim()) throw IndexOutOfRange("reduce dim out of range");
    red_count *= out_shape[static_cast<size_t>(d)];
    out_shape[static_cast<size_t>(d)] = 1;
  }
  Array out(out_shape);
  const auto sst = dense_strides(x.shape());
  const auto ost = dense_strides(out_shape);
  std::vector<int64_t> red_strides;
  std::vector<int> red_sizes;
  for (int d : dims) {
    red_strides.push_back(sst[static_cast<size_t>(d)]);
    red_sizes.push_back(x.dim(d));
  }
  const int64_t on = out.numel();
#pragma omp parallel for if (par_ok(on * red_count)) schedule(static)
  for (int64_t j = 0; j < on; ++j) {
    int64_t rem = j, base = 0;
    for (size_t i = 0; i < out_shape.size(); ++i) {
      const int64_t c = rem / ost[i];
      rem -= c * ost[i];
      base += c * sst[i];
    }
    double acc = 0.0;
    std::vector<int64_t> ctr(dims.size(), 0);
    for (int64_t r = 0; r < red_count; ++r) {
      int64_t off = base;
      for (size_t q = 0; q < dims.size(); ++q) off += ctr[q] * red_strides[q];
      acc += x[off];
      for (int64_t q = static_cast<int64_t>(dims.size()) - 1; q >= 0; --q) {
        if (++ctr[static_cast<size_t>(q)] < red_sizes[static_cast<size_t>(q)]) break;
        ctr[static_cast<size_t>(q)] = 0;
      }
    }
    out[j] = do_mean ? acc / static_cast<double>(red_count) : acc;
  }
  return out;
}

}  // namespace

Tensor sum(const Tensor& a, const std::vector<int>& dims, bool keepdim) {
  Array keep = reduce_dims(a.value(), dims, false);
  const std::vector<int> keep_shape = keep.shape();
  // backward: parent[i] += g[broadcast(i)]
  Tensor out = make_op(std::move(keep), {a}, [keep_shape](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const Array g = self.grad.reshaped(keep_shape);
    const auto& psh = p.value.shape();
    const auto pst = dense_strides(psh);
    const auto gst = broadcast_strides(keep_shape, psh);
    const int64_t n = p.value.numel();
#pragma omp parallel for if (par_ok(n)) schedule(static)
    for (int64_t i = 0; i < n; ++i) p.grad[i] += g[map_index(i, psh, pst, gst)];
  });
  if (!keepdim) {
    std::vector<int> sq;
    for (size_t i = 0; i < out.shape().size(); ++i) {
      bool reduced = std::find(dims.begin(), dims.end(), static_cast<int>(i)) != dims.end();
      if (!reduced) sq.push_back(out.shape()[i]);
    }
    if (sq.empty()) sq.push_back(1);
    return reshape(out, sq);
  }
  return out;
}

Tensor mean(const Tensor& a, const std::vector<int>& dims, bool keepdim) {
  int64_t red_count = 1;
  for (int d : dims) red_count *= a.dim(d);
  return mul(sum(a, dims, keepdim), 1.0 / static_cast<double>(red_count));
}

// ---- shape ops ------------------------------------------------------------------------

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  Array v = a.value().reshaped(shape);
  return make_op(std::move(v), {a}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const int64_t n = p.value.numel();
#pragma omp parallel for if (par_ok(n)) schedule(static)
    for (int64_t i = 0; i < n; ++i) p.grad[i] += self.grad[i];
  });
}

Tensor expand_hw(const Tensor& a, int h, int w) {
  const Array& x = a.value();
  if (x.ndim() != 4 || x.dim(2) != 1 || x.dim(3) != 1)
    throw ShapeMismatch("expand_hw expects [N,C,1,1], got " + x.shape_str());
  const int n = x.dim(0), c = x.dim(1);
  Array y({n, c, h, w});
  const int64_t planes = static_cast<int64_t>(n) * c;
#pragma omp parallel for if (par_ok(planes * h * w)) schedule(static)
  for (int64_t p = 0; p < planes; ++p) {
    double* dst = y.data() + p * h * w;
    std::fill(dst, dst + static_cast<int64_t>(h) * w, x[p]);
  }
  return make_op(std::move(y), {a}, [h, w](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const int64_t planes = p.value.numel();
#pragma omp parallel for if (par_ok(planes * h * w)) schedule(static)
    for (int64_t q = 0; q < planes; ++q) {
      const double* g = self.grad.data() + q * h * w;
      double acc = 0.0;
      for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) acc += g[i];
      p.grad[q] += acc;
    }
  });
}

// ---- matmul / conv -----------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  if (ta && tb) throw ShapeMismatch("matmul: ta && tb unsupported");
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.ndim() != 2 || bv.ndim() != 2) throw ShapeMismatch("matmul expects rank-2 operands");
  const int m = ta ? av.dim(1) : av.dim(0);
  const int k = ta ? av.dim(0) : av.dim(1);
  const int kb = tb ? bv.dim(1) : bv.dim(0);
  const int n = tb ? bv.dim(0) : bv.dim(1);
  if (k != kb)
    throw ShapeMismatch("matmul inner dims disagree: " + av.shape_str() + " vs " + bv.shape_str());
  Array y({m, n});
  kernels::matmul(av.data(), bv.data(), y.data(), m, k, n, ta, tb, false);
  return make_op(std::move(y), {a, b}, [m, k, n, ta, tb](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const double* g = self.grad.data();
    if (pa.requires_grad) {
      pa.ensure_grad();
      if (!ta && !tb)  // ga[m,k] += g·b^T
        kernels::matmul(g, pb.value.data(), pa.grad.data(), m, n, k, false, true, true);
      else if (!ta && tb)  // b stored [n,k]; ga[m,k] += g·b_stored
        kernels::matmul(g, pb.value.data(), pa.grad.data(), m, n, k, false, false, true);
      else  // ta: a stored [k,m]; ga_stored[k,m] += b·g^T
        kernels::matmul(pb.value.data(), g, pa.grad.data(), k, n, m, false, true, true);
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      if (!ta && !tb)  // gb[k,n] += a^T·g
        kernels::matmul(pa.value.data(), g, pb.grad.data(), k, m, n, true, false, true);
      else if (!ta && tb)  // b stored [n,k]; gb_stored[n,k] += g^T·a
        kernels::matmul(g, pa.value.data(), pb.grad.data(), n, m, k, true, false, true);
      else  // ta: a stored [k,m]; gb[k,n] += a_stored·g
        kernels::matmul(pa.value.data(), g, pb.grad.data(), k, m, n, false, false, true);
    }
  });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const Array& xv = x.value();
  const Array& wv = w.value();
  if (xv.ndim() != 4 || wv.ndim() != 4) throw ShapeMismatch("conv2d expects 4-d input and weight");
  if (xv.dim(1) != wv.dim(1))
    throw ShapeMismatch("conv2d channel mismatch: " + xv.shape_str() + " vs " + wv.shape_str());
  kernels::ConvDims d;
  d.n = xv.dim(0); d.cin = xv.dim(1); d.h = xv.dim(2); d.w = xv.dim(3);
  d.cout = wv.dim(0); d.kh = wv.dim(2); d.kw = wv.dim(3);
  d.stride = stride; d.pad = pad;
  if (d.out_h() < 1 || d.out_w() < 1) throw ShapeMismatch("conv2d output would be empty");
  Array y({d.n, d.cout, d.out_h(), d.out_w()});
  const double* bias = b.defined() ? b.value().data() : nullptr;
  kernels::conv2d_forward(xv.data(), wv.data(), bias, y.data(), d);
  std::vector<Tensor> inputs = b.defined() ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w};
  return make_op(std::move(y), std::move(inputs), [d](detail::Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    detail::Node* pb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
    if (px.requires_grad) {
      px.ensure_grad();
      kernels::conv2d_grad_input(self.grad.data(), pw.value.data(), px.grad.data(), d);
    }
    if (pw.requires_grad) {
      pw.ensure_grad();
      double* gb = nullptr;
      if (pb && pb->requires_grad) {
        pb->ensure_grad();
        gb = pb->grad.data();
      }
      kernels::conv2d_grad_weight(px.value.data(), self.grad.data(), pw.grad.data(), gb, d);
    }
  });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const Array& xv = x.value();
  const Array& wv = w.value();
  if (xv.ndim() != 4 || wv.ndim() != 4) throw ShapeMismatch("conv_transpose2d expects 4-d input and weight");
  if (xv.dim(1) != wv.dim(0))
    throw ShapeMismatch("conv_transpose2d channel mismatch: " + xv.shape_str() + " vs " + wv.shape_str());
  kernels::ConvTDims d;
  d.n = xv.dim(0); d.cin = xv.dim(1); d.h = xv.dim(2); d.w = xv.dim(3);
  d.cout = wv.dim(1); d.kh = wv.dim(2); d.kw = wv.dim(3);
  d.stride = stride; d.pad = pad;
  if (d.out_h() < 1 || d.out_w() < 1) throw ShapeMismatch("conv_transpose2d output would be empty");
  Array y({d.n, d.cout, d.out_h(), d.out_w()});
  const double* bias = b.defined() ? b.value().data() : nullptr;
  kernels::conv_transpose2d_forward(xv.data(), wv.data(), bias, y.data(), d);
  std::vector<Tensor> inputs = b.defined() ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w};
  return make_op(std::move(y), std::move(inputs), [d](detail::Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    detail::Node* pb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
    if (px.requires_grad) {
      px.ensure_grad();
      kernels::conv_transpose2d_grad_input(self.grad.data(), pw.value.data(), px.grad.data(), d);
    }
    if (pw.requires_grad) {
      pw.ensure_grad();
      double* gb = nullptr;
      if (pb && pb->requires_grad) {
        pb->ensure_grad();
        gb = pb->grad.data();
      }
      kernels::conv_transpose2d_grad_weight(px.value.data(), self.grad.data(), pw.grad.data(), gb, d);
    }
  });
}

Tensor resize_bilinear(const Tensor& x, int oh, int ow) {
  const Array& xv = x.value();
  if (xv.ndim() != 4) throw ShapeMismatch("resize_bilinear expects [N,C,H,W]");
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (h == oh && w == ow) {
    // still wrap in a pass-through node so gradients flow
    return reshape(x, {n, c, h, w});
  }
  Array y({n, c, oh, ow});
  kernels::resize_bilinear(xv.data(), y.data(), n * c, h, w, oh, ow);
  return make_op(std::move(y), {x}, [n, c, h, w, oh, ow](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    kernels::resize_bilinear_grad(self.grad.data(), p.grad.data(), n * c, h, w, oh, ow);
  });
}

Tensor cosine_similarity_rows(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape() != b.shape())
    throw ShapeMismatch("cosine_similarity_rows expects matching [N,D] operands");
  // reject degenerate rows up front: the norms sit in denominators
  for (int r = 0; r < a.dim(0); ++r) {
    double na = 0, nb = 0;
    for (int j = 0; j < a.dim(1); ++j) {
      const double av = a.value()[static_cast<int64_t>(r) * a.dim(1) + j];
      const double bv = b.value()[static_cast<int64_t>(r) * a.dim(1) + j];
      na += av * av;
      nb += bv * bv;
    }
    if (na <= 0.0 || nb <= 0.0) throw ZeroVector("cosine of a zero vector (row " + std::to_string(r) + ")");
  }
  Tensor dot = sum(mul(a, b), {1}, false);
  Tensor na = sqrt(sum(square(a), {1}, false));
  Tensor nb = sqrt(sum(square(b), {1}, false));
  return div(dot, mul(na, nb));
}

}  // namespace fsw

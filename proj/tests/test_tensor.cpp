#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fsw/core/tensor.hpp"
#include "fsw/errors.hpp"
#include "support/grad_check.hpp"
#include "support/test_util.hpp"

using namespace fsw;
using fsw::test::grad_check;
using fsw::test::random_array;
using fsw::test::uniform_array;

TEST_CASE("broadcast add/mul values") {
  Tensor a = Tensor::constant(Array::from({2, 3}, {1, 2, 3, 4, 5, 6}));
  Tensor b = Tensor::constant(Array::from({1, 3}, {10, 20, 30}));
  Tensor c = add(a, b);
  CHECK(c.value()[0] == 11);
  CHECK(c.value()[5] == 36);
  Tensor d = mul(a, Tensor::constant(Array::from({2, 1}, {2, 3})));
  CHECK(d.value()[2] == 6);
  CHECK(d.value()[3] == 12);
}

TEST_CASE("reductions over dims") {
  Tensor a = Tensor::constant(Array::from({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8}));
  Tensor s = sum(a, {0}, false);
  CHECK(s.shape() == std::vector<int>{2, 2});
  CHECK(s.value()[0] == 6);
  CHECK(s.value()[3] == 12);
  Tensor m = mean(a, {1, 2}, true);
  CHECK(m.shape() == std::vector<int>{2, 1, 1});
  CHECK(m.value()[0] == doctest::Approx(2.5));
  CHECK(m.value()[1] == doctest::Approx(6.5));
  CHECK(mean(a).item() == doctest::Approx(4.5));
}

TEST_CASE("gradient accumulates across multiple uses") {
  Tensor x = Tensor::param(Array::from({2}, {3, 4}));
  Tensor y = sum(add(x, x));
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(2.0));
}

TEST_CASE("detach blocks gradient flow") {
  Tensor x = Tensor::param(Array::from({2}, {1, 2}));
  Tensor y = sum(mul(x.detach(), x.detach()));
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("NoGradGuard skips graph construction") {
  Tensor x = Tensor::param(Array::from({2}, {1, 2}));
  NoGradGuard guard;
  Tensor y = sum(square(x));
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("finite differences: elementwise and broadcast ops") {
  Rng rng(1);
  Tensor a = Tensor::param(random_array({2, 3, 4, 4}, rng));
  Tensor b = Tensor::param(random_array({1, 3, 1, 1}, rng));
  auto r = grad_check({a, b}, [&] { return mean(mul(add(a, b), sub(a, b))); });
  CHECK(r.max_rel_err < 1e-6);

  Tensor c = Tensor::param(uniform_array({2, 3}, rng, 0.5, 2.0));
  Tensor d = Tensor::param(uniform_array({1, 3}, rng, 0.5, 2.0));
  r = grad_check({c, d}, [&] { return mean(div(c, d)); });
  CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("finite differences: unary ops") {
  Rng rng(2);
  // inputs shifted away from the relu/abs kinks
  Tensor x = Tensor::param(uniform_array({3, 5}, rng, 0.2, 1.5));
  Tensor y = Tensor::param(uniform_array({3, 5}, rng, -1.5, -0.2));

  auto r = grad_check({x, y}, [&] { return mean(add(relu(x), relu(y))); });
  CHECK(r.max_rel_err < 1e-6);
  r = grad_check({x, y}, [&] { return mean(add(leaky_relu(x, 0.2), leaky_relu(y, 0.2))); });
  CHECK(r.max_rel_err < 1e-6);
  r = grad_check({x, y}, [&] { return mean(add(tanh(x), tanh(y))); });
  CHECK(r.max_rel_err < 1e-6);
  r = grad_check({x, y}, [&] { return mean(add(abs(x), abs(y))); });
  CHECK(r.max_rel_err < 1e-6);
  r = grad_check({x}, [&] { return mean(sqrt(x)); });
  CHECK(r.max_rel_err < 1e-6);
  r = grad_check({x, y}, [&] { return mean(add(square(x), square(y))); });
  CHECK(r.max_rel_err < 1e-6);
  r = grad_check({x, y}, [&] { return mean(add(softplus(x), softplus(y))); });
  CHECK(r.max_rel_err < 1e-6);
  // clamp floor at 0: x is strictly positive, y strictly negative
  r = grad_check({x, y}, [&] { return mean(add(clamp_min(x, 0.0), clamp_min(y, 0.0))); });
  CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("finite differences: reductions and reshape") {
  Rng rng(3);
  Tensor x = Tensor::param(random_array({2, 3, 4, 4}, rng));
  auto r = grad_check({x}, [&] { return mean(square(mean(x, {2, 3}, true))); }, 1e-5, 32);
  CHECK(r.max_rel_err < 1e-6);
  r = grad_check({x}, [&] { return mean(square(sum(x, {0, 2, 3}, false))); }, 1e-5, 32);
  CHECK(r.max_rel_err < 1e-6);
  r = grad_check({x}, [&] { return mean(square(reshape(x, {6, 16}))); }, 1e-5, 32);
  CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("finite differences: matmul with transpose flags") {
  Rng rng(4);
  Tensor a = Tensor::param(random_array({4, 3}, rng));
  Tensor b = Tensor::param(random_array({3, 5}, rng));
  auto r = grad_check({a, b}, [&] { return mean(square(matmul(a, b))); });
  CHECK(r.max_rel_err < 1e-6);

  Tensor bt = Tensor::param(random_array({5, 3}, rng));
  r = grad_check({a, bt}, [&] { return mean(square(matmul(a, bt, false, true))); });
  CHECK(r.max_rel_err < 1e-6);

  Tensor at = Tensor::param(random_array({3, 4}, rng));
  r = grad_check({at, b}, [&] { return mean(square(matmul(at, b, true, false))); });
  CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("finite differences: conv2d / conv_transpose2d / resize / expand") {
  Rng rng(5);
  Tensor x = Tensor::param(random_array({2, 3, 6, 6}, rng));
  Tensor w = Tensor::param(random_array({4, 3, 3, 3}, rng, 0.4));
  Tensor b = Tensor::param(random_array({4}, rng, 0.2));
  auto r = grad_check({x, w, b}, [&] { return mean(square(conv2d(x, w, b, 1, 1))); }, 1e-5, 40);
  CHECK(r.max_rel_err < 1e-5);
  r = grad_check({x, w, b}, [&] { return mean(square(conv2d(x, w, b, 2, 1))); }, 1e-5, 40);
  CHECK(r.max_rel_err < 1e-5);

  Tensor wt = Tensor::param(random_array({3, 2, 4, 4}, rng, 0.4));
  Tensor bt = Tensor::param(random_array({2}, rng, 0.2));
  r = grad_check({x, wt, bt}, [&] { return mean(square(conv_transpose2d(x, wt, bt, 2, 1))); }, 1e-5, 40);
  CHECK(r.max_rel_err < 1e-5);

  r = grad_check({x}, [&] { return mean(square(resize_bilinear(x, 4, 4))); }, 1e-5, 40);
  CHECK(r.max_rel_err < 1e-5);
  r = grad_check({x}, [&] { return mean(square(resize_bilinear(x, 9, 9))); }, 1e-5, 40);
  CHECK(r.max_rel_err < 1e-5);

  Tensor v = Tensor::param(random_array({2, 3, 1, 1}, rng));
  r = grad_check({v}, [&] { return mean(square(expand_hw(v, 5, 5))); });
  CHECK(r.max_rel_err < 1e-5);
}

TEST_CASE("cosine similarity rows: values and gradient") {
  Tensor a = Tensor::constant(Array::from({2, 2}, {1, 0, 0, 1}));
  Tensor b = Tensor::constant(Array::from({2, 2}, {1, 0, 1, 0}));
  Tensor c = cosine_similarity_rows(a, b);
  CHECK(c.value()[0] == doctest::Approx(1.0));
  CHECK(c.value()[1] == doctest::Approx(0.0));

  Rng rng(6);
  Tensor p = Tensor::param(random_array({3, 6}, rng));
  Tensor q = Tensor::param(random_array({3, 6}, rng));
  auto r = grad_check({p, q}, [&] { return mean(cosine_similarity_rows(p, q)); });
  CHECK(r.max_rel_err < 1e-5);

  Tensor z = Tensor::constant(Array({2, 2}, 0.0));
  CHECK_THROWS_AS(cosine_similarity_rows(z, b), ZeroVector);
}

TEST_CASE("backward requires a scalar root") {
  Tensor x = Tensor::param(Array::from({2}, {1, 2}));
  Tensor y = square(x);
  CHECK_THROWS_AS(y.backward(), ShapeMismatch);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fsw/losses/losses.hpp"
#include "support/grad_check.hpp"
#include "support/test_util.hpp"

using namespace fsw;
using namespace fsw::losses;
using fsw::test::random_array;

namespace {

/// Image backend that reads the desired cosine (vs the first basis vector)
/// out of the first pixel of each sample.
enc::LambdaImageBackend planted_cosine_backend() {
  return enc::LambdaImageBackend(4, [](const Array& img) {
    const int n = img.dim(0);
    const int64_t per = img.numel() / n;
    Array out({n, 4}, 0.0);
    for (int r = 0; r < n; ++r) {
      const double c = img[r * per];
      out[static_cast<int64_t>(r) * 4] = c;
      out[static_cast<int64_t>(r) * 4 + 1] = std::sqrt(std::max(0.0, 1.0 - c * c));
    }
    return out;
  });
}

enc::LambdaTextBackend basis_text_backend() {
  return enc::LambdaTextBackend(4, [](const std::string&) {
    Array e({1, 4}, 0.0);
    e[0] = 1.0;
    return e;
  });
}

Tensor tagged_image(double tag, int size = 8) {
  Array img({1, 3, size, size}, 0.0);
  img[0] = tag;
  return Tensor::constant(std::move(img));
}

}  // namespace

TEST_CASE("cosine distance: aligned, orthogonal, opposite") {
  Tensor a = Tensor::constant(Array::from({1, 3}, {1, 2, 3}));
  CHECK(cosine_distance_loss(a, a).item() == doctest::Approx(0.0));
  Tensor e1 = Tensor::constant(Array::from({1, 2}, {1, 0}));
  Tensor e2 = Tensor::constant(Array::from({1, 2}, {0, 1}));
  CHECK(cosine_distance_loss(e1, e2).item() == doctest::Approx(1.0));
  Tensor na = Tensor::constant(Array::from({1, 3}, {-1, -2, -3}));
  CHECK(cosine_distance_loss(a, na).item() == doctest::Approx(2.0));
  CHECK_THROWS_AS(cosine_distance_loss(Tensor::constant(Array({1, 3}, 0.0)), a), ZeroVector);
}

TEST_CASE("cosine losses are scale invariant") {
  Rng rng(1);
  Tensor a = Tensor::constant(random_array({2, 6}, rng));
  Tensor b = Tensor::constant(random_array({2, 6}, rng));
  const double base = cosine_distance_loss(a, b).item();
  for (double s : {0.1, 10.0}) {
    Array sa = a.value();
    for (int64_t i = 0; i < sa.numel(); ++i) sa[i] *= s;
    CHECK(cosine_distance_loss(Tensor::constant(sa), b).item() == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("id swap loss: zero at identical crops, bounded, differentiable") {
  enc::BackendSpec spec{"stub", "", 16, 16, 4, 55, "", true};
  enc::StubImageBackend identity(spec);
  Rng rng(2);
  Tensor img = Tensor::constant(random_array({1, 3, 16, 16}, rng, 0.4));
  CHECK(id_swap_loss(img, img, identity).item() == doctest::Approx(0.0).epsilon(1e-6));

  Tensor other = Tensor::constant(random_array({1, 3, 16, 16}, rng, 0.4));
  const double v = id_swap_loss(img, other, identity).item();
  CHECK(v >= 0.0);
  CHECK(v <= 2.0);

  Tensor x_ts = Tensor::param(random_array({1, 3, 16, 16}, rng, 0.4));
  auto rep = fsw::test::grad_check({x_ts}, [&] { return id_swap_loss(x_ts, other, identity); }, 1e-5, 60);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("masked reconstruction loss") {
  Rng rng(3);
  Tensor a = Tensor::constant(random_array({1, 3, 4, 4}, rng));
  Tensor b = Tensor::constant(random_array({1, 3, 4, 4}, rng));
  Tensor ones = Tensor::constant(Array({1, 1, 4, 4}, 1.0));
  Tensor zeros = Tensor::constant(Array({1, 1, 4, 4}, 0.0));
  CHECK(masked_recon_loss(a, b, ones).item() == doctest::Approx(0.0));
  CHECK(masked_recon_loss(a, a, zeros).item() == doctest::Approx(0.0));

  Array diff = b.value();
  for (int64_t i = 0; i < diff.numel(); ++i) diff[i] += 0.5;
  CHECK(masked_recon_loss(Tensor::constant(diff), b, zeros).item() == doctest::Approx(0.5));

  Tensor badmask = Tensor::constant(Array({1, 1, 3, 3}, 1.0));
  CHECK_THROWS_AS(masked_recon_loss(a, b, badmask), ShapeMismatch);
}

TEST_CASE("cycle loss: zero, constant shift, triangle inequality") {
  Rng rng(4);
  Tensor a = Tensor::constant(random_array({1, 3, 5, 5}, rng));
  CHECK(cycle_loss(a, a).item() == doctest::Approx(0.0));

  Array shifted = a.value();
  for (int64_t i = 0; i < shifted.numel(); ++i) shifted[i] += 1.0;
  CHECK(cycle_loss(Tensor::constant(shifted), a).item() == doctest::Approx(1.0));

  Tensor b = Tensor::constant(random_array({1, 3, 5, 5}, rng));
  Tensor c = Tensor::constant(random_array({1, 3, 5, 5}, rng));
  CHECK(cycle_loss(a, c).item() <= cycle_loss(a, b).item() + cycle_loss(b, c).item() + 1e-6);
}

TEST_CASE("perceptual loss: zero at identity, nonnegative, differentiable") {
  enc::BackendSpec spec{"stub", "", 0, 16, 4, 66, "", false};
  enc::StubPerceptualBackend backend(spec);
  Rng rng(5);
  Tensor a = Tensor::constant(random_array({1, 3, 16, 16}, rng, 0.4));
  CHECK(perceptual_loss(a, a, backend).item() == doctest::Approx(0.0));
  Tensor b = Tensor::constant(random_array({1, 3, 16, 16}, rng, 0.4));
  CHECK(perceptual_loss(a, b, backend).item() >= 0.0);

  Tensor ap = Tensor::param(a.value());
  auto rep = fsw::test::grad_check({ap}, [&] { return perceptual_loss(ap, b, backend); }, 1e-5, 60);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("attribute preserving loss is the unweighted sum of its parts") {
  enc::BackendSpec spec{"stub", "", 0, 16, 4, 66, "", false};
  enc::StubPerceptualBackend backend(spec);
  Rng rng(6);
  Tensor x_ts = Tensor::constant(random_array({1, 3, 16, 16}, rng, 0.4));
  Tensor x_tst = Tensor::constant(random_array({1, 3, 16, 16}, rng, 0.4));
  Tensor x_t = Tensor::constant(random_array({1, 3, 16, 16}, rng, 0.4));
  Tensor mask = Tensor::constant(Array({1, 1, 16, 16}, 0.0));
  const double whole = attribute_preserving_loss(x_ts, x_tst, x_t, mask, backend).item();
  const double parts = masked_recon_loss(x_ts, x_t, mask).item() + cycle_loss(x_tst, x_t).item() +
                       perceptual_loss(x_ts, x_t, backend).item();
  CHECK(whole == doctest::Approx(parts).epsilon(1e-12));
}

TEST_CASE("clip text loss gate truth table") {
  auto clip_img = planted_cosine_backend();
  auto clip_txt = basis_text_backend();

  // gate open: target matches the caption better than the swap does
  auto open = clip_text_loss(tagged_image(0.6), tagged_image(0.8), {"caption"}, clip_img, clip_txt);
  CHECK(open.tau == std::vector<int>{1});
  CHECK(open.loss.item() == doctest::Approx(0.4));
  CHECK(open.tau_active_fraction == doctest::Approx(1.0));

  // gate closed: swap already matches at least as well
  auto closed = clip_text_loss(tagged_image(0.6), tagged_image(0.5), {"caption"}, clip_img, clip_txt);
  CHECK(closed.tau == std::vector<int>{0});
  CHECK(closed.loss.item() == doctest::Approx(0.0));

  // equality closes the strict gate
  auto equal = clip_text_loss(tagged_image(0.7), tagged_image(0.7), {"caption"}, clip_img, clip_txt);
  CHECK(equal.tau == std::vector<int>{0});
  CHECK(equal.loss.item() == doctest::Approx(0.0));
}

TEST_CASE("clip text loss is zero whenever the swap similarity is at least the target's") {
  auto clip_img = planted_cosine_backend();
  auto clip_txt = basis_text_backend();
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const double s_swap = rng.uniform(-0.99, 0.99);
    const double s_tgt = rng.uniform(-0.99, 0.99);
    auto res = clip_text_loss(tagged_image(s_swap), tagged_image(s_tgt), {"x"}, clip_img, clip_txt);
    if (s_swap >= s_tgt) {
      CHECK(res.loss.item() == doctest::Approx(0.0));
    } else {
      CHECK(res.loss.item() == doctest::Approx(1.0 - s_swap));
    }
  }
}

TEST_CASE("clip id loss: zero at identity, bounded, differentiable") {
  enc::BackendSpec spec{"stub", "", 16, 16, 4, 77, "", true};
  enc::StubImageBackend clip_img(spec);
  Rng rng(8);
  Tensor img = Tensor::constant(random_array({1, 3, 16, 16}, rng, 0.4));
  CHECK(clip_id_loss(img, img, clip_img).item() == doctest::Approx(0.0).epsilon(1e-9));

  Tensor other = Tensor::constant(random_array({1, 3, 16, 16}, rng, 0.4));
  const double v = clip_id_loss(img, other, clip_img).item();
  CHECK(v >= 0.0);
  CHECK(v <= 2.0);

  Tensor x_ts = Tensor::param(random_array({1, 3, 16, 16}, rng, 0.4));
  auto rep = fsw::test::grad_check({x_ts}, [&] { return clip_id_loss(x_ts, other, clip_img); }, 1e-5, 60);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("least-squares adversarial pair") {
  Tensor ones = Tensor::constant(Array({1, 1, 3, 3}, 1.0));
  Tensor zeros = Tensor::constant(Array({1, 1, 3, 3}, 0.0));

  auto [g1, d1] = adversarial_losses(ones, zeros);
  CHECK(d1.item() == doctest::Approx(0.0));
  auto [g2, d2] = adversarial_losses(zeros, ones);
  CHECK(g2.item() == doctest::Approx(0.0));
  CHECK(d2.item() == doctest::Approx(1.0));  // ((0-1)^2 + 1^2)/2

  Tensor small = Tensor::constant(Array({1, 1, 2, 2}, 1.0));
  CHECK_THROWS_AS(adversarial_losses(ones, small), ShapeMismatch);
}

TEST_CASE("hinge and bce objectives produce their known values") {
  Tensor ones = Tensor::constant(Array({1, 1, 2, 2}, 1.0));
  Tensor neg_ones = Tensor::constant(Array({1, 1, 2, 2}, -1.0));
  auto [gh, dh] = adversarial_losses(ones, neg_ones, GanObjective::hinge);
  CHECK(dh.item() == doctest::Approx(0.0));
  CHECK(gh.item() == doctest::Approx(1.0));

  Tensor zeros = Tensor::constant(Array({1, 1, 2, 2}, 0.0));
  auto [gb, db] = adversarial_losses(zeros, zeros, GanObjective::bce);
  CHECK(db.item() == doctest::Approx(2.0 * std::log(2.0)));
  CHECK(gb.item() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("total loss recombination with the published weights") {
  LossWeights w;  // 10.0, 0.5, 1.0, 1.0
  TotalLossInputs in;
  in.id = Tensor::scalar(1.0);
  in.rec = Tensor::scalar(1.0);
  in.cycle = Tensor::scalar(0.0);
  in.percept = Tensor::scalar(0.0);
  in.adv_g = Tensor::scalar(1.0);
  in.clip_text = Tensor::scalar(1.0);
  in.clip_id = Tensor::scalar(1.0);
  in.tau_active_fraction = 1.0;

  auto [total, b] = combine_total(in, w, Ablation::w_clips);
  CHECK(total.item() == doctest::Approx(13.5));
  CHECK(b.total == doctest::Approx(13.5));

  auto [t2, b2] = combine_total(in, w, Ablation::wo_clips);
  CHECK(t2.item() == doctest::Approx(11.5));
  CHECK(b2.clip_text == 0.0);
  CHECK(b2.clip_id == 0.0);
  CHECK(b2.tau_active_fraction == 0.0);

  TotalLossInputs zero;
  zero.id = Tensor::scalar(0.0);
  zero.rec = Tensor::scalar(0.0);
  zero.cycle = Tensor::scalar(0.0);
  zero.percept = Tensor::scalar(0.0);
  zero.adv_g = Tensor::scalar(0.0);
  auto [t3, b3] = combine_total(zero, w, Ablation::w_clips);
  CHECK(t3.item() == doctest::Approx(0.0));
  CHECK(b3.total == doctest::Approx(0.0));
}

TEST_CASE("breakdown equals the weighted recombination on random terms") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    LossWeights w{rng.uniform(0, 5), rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 2)};
    TotalLossInputs in;
    in.id = Tensor::scalar(rng.uniform(0, 2));
    in.rec = Tensor::scalar(rng.uniform(0, 1));
    in.cycle = Tensor::scalar(rng.uniform(0, 1));
    in.percept = Tensor::scalar(rng.uniform(0, 1));
    in.adv_g = Tensor::scalar(rng.uniform(0, 2));
    in.clip_text = Tensor::scalar(rng.uniform(0, 2));
    in.clip_id = Tensor::scalar(rng.uniform(0, 2));
    auto [total, b] = combine_total(in, w, Ablation::w_clips);
    const double recombined = w.lambda_id * b.id + w.lambda_ap * (b.rec + b.cycle + b.percept) +
                              w.lambda_adv * b.adv_g + w.lambda_clip * (b.clip_text + b.clip_id);
    CHECK(std::fabs(total.item() - recombined) < 1e-6);
  }
}

TEST_CASE("ablation parsing round-trips") {
  for (auto a : {Ablation::w_clips, Ablation::clip_wo_text, Ablation::clip_wo_id, Ablation::wo_clips})
    CHECK(ablation_from_string(to_string(a)) == a);
  CHECK_THROWS_AS(ablation_from_string("nope"), ConfigMismatch);
  CHECK_THROWS_AS(gan_objective_from_string("wgan"), ConfigMismatch);
}

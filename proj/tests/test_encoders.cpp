#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "fsw/encoders/backends.hpp"
#include "fsw/errors.hpp"
#include "support/grad_check.hpp"
#include "support/test_util.hpp"

using namespace fsw;
using enc::BackendRegistry;
using enc::BackendSpec;
using fsw::test::random_array;

namespace {

Tensor random_image(int n, int size, Rng& rng, double scale = 0.5) {
  return Tensor::constant(random_array({n, 3, size, size}, rng, scale));
}

double cosine_of(const Array& a, const Array& b) {
  double d = 0, na = 0, nb = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    d += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return d / (std::sqrt(na) * std::sqrt(nb));
}

BackendRegistry small_registry() {
  auto specs = BackendRegistry::default_specs();
  for (auto& [role, s] : specs) {
    s.dim = (role == "pose") ? 3 : 32;
    s.width = 4;
    if (role != "identity" && role != "eval_identity") s.native_input = 32;
  }
  return BackendRegistry(std::move(specs));
}

}  // namespace

TEST_CASE("identity stub: frozen determinism and unit self-similarity") {
  auto reg = small_registry();
  Rng rng(1);
  Tensor img = random_image(1, 112, rng);
  Tensor a = reg.identity().encode(img);
  Tensor b = reg.identity().encode(Tensor::constant(img.value()));
  CHECK(fsw::test::bitwise_equal(a.value(), b.value()));
  CHECK(cosine_of(a.value(), b.value()) == doctest::Approx(1.0));
  CHECK(a.dim(1) == 32);
}

TEST_CASE("identity stub decorrelates independent noise images") {
  // distribution measured over 100 pairs and pinned: stub embeddings of
  // independent noise should be nearly uncorrelated
  auto reg = small_registry();
  Rng rng(2);
  int below = 0;
  const int pairs = 100;
  for (int i = 0; i < pairs; ++i) {
    Tensor a = reg.identity().encode(random_image(1, 112, rng));
    Tensor b = reg.identity().encode(random_image(1, 112, rng));
    if (std::fabs(cosine_of(a.value(), b.value())) < 0.5) ++below;
  }
  CHECK(below >= 95);
}

TEST_CASE("identity stub never returns an all-zero embedding") {
  auto reg = small_registry();
  Tensor zero = Tensor::constant(Array({1, 3, 112, 112}, 0.0));
  Tensor v = reg.identity().encode(zero);
  double norm = 0;
  for (int64_t i = 0; i < v.numel(); ++i) norm += v.value()[i] * v.value()[i];
  CHECK(std::sqrt(norm) >= 1e-6);
}

TEST_CASE("clip image stub resizes internally and reports its dimension") {
  auto reg = small_registry();
  Rng rng(3);
  Tensor e256 = reg.clip_image().encode(random_image(2, 256, rng));
  CHECK(e256.shape() == std::vector<int>{2, 32});
  Tensor e112 = reg.clip_image().encode(random_image(2, 112, rng));
  CHECK(e112.shape() == std::vector<int>{2, 32});
}

TEST_CASE("text stub: determinism, order sensitivity, empty text") {
  auto reg = small_registry();
  auto& txt = reg.clip_text();
  Tensor a = txt.encode("a man wearing glasses");
  Tensor b = txt.encode("a man wearing glasses");
  CHECK(fsw::test::bitwise_equal(a.value(), b.value()));

  Tensor c = txt.encode("glasses wearing man a");
  CHECK_FALSE(fsw::test::bitwise_equal(a.value(), c.value()));

  CHECK_THROWS_AS(txt.encode(""), EmptyText);
  CHECK_THROWS_AS(txt.encode("   "), EmptyText);
}

TEST_CASE("perceptual stub returns three halving layers and a smoothness bound") {
  auto reg = small_registry();
  Rng rng(4);
  Tensor img = random_image(1, 256, rng);
  auto feats = reg.perceptual().features(img);
  REQUIRE(feats.size() == 3);
  // native input 32 in the small registry: layers at 16/8/4
  CHECK(feats[0].dim(2) == 16);
  CHECK(feats[1].dim(2) == 8);
  CHECK(feats[2].dim(3) == 4);

  auto feats2 = reg.perceptual().features(Tensor::constant(img.value()));
  for (size_t i = 0; i < feats.size(); ++i)
    CHECK(fsw::test::bitwise_equal(feats[i].value(), feats2[i].value()));

  // Lipschitz smoke bound, measured once on the stub and pinned
  Array nudged = img.value();
  Rng nrng(5);
  for (int64_t i = 0; i < nudged.numel(); ++i) nudged[i] += 1e-6 * nrng.normal();
  auto feats3 = reg.perceptual().features(Tensor::constant(nudged));
  for (size_t i = 0; i < feats.size(); ++i)
    CHECK(fsw::test::max_abs_diff(feats[i].value(), feats3[i].value()) < 1e-3);
}

TEST_CASE("default perceptual stub yields 128/64/32 layers on a 256 input") {
  BackendRegistry reg(BackendRegistry::default_specs());
  Rng rng(6);
  auto feats = reg.perceptual().features(random_image(1, 256, rng));
  REQUIRE(feats.size() == 3);
  CHECK(feats[0].dim(2) == 128);
  CHECK(feats[1].dim(2) == 64);
  CHECK(feats[2].dim(2) == 32);
}

TEST_CASE("pose stub: zero at the canonical template, bounded angles") {
  auto reg = small_registry();
  Tensor zero = Tensor::constant(Array({1, 3, 64, 64}, 0.0));
  Tensor p = reg.pose().encode(zero);
  REQUIRE(p.shape() == std::vector<int>{1, 3});
  for (int i = 0; i < 3; ++i) CHECK(std::fabs(p.value()[i]) < 1e-6);

  Rng rng(7);
  Tensor q = reg.pose().encode(random_image(1, 64, rng, 1.0));
  for (int i = 0; i < 3; ++i) {
    CHECK(q.value()[i] >= -180.0);
    CHECK(q.value()[i] <= 180.0);
  }
}

TEST_CASE("fid stub output dimension follows the registry config") {
  auto reg = small_registry();
  Rng rng(8);
  Tensor f = reg.fid().encode(random_image(2, 64, rng));
  CHECK(f.shape() == std::vector<int>{2, 32});
}

TEST_CASE("input gradients flow through the stubs and pass finite differences") {
  BackendSpec spec{"stub", "", 16, 16, 4, 99, "", true};
  enc::StubImageBackend backend(spec);
  Rng rng(9);
  Tensor img = Tensor::param(random_array({1, 3, 16, 16}, rng, 0.5));
  auto rep = fsw::test::grad_check({img}, [&] { return mean(square(backend.encode(img))); }, 1e-5, 60);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("stub parameters are frozen: no gradient reaches them") {
  BackendSpec spec{"stub", "", 16, 16, 4, 99, "", true};
  enc::StubImageBackend backend(spec);
  const uint64_t before = backend.state_checksum();
  Rng rng(10);
  Tensor img = Tensor::param(random_array({1, 3, 16, 16}, rng, 0.5));
  Tensor loss = mean(square(backend.encode(img)));
  loss.backward();
  CHECK(img.has_grad());
  CHECK(backend.state_checksum() == before);
}

TEST_CASE("file backend reproduces the exported stub bit for bit") {
  const auto dir = std::filesystem::temp_directory_path() / "fsw_backend_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "identity.fswt").string();

  BackendSpec spec{"stub", "", 24, 32, 4, 1234, "", true};
  enc::StubImageBackend stub(spec);
  stub.export_weights(path);

  BackendSpec file_spec = spec;
  file_spec.kind = "file";
  enc::StubImageBackend loaded(file_spec, path);
  CHECK(loaded.output_dim() == 24);
  CHECK(loaded.state_checksum() == stub.state_checksum());

  Rng rng(11);
  Tensor img = random_image(1, 32, rng);
  CHECK(fsw::test::bitwise_equal(stub.encode(img).value(), loaded.encode(img).value()));

  // optional real-backend smoke bound: embedding norm within [0.5, 50]
  Tensor e = loaded.encode(img);
  double norm = 0;
  for (int64_t i = 0; i < e.numel(); ++i) norm += e.value()[i] * e.value()[i];
  norm = std::sqrt(norm);
  CHECK(norm >= 0.5);
  CHECK(norm <= 50.0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("registry: call counters, missing roles, eval identity separation") {
  auto reg = small_registry();
  Rng rng(12);
  CHECK(reg.clip_calls() == 0);
  reg.clip_image().encode(random_image(1, 32, rng));
  reg.clip_text().encode("hello there");
  CHECK(reg.clip_calls() == 2);
  reg.reset_call_counters();
  CHECK(reg.clip_calls() == 0);

  BackendRegistry empty(std::map<std::string, BackendSpec>{});
  CHECK_THROWS_AS(empty.identity(), BackendNotLoaded);

  auto specs = BackendRegistry::default_specs();
  specs["eval_identity"] = specs["identity"];
  BackendRegistry same(std::move(specs));
  CHECK_THROWS_AS(same.eval_identity(), ConfigMismatch);
}

TEST_CASE("frozen checksum is stable across a backward pass") {
  auto reg = small_registry();
  Rng rng(13);
  Tensor img = Tensor::param(random_array({1, 3, 112, 112}, rng, 0.5));
  reg.identity().encode(img);
  const uint64_t before = reg.frozen_checksum();
  Tensor loss = mean(square(reg.identity().encode(img)));
  loss.backward();
  CHECK(reg.frozen_checksum() == before);
}

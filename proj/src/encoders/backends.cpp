#include "fsw/encoders/backends.hpp"

#include <json.hpp>

#include <cmath>
#include <sstream>

#include "fsw/core/hash.hpp"
#include "fsw/core/serialize.hpp"
#include "fsw/errors.hpp"

namespace fsw::enc {

using nlohmann::json;

namespace {

int two_stage_output(int n) {
  auto stage = [](int s) { return (s - 1) / 4 + 1; };  // k5 s4 p2
  return stage(stage(n));
}

std::vector<std::string> whitespace_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

/// Adds a tiny constant offset to any all-but-zero row so downstream cosine
/// terms stay defined on degenerate inputs.
Tensor apply_nonzero_guard(Tensor v) {
  const Array& a = v.value();
  const int n = a.dim(0), d = a.dim(1);
  Array fix({n, d}, 0.0);
  bool triggered = false;
  for (int r = 0; r < n; ++r) {
    double sq = 0.0;
    for (int j = 0; j < d; ++j) sq += a[static_cast<int64_t>(r) * d + j] * a[static_cast<int64_t>(r) * d + j];
    if (std::sqrt(sq) < 1e-6) {
      fix[static_cast<int64_t>(r) * d] = 2e-6;
      triggered = true;
    }
  }
  if (!triggered) return v;
  return add(v, Tensor::constant(std::move(fix)));
}

}  // namespace

// ---- ProjectionNet ---------------------------------------------------------

ProjectionNet::ProjectionNet(int native_input, int width, int dim, Rng rng)
    : native_(native_input), width_(width), dim_(dim) {
  conv1_ = std::make_unique<nn::Conv2d>(3, width, 5, 4, 2, /*bias=*/false, rng, /*trainable=*/false);
  conv2_ = std::make_unique<nn::Conv2d>(width, 2 * width, 5, 4, 2, false, rng, false);
  const int s = two_stage_output(native_input);
  flat_ = 2 * width * s * s;
  proj_ = std::make_unique<nn::Linear>(flat_, dim, /*bias=*/false, rng, false);
  add_child("conv1", *conv1_);
  add_child("conv2", *conv2_);
  add_child("proj", *proj_);
}

Tensor ProjectionNet::forward(const Tensor& image) const {
  if (image.ndim() != 4 || image.dim(1) != 3)
    throw ShapeMismatch("encoder expects [N,3,H,W], got " + image.value().shape_str());
  Tensor x = image;
  if (image.dim(2) != native_ || image.dim(3) != native_) x = resize_bilinear(x, native_, native_);
  x = fsw::tanh(conv1_->forward(x));
  x = fsw::tanh(conv2_->forward(x));
  x = reshape(x, {x.dim(0), flat_});
  return proj_->forward(x);
}

// ---- StubImageBackend ------------------------------------------------------

StubImageBackend::StubImageBackend(const BackendSpec& spec) : spec_(spec) {
  net_ = std::make_unique<ProjectionNet>(spec.native_input, spec.width, spec.dim, Rng(spec.seed));
}

StubImageBackend::StubImageBackend(const BackendSpec& spec, const std::string& weights_path) : spec_(spec) {
  TensorFile file = load_tensor_file(weights_path);
  json meta;
  try {
    meta = json::parse(file.meta);
  } catch (const json::parse_error& e) {
    throw ParseError("backend weight container has invalid meta: " + std::string(e.what()));
  }
  if (meta.value("format", "") != "fsw-backend-v1")
    throw ConfigMismatch("unsupported backend weight format in " + weights_path);
  const int native = meta.at("native_input").get<int>();
  const int width = meta.at("width").get<int>();
  const int dim = meta.at("dim").get<int>();
  if (spec.dim != 0 && spec.dim != dim)
    throw ConfigMismatch("config expects dim " + std::to_string(spec.dim) + " but " + weights_path +
                         " provides " + std::to_string(dim));
  input_scale_ = meta.value("input_scale", 1.0);
  input_shift_ = meta.value("input_shift", 0.0);
  net_ = std::make_unique<ProjectionNet>(native, width, dim, Rng(0));
  net_->load_state(file.tensors);
  spec_.dim = dim;
  spec_.native_input = native;
  spec_.width = width;
}

void StubImageBackend::export_weights(const std::string& path) const {
  json meta{{"format", "fsw-backend-v1"},
            {"native_input", net_->native_input()},
            {"width", net_->width()},
            {"dim", net_->dim()},
            {"input_scale", input_scale_},
            {"input_shift", input_shift_}};
  std::vector<std::pair<std::string, const Array*>> tensors;
  net_->collect_state(tensors);
  save_tensor_file(path, tensors, meta.dump());
}

int StubImageBackend::output_dim() const { return net_->dim(); }
int StubImageBackend::native_input() const { return net_->native_input(); }
uint64_t StubImageBackend::state_checksum() const { return net_->state_checksum(); }

Tensor StubImageBackend::do_encode(const Tensor& image) {
  if (!net_) throw BackendNotLoaded("image backend has no network");
  Tensor x = image;
  if (input_scale_ != 1.0 || input_shift_ != 0.0) x = add(mul(x, input_scale_), input_shift_);
  Tensor v = net_->forward(x);
  if (spec_.post == "pose") return mul(fsw::tanh(v), 180.0);
  if (spec_.nonzero_guard) v = apply_nonzero_guard(v);
  return v;
}

// ---- HashTextBackend ---------------------------------------------------------

HashTextBackend::HashTextBackend(const BackendSpec& spec) : spec_(spec) {}

Tensor HashTextBackend::do_encode(const std::string& text) {
  if (text.empty()) throw EmptyText("cannot encode empty text");
  const auto tokens = whitespace_tokens(text);
  if (tokens.empty()) throw EmptyText("cannot encode whitespace-only text");
  const int d = spec_.dim;
  Array v({1, d}, 0.0);
  const Rng base(spec_.seed);
  for (size_t i = 0; i < tokens.size(); ++i) {
    Rng tok_rng(splitmix64(fnv1a64(tokens[i]) ^ spec_.seed));
    Rng pos_rng = base.fork(i);
    for (int j = 0; j < d; ++j) v[j] += tok_rng.normal() * pos_rng.normal();
  }
  const double norm = std::sqrt(static_cast<double>(tokens.size()));
  for (int j = 0; j < d; ++j) v[j] = std::tanh(v[j] / norm);
  Tensor out = Tensor::constant(std::move(v));
  return apply_nonzero_guard(out);
}

// ---- StubPerceptualBackend ----------------------------------------------------

StubPerceptualBackend::StubPerceptualBackend(const BackendSpec& spec) : spec_(spec) {
  Rng rng(spec.seed);
  const int w = spec.width;
  c1_ = std::make_unique<nn::Conv2d>(3, w, 3, 2, 1, false, rng, false);
  c2_ = std::make_unique<nn::Conv2d>(w, 2 * w, 3, 2, 1, false, rng, false);
  c3_ = std::make_unique<nn::Conv2d>(2 * w, 4 * w, 3, 2, 1, false, rng, false);
}

uint64_t StubPerceptualBackend::state_checksum() const {
  return c1_->state_checksum() ^ (c2_->state_checksum() * 31) ^ (c3_->state_checksum() * 131);
}

std::vector<Tensor> StubPerceptualBackend::do_features(const Tensor& image) {
  if (!c1_) throw BackendNotLoaded("perceptual backend has no network");
  if (image.ndim() != 4 || image.dim(1) != 3)
    throw ShapeMismatch("perceptual backend expects [N,3,H,W], got " + image.value().shape_str());
  Tensor x = image;
  const int n = spec_.native_input;
  if (image.dim(2) != n || image.dim(3) != n) x = resize_bilinear(x, n, n);
  Tensor f1 = fsw::tanh(c1_->forward(x));
  Tensor f2 = fsw::tanh(c2_->forward(f1));
  Tensor f3 = fsw::tanh(c3_->forward(f2));
  return {f1, f2, f3};
}

// ---- BackendRegistry -----------------------------------------------------------

BackendRegistry::BackendRegistry(std::map<std::string, BackendSpec> specs) : specs_(std::move(specs)) {
  for (auto& [role, spec] : specs_) {
    if (role == "pose") spec.post = "pose";
    if (role == "identity" || role == "eval_identity" || role == "clip_image") spec.nonzero_guard = true;
  }
}

std::map<std::string, BackendSpec> BackendRegistry::default_specs() {
  std::map<std::string, BackendSpec> s;
  s["identity"] = {"stub", "", 512, 112, 8, 101, "", true};
  s["eval_identity"] = {"stub", "", 512, 112, 8, 202, "", true};
  s["clip_image"] = {"stub", "", 512, 64, 8, 303, "", true};
  s["clip_text"] = {"stub", "", 512, 0, 0, 404, "", false};
  s["perceptual"] = {"stub", "", 0, 256, 8, 505, "", false};
  s["pose"] = {"stub", "", 3, 64, 4, 606, "pose", false};
  s["expression"] = {"stub", "", 16, 64, 4, 707, "", false};
  s["fid"] = {"stub", "", 2048, 64, 8, 808, "", false};
  return s;
}

const BackendSpec& BackendRegistry::spec_for(const std::string& role) const {
  auto it = specs_.find(role);
  if (it == specs_.end()) throw BackendNotLoaded("no backend configured for role '" + role + "'");
  return it->second;
}

ImageBackend& BackendRegistry::image_backend(const std::string& role) {
  auto it = images_.find(role);
  if (it != images_.end()) return *it->second;
  const BackendSpec& spec = spec_for(role);
  std::unique_ptr<ImageBackend> backend;
  if (spec.kind == "stub") {
    backend = std::make_unique<StubImageBackend>(spec);
  } else if (spec.kind == "file") {
    if (spec.weights_path.empty())
      throw ConfigMismatch("backend role '" + role + "' has kind=file but no weights_path");
    backend = std::make_unique<StubImageBackend>(spec, spec.weights_path);
  } else {
    throw ConfigMismatch("unknown backend kind '" + spec.kind + "' for role '" + role + "'");
  }
  auto [ins, ok] = images_.emplace(role, std::move(backend));
  (void)ok;
  return *ins->second;
}

ImageBackend& BackendRegistry::eval_identity() {
  const BackendSpec& train = spec_for("identity");
  const BackendSpec& eval = spec_for("eval_identity");
  if (eval.kind == train.kind && eval.seed == train.seed && eval.weights_path == train.weights_path)
    throw ConfigMismatch("eval_identity must be a different backend instance than the training identity encoder");
  return image_backend("eval_identity");
}

TextBackend& BackendRegistry::clip_text() {
  if (!text_) text_ = std::make_unique<HashTextBackend>(spec_for("clip_text"));
  return *text_;
}

PerceptualBackend& BackendRegistry::perceptual() {
  if (!perceptual_) perceptual_ = std::make_unique<StubPerceptualBackend>(spec_for("perceptual"));
  return *perceptual_;
}

uint64_t BackendRegistry::frozen_checksum() const {
  uint64_t h = 0x9E3779B97F4A7C15ULL;
  for (const auto& [role, b] : images_) h ^= fnv1a64(role) * b->state_checksum();
  if (perceptual_) h ^= perceptual_->state_checksum();
  return h;
}

uint64_t BackendRegistry::clip_calls() const {
  uint64_t c = 0;
  auto it = images_.find("clip_image");
  if (it != images_.end()) c += it->second->calls();
  if (text_) c += text_->calls();
  return c;
}

void BackendRegistry::reset_call_counters() {
  for (auto& [role, b] : images_) b->reset_calls();
  if (text_) text_->reset_calls();
  if (perceptual_) perceptual_->reset_calls();
}

}  // namespace fsw::enc

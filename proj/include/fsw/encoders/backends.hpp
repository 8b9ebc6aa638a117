#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "fsw/core/rng.hpp"
#include "fsw/core/tensor.hpp"
#include "fsw/nn/modules.hpp"

namespace fsw::enc {

/// Frozen image encoder: [N,3,H,W] in [-1,1] -> [N,dim]. Each backend owns
/// resizing to its native input; gradients flow through to the image but the
/// backend parameters never train.
class ImageBackend {
 public:
  virtual ~ImageBackend() = default;
  Tensor encode(const Tensor& image) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return do_encode(image);
  }
  virtual int output_dim() const = 0;
  virtual int native_input() const = 0;
  virtual uint64_t state_checksum() const = 0;
  uint64_t calls() const { return calls_.load(std::memory_order_relaxed); }
  void reset_calls() { calls_.store(0, std::memory_order_relaxed); }

 protected:
  virtual Tensor do_encode(const Tensor& image) = 0;

 private:
  std::atomic<uint64_t> calls_{0};
};

/// Frozen text encoder: UTF-8 string -> [1,dim]. Throws EmptyText on "".
class TextBackend {
 public:
  virtual ~TextBackend() = default;
  Tensor encode(const std::string& text) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return do_encode(text);
  }
  virtual int output_dim() const = 0;
  uint64_t calls() const { return calls_.load(std::memory_order_relaxed); }
  void reset_calls() { calls_.store(0, std::memory_order_relaxed); }

 protected:
  virtual Tensor do_encode(const std::string& text) = 0;

 private:
  std::atomic<uint64_t> calls_{0};
};

/// Frozen multi-scale feature extractor for the perceptual loss.
class PerceptualBackend {
 public:
  virtual ~PerceptualBackend() = default;
  std::vector<Tensor> features(const Tensor& image) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return do_features(image);
  }
  virtual uint64_t state_checksum() const = 0;
  uint64_t calls() const { return calls_.load(std::memory_order_relaxed); }
  void reset_calls() { calls_.store(0, std::memory_order_relaxed); }

 protected:
  virtual std::vector<Tensor> do_features(const Tensor& image) = 0;

 private:
  std::atomic<uint64_t> calls_{0};
};

// ---------------------------------------------------------------------------

/// Per-role backend description, deserialized from the `encoders` config
/// section. kind "stub" builds a fixed-seed random-projection network; kind
/// "file" loads weights (and architecture) from a tensor container.
struct BackendSpec {
  std::string kind = "stub";
  std::string weights_path;
  int dim = 512;
  int native_input = 112;
  int width = 8;  // channels of the first stage
  uint64_t seed = 1;
  std::string post;           // "" | "pose" (scaled to [-180,180]) — derived from role
  bool nonzero_guard = false; // identity/clip embeddings must never be all-zero

  bool operator==(const BackendSpec&) const = default;
};

/// Two tanh conv stages (stride 4, no bias) and a final linear projection.
/// Smooth and bias-free: differentiable everywhere and maps the zero image
/// to the zero vector, which the pose stub uses as its canonical frontal
/// template.
class ProjectionNet : public nn::Module {
 public:
  ProjectionNet(int native_input, int width, int dim, Rng rng);
  Tensor forward(const Tensor& image) const;
  int dim() const { return dim_; }
  int native_input() const { return native_; }
  int width() const { return width_; }

 private:
  std::unique_ptr<nn::Conv2d> conv1_, conv2_;
  std::unique_ptr<nn::Linear> proj_;
  int native_, width_, dim_, flat_;
};

class StubImageBackend : public ImageBackend {
 public:
  explicit StubImageBackend(const BackendSpec& spec);
  /// Builds from a weight container written by export_weights().
  StubImageBackend(const BackendSpec& spec, const std::string& weights_path);
  int output_dim() const override;
  int native_input() const override;
  uint64_t state_checksum() const override;
  void export_weights(const std::string& path) const;

 protected:
  Tensor do_encode(const Tensor& image) override;

 private:
  BackendSpec spec_;
  std::unique_ptr<ProjectionNet> net_;
  double input_scale_ = 1.0, input_shift_ = 0.0;
};

/// Deterministic order-sensitive token-hash embedding; each position mixes
/// the token vector with its own fixed sign/scale pattern so permuting words
/// changes the result.
class HashTextBackend : public TextBackend {
 public:
  explicit HashTextBackend(const BackendSpec& spec);
  int output_dim() const override { return spec_.dim; }

 protected:
  Tensor do_encode(const std::string& text) override;

 private:
  BackendSpec spec_;
};

class StubPerceptualBackend : public PerceptualBackend {
 public:
  explicit StubPerceptualBackend(const BackendSpec& spec);
  uint64_t state_checksum() const override;

 protected:
  std::vector<Tensor> do_features(const Tensor& image) override;

 private:
  BackendSpec spec_;
  std::unique_ptr<nn::Conv2d> c1_, c2_, c3_;
};

/// Test seam: wraps a value-level function as a frozen backend so metric
/// tests can plant exact embeddings.
class LambdaImageBackend : public ImageBackend {
 public:
  LambdaImageBackend(int dim, std::function<Array(const Array&)> fn)
      : dim_(dim), fn_(std::move(fn)) {}
  int output_dim() const override { return dim_; }
  int native_input() const override { return 0; }
  uint64_t state_checksum() const override { return 0; }

 protected:
  Tensor do_encode(const Tensor& image) override { return Tensor::constant(fn_(image.value())); }

 private:
  int dim_;
  std::function<Array(const Array&)> fn_;
};

class LambdaTextBackend : public TextBackend {
 public:
  LambdaTextBackend(int dim, std::function<Array(const std::string&)> fn)
      : dim_(dim), fn_(std::move(fn)) {}
  int output_dim() const override { return dim_; }

 protected:
  Tensor do_encode(const std::string& text) override { return Tensor::constant(fn_(text)); }

 private:
  int dim_;
  std::function<Array(const std::string&)> fn_;
};

// ---------------------------------------------------------------------------

/// Lazily constructed set of frozen perception backends, one per role.
/// Training and evaluation identity encoders must differ so the model never
/// grades itself with the encoder it trained against.
class BackendRegistry {
 public:
  explicit BackendRegistry(std::map<std::string, BackendSpec> specs);

  ImageBackend& identity() { return image_backend("identity"); }
  ImageBackend& eval_identity();
  ImageBackend& clip_image() { return image_backend("clip_image"); }
  TextBackend& clip_text();
  PerceptualBackend& perceptual();
  ImageBackend& pose() { return image_backend("pose"); }
  ImageBackend& expression() { return image_backend("expression"); }
  ImageBackend& fid() { return image_backend("fid"); }

  bool has_role(const std::string& role) const { return specs_.count(role) > 0; }
  uint64_t frozen_checksum() const;  // over every instantiated backend
  uint64_t clip_calls() const;       // image + text
  void reset_call_counters();

  static std::map<std::string, BackendSpec> default_specs();

 private:
  ImageBackend& image_backend(const std::string& role);
  const BackendSpec& spec_for(const std::string& role) const;

  std::map<std::string, BackendSpec> specs_;
  std::map<std::string, std::unique_ptr<ImageBackend>> images_;
  std::unique_ptr<TextBackend> text_;
  std::unique_ptr<PerceptualBackend> perceptual_;
};

}  // namespace fsw::enc

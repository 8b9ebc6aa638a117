#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fsw/core/rng.hpp"
#include "fsw/core/tensor.hpp"
#include "fsw/nn/modules.hpp"

namespace fsw::fusion {

/// Floor applied to per-channel standard deviations so constant channels
/// stay well-defined.
constexpr double kStdFloor = 1e-5;

/// Per-sample, per-channel spatial statistics of [N,C,H,W]: mean and
/// population standard deviation (divide by H·W), both [N,C,1,1]. The std is
/// floored at kStdFloor.
std::pair<Tensor, Tensor> channel_stats(const Tensor& x);

/// Re-styles `content` so its per-channel statistics match `style`:
/// sigma(style) * (content - mu(content)) / sigma(content) + mu(style).
/// Content and style must agree on batch and channel count; spatial sizes
/// may differ.
Tensor adain(const Tensor& content, const Tensor& style);

struct FusionConfig {
  int num_blocks = 6;
  std::vector<int> channels;  // one entry per block; blocks preserve shape
  std::string injection_mode = "caii";  // "caii" | "unidirectional"
  int identity_dim = 512;

  bool unidirectional() const { return injection_mode == "unidirectional"; }
  void validate() const;
};

/// One identity-injection block. The forward pass normalizes the incoming
/// target feature, re-styles it with the mapped identity code, refines it
/// with a 3x3 convolution, and injects the (optionally target-adapted)
/// identity feature multiplicatively plus additively.
class InjectionBlock : public nn::Module {
 public:
  InjectionBlock(int channels, int identity_dim, Rng& rng);

  /// z_t [N,C,H,W], c_s [N,identity_dim]. `unidirectional` skips the
  /// style-side adaptation and injects the mapped code directly.
  Tensor forward(const Tensor& z_t, const Tensor& c_s, bool unidirectional);

  /// The block-owned projection of the identity code to a spatially
  /// constant [N,C,H,W] style feature.
  Tensor map_identity(const Tensor& c_s, int h, int w) const;

  int channels() const { return channels_; }
  nn::Conv2d& conv() { return *conv_; }
  nn::BatchNorm2d& bn() { return *bn_; }
  nn::Linear& phi() { return *phi_; }

 private:
  std::unique_ptr<nn::BatchNorm2d> bn_;
  std::unique_ptr<nn::Linear> phi_;
  std::unique_ptr<nn::Conv2d> conv_;
  int channels_;
  int identity_dim_;
};

/// Stack of injection blocks applied sequentially at the bottleneck.
class FusionEncoder : public nn::Module {
 public:
  FusionEncoder(const FusionConfig& cfg, Rng& rng);
  Tensor forward(const Tensor& z_t, const Tensor& c_s);
  InjectionBlock& block(int index);  // IndexOutOfRange on bad index
  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  const FusionConfig& config() const { return cfg_; }

 private:
  FusionConfig cfg_;
  std::vector<std::unique_ptr<InjectionBlock>> blocks_;
};

}  // namespace fsw::fusion

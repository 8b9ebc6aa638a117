#pragma once

#include <memory>
#include <vector>

#include "fsw/encoders/backends.hpp"
#include "fsw/fusion/fusion.hpp"
#include "fsw/nn/modules.hpp"

namespace fsw::gan {

struct GeneratorConfig {
  int input_resolution = 256;
  int downsample_stages = 4;
  int base_channels = 64;
  int max_channels = 512;
  bool use_skip_connections = false;

  int stage_channels(int i) const;  // channels after encoder stage i
  int bottleneck_resolution() const;
  int bottleneck_channels() const { return stage_channels(downsample_stages - 1); }
  void validate() const;
};

/// Strided-convolution encoder producing the bottleneck target feature.
class TargetEncoder : public nn::Module {
 public:
  TargetEncoder(const GeneratorConfig& cfg, Rng& rng);
  Tensor forward(const Tensor& x) const;
  /// Per-stage activations; back() is the bottleneck.
  std::vector<Tensor> forward_with_taps(const Tensor& x) const;

 private:
  struct Stage {
    std::unique_ptr<nn::Conv2d> conv;
    std::unique_ptr<nn::InstanceNorm2d> norm;
  };
  std::vector<Stage> stages_;
  GeneratorConfig cfg_;
};

/// Transposed-convolution decoder from the bottleneck back to an RGB image
/// bounded to [-1,1] by the final tanh.
class Decoder : public nn::Module {
 public:
  Decoder(const GeneratorConfig& cfg, Rng& rng);
  /// skips, when given, are the encoder taps (added stage-wise).
  Tensor forward(const Tensor& z, const std::vector<Tensor>* skips) const;

 private:
  struct Stage {
    std::unique_ptr<nn::ConvTranspose2d> conv;
    std::unique_ptr<nn::InstanceNorm2d> norm;
  };
  std::vector<Stage> stages_;
  std::unique_ptr<nn::Conv2d> to_rgb_;
  GeneratorConfig cfg_;
};

/// Fully convolutional patch critic; scores overlapping receptive fields
/// rather than whole images.
class PatchDiscriminator : public nn::Module {
 public:
  PatchDiscriminator(int base_channels, int strided_stages, Rng& rng);
  Tensor forward(const Tensor& x) const;  // [N,1,h,w] logits
  /// Output size from convolution arithmetic, for shape assertions.
  static std::pair<int, int> logits_size(int input_h, int input_w, int strided_stages);

 private:
  struct Stage {
    std::unique_ptr<nn::Conv2d> conv;
    std::unique_ptr<nn::InstanceNorm2d> norm;  // absent on the first stage
  };
  std::vector<Stage> stages_;
  std::unique_ptr<nn::Conv2d> head_;
};

/// Target encoder + identity fusion + decoder. The identity encoder is a
/// frozen backend passed per call so the model itself carries no frozen
/// state.
class SwapModel : public nn::Module {
 public:
  SwapModel(const GeneratorConfig& gcfg, const fusion::FusionConfig& fcfg, uint64_t seed);

  Tensor encode_target(const Tensor& x_t) const;
  Tensor generate(const Tensor& z_bar, const std::vector<Tensor>* skips = nullptr) const;

  /// x_s [N,3,112,112], x_t [N,3,R,R] -> swapped face [N,3,R,R] in [-1,1].
  Tensor swap(const Tensor& x_s, const Tensor& x_t, enc::ImageBackend& identity);
  /// Re-swap: the swapped image becomes the target, the original target
  /// (downsampled) becomes the source.
  Tensor reswap_cycle(const Tensor& x_ts, const Tensor& x_t, enc::ImageBackend& identity);

  fusion::FusionEncoder& fusion() { return *fusion_; }
  TargetEncoder& target_encoder() { return *encoder_; }
  Decoder& decoder() { return *decoder_; }
  const GeneratorConfig& config() const { return gcfg_; }

 private:
  GeneratorConfig gcfg_;
  std::unique_ptr<TargetEncoder> encoder_;
  std::unique_ptr<fusion::FusionEncoder> fusion_;
  std::unique_ptr<Decoder> decoder_;
};

}  // namespace fsw::gan

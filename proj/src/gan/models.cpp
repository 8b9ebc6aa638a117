#include "fsw/gan/models.hpp"

#include <algorithm>

#include "fsw/errors.hpp"

namespace fsw::gan {

int GeneratorConfig::stage_channels(int i) const {
  return std::min(base_channels << i, max_channels);
}

int GeneratorConfig::bottleneck_resolution() const {
  return input_resolution >> downsample_stages;
}

void GeneratorConfig::validate() const {
  if (input_resolution < 8) throw ConfigMismatch("generator.input_resolution too small");
  if (downsample_stages < 1) throw ConfigMismatch("generator.downsample_stages must be >= 1");
  if ((input_resolution % (1 << downsample_stages)) != 0)
    throw ConfigMismatch("generator.input_resolution must be divisible by 2^downsample_stages");
  if (bottleneck_resolution() < 4)
    throw ConfigMismatch("generator bottleneck must be at least 4x4; got " +
                         std::to_string(bottleneck_resolution()));
  if (base_channels < 1) throw ConfigMismatch("generator.base_channels must be >= 1");
}

// ---- TargetEncoder -----------------------------------------------------------

TargetEncoder::TargetEncoder(const GeneratorConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  int cin = 3;
  for (int i = 0; i < cfg.downsample_stages; ++i) {
    const int cout = cfg.stage_channels(i);
    Stage s;
    s.conv = std::make_unique<nn::Conv2d>(cin, cout, 4, 2, 1, /*bias=*/true, rng);
    s.norm = std::make_unique<nn::InstanceNorm2d>(cout);
    add_child("stage" + std::to_string(i) + ".conv", *s.conv);
    add_child("stage" + std::to_string(i) + ".norm", *s.norm);
    stages_.push_back(std::move(s));
    cin = cout;
  }
}

std::vector<Tensor> TargetEncoder::forward_with_taps(const Tensor& x) const {
  if (x.ndim() != 4 || x.dim(1) != 3 || x.dim(2) != cfg_.input_resolution || x.dim(3) != cfg_.input_resolution)
    throw ShapeMismatch("target encoder expects [N,3," + std::to_string(cfg_.input_resolution) + "," +
                        std::to_string(cfg_.input_resolution) + "], got " + x.value().shape_str());
  std::vector<Tensor> taps;
  Tensor h = x;
  for (const auto& s : stages_) {
    h = relu(s.norm->forward(s.conv->forward(h)));
    taps.push_back(h);
  }
  return taps;
}

Tensor TargetEncoder::forward(const Tensor& x) const { return forward_with_taps(x).back(); }

// ---- Decoder ------------------------------------------------------------------

Decoder::Decoder(const GeneratorConfig& cfg, Rng& rng) : cfg_(cfg) {
  const int stages = cfg.downsample_stages;
  for (int j = 0; j < stages; ++j) {
    const int cin = cfg.stage_channels(stages - 1 - j);
    const int cout = (stages - 2 - j >= 0) ? cfg.stage_channels(stages - 2 - j) : cfg.base_channels;
    Stage s;
    s.conv = std::make_unique<nn::ConvTranspose2d>(cin, cout, 4, 2, 1, /*bias=*/true, rng);
    s.norm = std::make_unique<nn::InstanceNorm2d>(cout);
    add_child("stage" + std::to_string(j) + ".conv", *s.conv);
    add_child("stage" + std::to_string(j) + ".norm", *s.norm);
    stages_.push_back(std::move(s));
  }
  to_rgb_ = std::make_unique<nn::Conv2d>(cfg.base_channels, 3, 3, 1, 1, /*bias=*/true, rng);
  add_child("to_rgb", *to_rgb_);
}

Tensor Decoder::forward(const Tensor& z, const std::vector<Tensor>* skips) const {
  const int r = cfg_.bottleneck_resolution();
  if (z.ndim() != 4 || z.dim(1) != cfg_.bottleneck_channels() || z.dim(2) != r || z.dim(3) != r)
    throw ShapeMismatch("decoder expects bottleneck [N," + std::to_string(cfg_.bottleneck_channels()) + "," +
                        std::to_string(r) + "," + std::to_string(r) + "], got " + z.value().shape_str());
  Tensor h = z;
  const int stages = static_cast<int>(stages_.size());
  for (int j = 0; j < stages; ++j) {
    h = relu(stages_[static_cast<size_t>(j)].norm->forward(stages_[static_cast<size_t>(j)].conv->forward(h)));
    if (skips && stages - 2 - j >= 0) h = add(h, (*skips)[static_cast<size_t>(stages - 2 - j)]);
  }
  return fsw::tanh(to_rgb_->forward(h));
}

// ---- PatchDiscriminator ----------------------------------------------------------

PatchDiscriminator::PatchDiscriminator(int base_channels, int strided_stages, Rng& rng) {
  int cin = 3;
  int ch = base_channels;
  for (int i = 0; i < strided_stages; ++i) {
    Stage s;
    s.conv = std::make_unique<nn::Conv2d>(cin, ch, 4, 2, 1, /*bias=*/true, rng);
    add_child("stage" + std::to_string(i) + ".conv", *s.conv);
    if (i > 0) {
      s.norm = std::make_unique<nn::InstanceNorm2d>(ch);
      add_child("stage" + std::to_string(i) + ".norm", *s.norm);
    }
    stages_.push_back(std::move(s));
    cin = ch;
    ch = std::min(ch * 2, 512);
  }
  // one stride-1 widening stage, then the 1-channel head (pix2pix layout)
  Stage s;
  s.conv = std::make_unique<nn::Conv2d>(cin, ch, 4, 1, 1, /*bias=*/true, rng);
  s.norm = std::make_unique<nn::InstanceNorm2d>(ch);
  add_child("wide.conv", *s.conv);
  add_child("wide.norm", *s.norm);
  stages_.push_back(std::move(s));
  head_ = std::make_unique<nn::Conv2d>(ch, 1, 4, 1, 1, /*bias=*/true, rng);
  add_child("head", *head_);
}

Tensor PatchDiscriminator::forward(const Tensor& x) const {
  if (x.ndim() != 4 || x.dim(1) != 3)
    throw ShapeMismatch("discriminator expects [N,3,H,W], got " + x.value().shape_str());
  Tensor h = x;
  for (const auto& s : stages_) {
    h = s.conv->forward(h);
    if (s.norm) h = s.norm->forward(h);
    h = leaky_relu(h, 0.2);
  }
  return head_->forward(h);
}

std::pair<int, int> PatchDiscriminator::logits_size(int input_h, int input_w, int strided_stages) {
  auto conv_out = [](int n, int k, int s, int p) { return (n + 2 * p - k) / s + 1; };
  int h = input_h, w = input_w;
  for (int i = 0; i < strided_stages; ++i) {
    h = conv_out(h, 4, 2, 1);
    w = conv_out(w, 4, 2, 1);
  }
  h = conv_out(h, 4, 1, 1);
  w = conv_out(w, 4, 1, 1);
  h = conv_out(h, 4, 1, 1);
  w = conv_out(w, 4, 1, 1);
  return {h, w};
}

// ---- SwapModel ----------------------------------------------------------------------

SwapModel::SwapModel(const GeneratorConfig& gcfg, const fusion::FusionConfig& fcfg, uint64_t seed) : gcfg_(gcfg) {
  gcfg_.validate();
  if (!fcfg.channels.empty() && fcfg.channels.front() != gcfg.bottleneck_channels())
    throw ConfigMismatch("fusion.channels (" + std::to_string(fcfg.channels.front()) +
                         ") must equal the generator bottleneck channels (" +
                         std::to_string(gcfg.bottleneck_channels()) + ")");
  Rng rng(seed);
  encoder_ = std::make_unique<TargetEncoder>(gcfg, rng);
  fusion_ = std::make_unique<fusion::FusionEncoder>(fcfg, rng);
  decoder_ = std::make_unique<Decoder>(gcfg, rng);
  add_child("enc", *encoder_);
  add_child("fusion", *fusion_);
  add_child("dec", *decoder_);
}

Tensor SwapModel::encode_target(const Tensor& x_t) const { return encoder_->forward(x_t); }

Tensor SwapModel::generate(const Tensor& z_bar, const std::vector<Tensor>* skips) const {
  return decoder_->forward(z_bar, skips);
}

Tensor SwapModel::swap(const Tensor& x_s, const Tensor& x_t, enc::ImageBackend& identity) {
  Tensor c_s = identity.encode(x_s);
  std::vector<Tensor> taps = encoder_->forward_with_taps(x_t);
  Tensor fused = fusion_->forward(taps.back(), c_s);
  return decoder_->forward(fused, gcfg_.use_skip_connections ? &taps : nullptr);
}

Tensor SwapModel::reswap_cycle(const Tensor& x_ts, const Tensor& x_t, enc::ImageBackend& identity) {
  Tensor src = resize_bilinear(x_t, 112, 112);
  return swap(src, x_ts, identity);
}

}  // namespace fsw::gan

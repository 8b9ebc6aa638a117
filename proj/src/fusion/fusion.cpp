#include "fsw/fusion/fusion.hpp"

#include "fsw/errors.hpp"

namespace fsw::fusion {

std::pair<Tensor, Tensor> channel_stats(const Tensor& x) {
  if (x.ndim() != 4) throw ShapeMismatch("channel_stats expects [N,C,H,W], got " + x.value().shape_str());
  Tensor m = mean(x, {2, 3}, true);
  Tensor var = mean(square(sub(x, m)), {2, 3}, true);
  Tensor sd = clamp_min(sqrt(var), kStdFloor);
  return {m, sd};
}

Tensor adain(const Tensor& content, const Tensor& style) {
  if (content.ndim() != 4 || style.ndim() != 4)
    throw ShapeMismatch("adain expects [N,C,H,W] operands");
  if (content.dim(1) != style.dim(1))
    throw ChannelMismatch("adain channel mismatch: " + content.value().shape_str() + " vs " +
                          style.value().shape_str());
  if (content.dim(0) != style.dim(0))
    throw ShapeMismatch("adain batch mismatch");
  auto [mc, sc] = channel_stats(content);
  auto [ms, ss] = channel_stats(style);
  return add(mul(div(sub(content, mc), sc), ss), ms);
}

void FusionConfig::validate() const {
  if (num_blocks < 1) throw ConfigMismatch("fusion.num_blocks must be >= 1");
  if (static_cast<int>(channels.size()) != num_blocks)
    throw ConfigMismatch("fusion.channels must list one entry per block");
  for (int c : channels)
    if (c != channels.front())
      throw ConfigMismatch("injection blocks preserve shape; all fusion.channels entries must match");
  if (injection_mode != "caii" && injection_mode != "unidirectional")
    throw ConfigMismatch("fusion.injection_mode must be 'caii' or 'unidirectional', got '" + injection_mode + "'");
}

InjectionBlock::InjectionBlock(int channels, int identity_dim, Rng& rng)
    : channels_(channels), identity_dim_(identity_dim) {
  bn_ = std::make_unique<nn::BatchNorm2d>(channels);
  phi_ = std::make_unique<nn::Linear>(identity_dim, channels, /*bias=*/true, rng);
  conv_ = std::make_unique<nn::Conv2d>(channels, channels, 3, 1, 1, /*bias=*/true, rng);
  add_child("bn", *bn_);
  add_child("phi", *phi_);
  add_child("conv", *conv_);
}

Tensor InjectionBlock::map_identity(const Tensor& c_s, int h, int w) const {
  if (c_s.ndim() != 2 || c_s.dim(1) != identity_dim_)
    throw ShapeMismatch("identity code must be [N," + std::to_string(identity_dim_) + "], got " +
                        c_s.value().shape_str());
  Tensor v = phi_->forward(c_s);
  return expand_hw(reshape(v, {c_s.dim(0), channels_, 1, 1}), h, w);
}

Tensor InjectionBlock::forward(const Tensor& z_t, const Tensor& c_s, bool unidirectional) {
  if (z_t.ndim() != 4 || z_t.dim(1) != channels_)
    throw ShapeMismatch("injection block expects [N," + std::to_string(channels_) + ",H,W], got " +
                        z_t.value().shape_str());
  if (z_t.dim(0) != c_s.dim(0)) throw ShapeMismatch("batch mismatch between target feature and identity code");
  // the incoming target feature is batch-normalized once; both branches see it
  Tensor z = bn_->forward(z_t);
  Tensor style = map_identity(c_s, z.dim(2), z.dim(3));
  Tensor zt_hat = relu(conv_->forward(adain(z, style)));
  Tensor zs_hat = unidirectional ? style : add(adain(style, z), style);
  return add(mul(zt_hat, zs_hat), zs_hat);
}

FusionEncoder::FusionEncoder(const FusionConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  for (int i = 0; i < cfg_.num_blocks; ++i) {
    blocks_.push_back(std::make_unique<InjectionBlock>(cfg_.channels[static_cast<size_t>(i)], cfg_.identity_dim, rng));
    add_child("block" + std::to_string(i), *blocks_.back());
  }
}

Tensor FusionEncoder::forward(const Tensor& z_t, const Tensor& c_s) {
  Tensor z = z_t;
  const bool uni = cfg_.unidirectional();
  for (auto& b : blocks_) z = b->forward(z, c_s, uni);
  return z;
}

InjectionBlock& FusionEncoder::block(int index) {
  if (index < 0 || index >= num_blocks())
    throw IndexOutOfRange("block index " + std::to_string(index) + " out of range [0," +
                          std::to_string(num_blocks()) + ")");
  return *blocks_[static_cast<size_t>(index)];
}

}  // namespace fsw::fusion

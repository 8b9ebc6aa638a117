#include "fsw/nn/modules.hpp"

#include <cmath>
#include <cstring>

#include "fsw/core/hash.hpp"
#include "fsw/errors.hpp"

namespace fsw::nn {

namespace {

Array uniform_init(std::vector<int> shape, double bound, Rng& rng) {
  Array a(std::move(shape));
  for (int64_t i = 0; i < a.numel(); ++i) a[i] = rng.uniform(-bound, bound);
  return a;
}

}  // namespace

std::vector<NamedTensor> Module::named_parameters(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  for (const auto& [name, t] : params_) out.push_back({prefix + name, t});
  for (const auto& [name, child] : children_) {
    auto sub = child->named_parameters(prefix + name + ".");
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

std::vector<NamedTensor> Module::named_buffers(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  for (const auto& [name, t] : buffers_) out.push_back({prefix + name, t});
  for (const auto& [name, child] : children_) {
    auto sub = child->named_buffers(prefix + name + ".");
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

std::vector<Tensor> Module::parameters() const {
  std::vector<Tensor> out;
  for (const auto& nt : named_parameters()) out.push_back(nt.tensor);
  return out;
}

void Module::set_training(bool on) {
  training_ = on;
  for (auto& [name, child] : children_) child->set_training(on);
}

void Module::zero_grad() {
  for (auto& nt : named_parameters()) nt.tensor.zero_grad();
}

uint64_t Module::state_checksum() const {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (const auto& nt : named_parameters()) {
    h = fnv1a64(nt.name.data(), nt.name.size(), h);
    h = fnv1a64(nt.tensor.value().data(), sizeof(double) * static_cast<size_t>(nt.tensor.numel()), h);
  }
  for (const auto& nt : named_buffers()) {
    h = fnv1a64(nt.name.data(), nt.name.size(), h);
    h = fnv1a64(nt.tensor.value().data(), sizeof(double) * static_cast<size_t>(nt.tensor.numel()), h);
  }
  return h;
}

void Module::collect_state(std::vector<std::pair<std::string, const Array*>>& out, const std::string& prefix) const {
  for (const auto& nt : named_parameters(prefix)) out.emplace_back(nt.name, &nt.tensor.value());
  for (const auto& nt : named_buffers(prefix)) out.emplace_back(nt.name, &nt.tensor.value());
}

void Module::load_state(const std::map<std::string, Array>& state, const std::string& prefix) {
  auto load_one = [&](NamedTensor nt) {
    auto it = state.find(nt.name);
    if (it == state.end()) throw ConfigMismatch("missing tensor in state: " + nt.name);
    if (it->second.shape() != nt.tensor.shape())
      throw ShapeMismatch("state tensor " + nt.name + " has shape " + it->second.shape_str() + ", expected " +
                          nt.tensor.value().shape_str());
    nt.tensor.mutable_value() = it->second;
  };
  for (auto& nt : named_parameters(prefix)) load_one(nt);
  for (auto& nt : named_buffers(prefix)) load_one(nt);
}

Tensor Module::add_parameter(const std::string& name, Array init, bool trainable) {
  Tensor t = trainable ? Tensor::param(std::move(init)) : Tensor::constant(std::move(init));
  params_.emplace_back(name, t);
  return t;
}

Tensor Module::add_buffer(const std::string& name, Array init) {
  Tensor t = Tensor::constant(std::move(init));
  buffers_.emplace_back(name, t);
  return t;
}

void Module::add_child(const std::string& name, Module& m) { children_.emplace_back(name, &m); }

// ---- Conv2d -------------------------------------------------------------------

Conv2d::Conv2d(int cin, int cout, int k, int stride, int pad, bool bias, Rng& rng, bool trainable)
    : stride_(stride), pad_(pad) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin) * k * k);
  weight_ = add_parameter("weight", uniform_init({cout, cin, k, k}, bound, rng), trainable);
  if (bias) bias_ = add_parameter("bias", uniform_init({cout}, bound, rng), trainable);
}

Tensor Conv2d::forward(const Tensor& x) const { return conv2d(x, weight_, bias_, stride_, pad_); }

ConvTranspose2d::ConvTranspose2d(int cin, int cout, int k, int stride, int pad, bool bias, Rng& rng, bool trainable)
    : stride_(stride), pad_(pad) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin) * k * k);
  weight_ = add_parameter("weight", uniform_init({cin, cout, k, k}, bound, rng), trainable);
  if (bias) bias_ = add_parameter("bias", uniform_init({cout}, bound, rng), trainable);
}

Tensor ConvTranspose2d::forward(const Tensor& x) const {
  return conv_transpose2d(x, weight_, bias_, stride_, pad_);
}

Linear::Linear(int in, int out, bool bias, Rng& rng, bool trainable) : in_(in), out_(out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = add_parameter("weight", uniform_init({out, in}, bound, rng), trainable);
  if (bias) bias_ = add_parameter("bias", uniform_init({out}, bound, rng), trainable);
}

Tensor Linear::forward(const Tensor& x) const {
  if (x.ndim() != 2 || x.dim(1) != in_)
    throw ShapeMismatch("Linear expects [N," + std::to_string(in_) + "], got " + x.value().shape_str());
  Tensor y = matmul(x, weight_, false, true);
  if (bias_.defined()) y = add(y, reshape(bias_, {1, out_}));
  return y;
}

// ---- normalization --------------------------------------------------------------

BatchNorm2d::BatchNorm2d(int channels, double eps, double momentum)
    : channels_(channels), eps_(eps), momentum_(momentum) {
  gamma_ = add_parameter("gamma", Array({channels}, 1.0));
  beta_ = add_parameter("beta", Array({channels}, 0.0));
  running_mean_ = add_buffer("running_mean", Array({channels}, 0.0));
  running_var_ = add_buffer("running_var", Array({channels}, 1.0));
}

Tensor BatchNorm2d::forward(const Tensor& x) {
  if (x.ndim() != 4 || x.dim(1) != channels_)
    throw ChannelMismatch("BatchNorm2d expects [N," + std::to_string(channels_) + ",H,W], got " +
                          x.value().shape_str());
  const Tensor g4 = reshape(gamma_, {1, channels_, 1, 1});
  const Tensor b4 = reshape(beta_, {1, channels_, 1, 1});
  if (training()) {
    Tensor m = mean(x, {0, 2, 3}, true);
    Tensor xc = sub(x, m);
    Tensor v = mean(square(xc), {0, 2, 3}, true);  // population variance
    for (int c = 0; c < channels_; ++c) {
      auto& rm = running_mean_.mutable_value();
      auto& rv = running_var_.mutable_value();
      rm[c] = (1.0 - momentum_) * rm[c] + momentum_ * m.value()[c];
      rv[c] = (1.0 - momentum_) * rv[c] + momentum_ * v.value()[c];
    }
    Tensor xhat = div(xc, sqrt(add(v, eps_)));
    return add(mul(xhat, g4), b4);
  }
  Tensor rm = reshape(running_mean_, {1, channels_, 1, 1});
  Tensor rv = reshape(running_var_, {1, channels_, 1, 1});
  Tensor xhat = div(sub(x, rm), sqrt(add(rv, eps_)));
  return add(mul(xhat, g4), b4);
}

InstanceNorm2d::InstanceNorm2d(int channels, double eps) : channels_(channels), eps_(eps) {
  gamma_ = add_parameter("gamma", Array({channels}, 1.0));
  beta_ = add_parameter("beta", Array({channels}, 0.0));
}

Tensor InstanceNorm2d::forward(const Tensor& x) const {
  if (x.ndim() != 4 || x.dim(1) != channels_)
    throw ChannelMismatch("InstanceNorm2d expects [N," + std::to_string(channels_) + ",H,W], got " +
                          x.value().shape_str());
  Tensor m = mean(x, {2, 3}, true);
  Tensor xc = sub(x, m);
  Tensor v = mean(square(xc), {2, 3}, true);
  Tensor xhat = div(xc, sqrt(add(v, eps_)));
  return add(mul(xhat, reshape(gamma_, {1, channels_, 1, 1})), reshape(beta_, {1, channels_, 1, 1}));
}

}  // namespace fsw::nn

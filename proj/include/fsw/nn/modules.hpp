#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fsw/core/rng.hpp"
#include "fsw/core/tensor.hpp"

namespace fsw::nn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Base class with a parameter/buffer registry. Handles returned by
/// add_parameter share storage with the registry, so optimizers and
/// checkpoint loads see the same nodes the forward pass uses.
class Module {
 public:
  Module() = default;
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  std::vector<NamedTensor> named_parameters(const std::string& prefix = "") const;
  std::vector<NamedTensor> named_buffers(const std::string& prefix = "") const;
  std::vector<Tensor> parameters() const;

  void set_training(bool on);
  bool training() const { return training_; }
  void zero_grad();

  /// FNV-1a over the raw bytes of all parameter and buffer values; used by
  /// the frozen-encoder and no-leakage invariants.
  uint64_t state_checksum() const;

  void collect_state(std::vector<std::pair<std::string, const Array*>>& out, const std::string& prefix = "") const;
  void load_state(const std::map<std::string, Array>& state, const std::string& prefix = "");

 protected:
  Tensor add_parameter(const std::string& name, Array init, bool trainable = true);
  Tensor add_buffer(const std::string& name, Array init);
  void add_child(const std::string& name, Module& m);

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::pair<std::string, Tensor>> buffers_;
  std::vector<std::pair<std::string, Module*>> children_;
  bool training_ = true;
};

class Conv2d : public Module {
 public:
  Conv2d(int cin, int cout, int k, int stride, int pad, bool bias, Rng& rng, bool trainable = true);
  Tensor forward(const Tensor& x) const;
  const Tensor& weight() const { return weight_; }

 private:
  Tensor weight_, bias_;
  int stride_, pad_;

 public:
  // test hook: zeroing a conv turns the block branch off
  Tensor weight_handle() { return weight_; }
  Tensor bias_handle() { return bias_; }
};

class ConvTranspose2d : public Module {
 public:
  ConvTranspose2d(int cin, int cout, int k, int stride, int pad, bool bias, Rng& rng, bool trainable = true);
  Tensor forward(const Tensor& x) const;

 private:
  Tensor weight_, bias_;
  int stride_, pad_;
};

class Linear : public Module {
 public:
  Linear(int in, int out, bool bias, Rng& rng, bool trainable = true);
  Tensor forward(const Tensor& x) const;  // x [N,in] -> [N,out]
  int in_features() const { return in_; }
  int out_features() const { return out_; }
  Tensor weight_handle() { return weight_; }
  Tensor bias_handle() { return bias_; }

 private:
  Tensor weight_, bias_;  // weight [out,in]
  int in_, out_;
};

/// Batch normalization over (N,H,W) per channel. Training mode normalizes
/// with batch statistics and accumulates running estimates; eval mode uses
/// the running estimates, which keeps single-image inference deterministic.
class BatchNorm2d : public Module {
 public:
  explicit BatchNorm2d(int channels, double eps = 1e-5, double momentum = 0.1);
  Tensor forward(const Tensor& x);
  Tensor gamma_handle() { return gamma_; }
  Tensor beta_handle() { return beta_; }

 private:
  Tensor gamma_, beta_, running_mean_, running_var_;
  int channels_;
  double eps_, momentum_;
};

class InstanceNorm2d : public Module {
 public:
  explicit InstanceNorm2d(int channels, double eps = 1e-5);
  Tensor forward(const Tensor& x) const;

 private:
  Tensor gamma_, beta_;
  int channels_;
  double eps_;
};

}  // namespace fsw::nn

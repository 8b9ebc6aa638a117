#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fsw/core/tensor.hpp"

namespace fsw::nn {

class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  int64_t step_count() const { return t_; }

  void zero_grad();
  /// Applies one update from the accumulated gradients. Parameters with no
  /// gradient this step keep their state untouched. clip_norm > 0 rescales
  /// the global gradient norm first.
  void step(double clip_norm = 0.0);

  void collect_state(std::vector<std::pair<std::string, const Array*>>& out, const std::string& prefix) const;
  void load_state(const std::map<std::string, Array>& state, const std::string& prefix);

 private:
  std::vector<Tensor> params_;
  std::vector<Array> m_, v_;
  Array t_arr_;  // step count, serialized alongside moments
  double lr_, b1_, b2_, eps_;
  int64_t t_ = 0;
};

}  // namespace fsw::nn

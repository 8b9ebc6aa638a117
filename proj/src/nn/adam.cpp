#include "fsw/nn/adam.hpp"

#include <cmath>

#include "fsw/errors.hpp"

namespace fsw::nn {

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), t_arr_({1}, 0.0), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step(double clip_norm) {
  double scale = 1.0;
  if (clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& p : params_)
      if (p.has_grad())
        for (int64_t i = 0; i < p.numel(); ++i) sq += p.grad()[i] * p.grad()[i];
    const double norm = std::sqrt(sq);
    if (norm > clip_norm) scale = clip_norm / norm;
  }
  ++t_;
  t_arr_[0] = static_cast<double>(t_);
  const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (size_t j = 0; j < params_.size(); ++j) {
    auto& p = params_[j];
    if (!p.has_grad()) continue;
    const Array& g = p.grad();
    Array& val = p.mutable_value();
    Array& m = m_[j];
    Array& v = v_[j];
    for (int64_t i = 0; i < val.numel(); ++i) {
      const double gi = g[i] * scale;
      m[i] = b1_ * m[i] + (1.0 - b1_) * gi;
      v[i] = b2_ * v[i] + (1.0 - b2_) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      val[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::collect_state(std::vector<std::pair<std::string, const Array*>>& out, const std::string& prefix) const {
  out.emplace_back(prefix + "t", &t_arr_);
  for (size_t j = 0; j < params_.size(); ++j) {
    out.emplace_back(prefix + "m." + std::to_string(j), &m_[j]);
    out.emplace_back(prefix + "v." + std::to_string(j), &v_[j]);
  }
}

void Adam::load_state(const std::map<std::string, Array>& state, const std::string& prefix) {
  auto get = [&](const std::string& name) -> const Array& {
    auto it = state.find(name);
    if (it == state.end()) throw ConfigMismatch("optimizer state missing tensor: " + name);
    return it->second;
  };
  t_arr_ = get(prefix + "t");
  t_ = static_cast<int64_t>(t_arr_[0]);
  for (size_t j = 0; j < params_.size(); ++j) {
    const Array& m = get(prefix + "m." + std::to_string(j));
    const Array& v = get(prefix + "v." + std::to_string(j));
    if (m.shape() != params_[j].shape() || v.shape() != params_[j].shape())
      throw ShapeMismatch("optimizer state shape mismatch at index " + std::to_string(j));
    m_[j] = m;
    v_[j] = v;
  }
}

}  // namespace fsw::nn

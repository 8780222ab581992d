#include "tasd/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace tasd {

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr >= 0.0)) throw std::invalid_argument("adam: learning rate must be >= 0");
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_values();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

}  // namespace tasd

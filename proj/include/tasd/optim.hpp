#pragma once

#include <vector>

#include "tasd/tensor.hpp"

namespace tasd {

/// Adam with bias correction. Parameters whose gradient was never
/// materialized in a step are left untouched.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  void zero_grad();
  void step();
  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

}  // namespace tasd

#pragma once

#include <cmath>

#include "driverep/core/errors.hpp"
#include "driverep/nn/params.hpp"

namespace driverep {

// Adam over one flat parameter vector.
template <typename S>
class Adam {
 public:
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  Adam() = default;
  explicit Adam(double learning_rate) : lr(learning_rate) {}

  void register_params(Eigen::Index n, bool frozen = false) {
    if (frozen) {
      throw ContractError("optimizer: refusing frozen parameters");
    }
    m_ = VecX<S>::Zero(n);
    v_ = VecX<S>::Zero(n);
    t_ = 0;
  }

  bool registered() const { return m_.size() > 0; }

  void step(VecX<S>& theta, const VecX<S>& grad) {
    if (theta.size() != m_.size() || grad.size() != m_.size()) {
      throw ContractError("adam: size mismatch");
    }
    ++t_;
    m_ = S(beta1) * m_ + S(1.0 - beta1) * grad;
    v_.array() =
        S(beta2) * v_.array() + S(1.0 - beta2) * grad.array().square();
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    const S scale = static_cast<S>(lr / bc1);
    theta.array() -=
        scale * m_.array() /
        ((v_.array() / S(bc2)).sqrt() + S(eps));
  }

 private:
  VecX<S> m_, v_;
  long t_ = 0;
};

// L1 + L2 penalties on weight blocks only (biases are exempt). Adds the
// penalty gradient in place and returns the penalty value.
template <typename S>
double add_weight_regularization(const ParamLayout& layout,
                                 const VecX<S>& theta, VecX<S>& grad,
                                 double l1, double l2) {
  if (l1 == 0.0 && l2 == 0.0) return 0.0;
  double penalty = 0.0;
  for (const auto& b : layout.blocks()) {
    if (b.fan_in <= 0) continue;
    const auto seg = theta.segment(b.offset, b.size());
    penalty += l1 * seg.template lpNorm<1>() + l2 * seg.squaredNorm();
    grad.segment(b.offset, b.size()).array() +=
        S(l1) * seg.array().sign() + S(2.0 * l2) * seg.array();
  }
  return penalty;
}

}  // namespace driverep

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "driverep/core/errors.hpp"
#include "driverep/core/kv_config.hpp"
#include "driverep/nn/tensor.hpp"

namespace driverep {

struct PpoConfig {
  double gamma = 0.9;
  double lambda = 0.95;
  double clip_eps = 0.1;
  double vf_clip = 10.0;
  double vf_coef = 1.0;
  double kl_coef_init = 0.3;
  double kl_target = 0.03;
  int sgd_iters = 3;
  int minibatch = 128;
  double lr = 2e-5;
  double entropy_coef = 0.0;
  int n_workers = 4;
  int fragment_len = 64;
  int batch_size = 640;
  bool normalize_advantages = true;
  double reg_l1 = 1e-5;
  double reg_l2 = 1e-5;

  void validate() const;
  static PpoConfig from_kv(const KeyValueConfig& kv,
                           const std::string& prefix = "ppo.");
};

// ---------------------------------------------------------------------------
// Diagonal Gaussian policy pieces.
// ---------------------------------------------------------------------------

// Log density of `action` under N(mu, diag(var)), summed over dimensions.
template <typename S>
S gaussian_logp(const VecX<S>& action, const VecX<S>& mu, const VecX<S>& var) {
  if (action.size() != mu.size() || mu.size() != var.size()) {
    throw ContractError("gaussian_logp: dimension mismatch");
  }
  S logp = 0;
  for (Eigen::Index i = 0; i < action.size(); ++i) {
    if (!(var[i] > S(0))) {
      throw DegenerateInputError("gaussian_logp: variance must be positive");
    }
    const S d = action[i] - mu[i];
    logp += S(-0.5) * (std::log(S(2) * S(std::numbers::pi)) +
                       std::log(var[i]) + d * d / var[i]);
  }
  return logp;
}

// d logp / d mu and d logp / d var.
template <typename S>
void gaussian_logp_backward(const VecX<S>& action, const VecX<S>& mu,
                            const VecX<S>& var, S dlogp, VecX<S>& dmu,
                            VecX<S>& dvar) {
  dmu.resize(mu.size());
  dvar.resize(var.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const S d = action[i] - mu[i];
    dmu[i] = dlogp * d / var[i];
    dvar[i] = dlogp * S(0.5) * (d * d / (var[i] * var[i]) - S(1) / var[i]);
  }
}

// KL(old || new) for diagonal Gaussians, summed over dimensions.
template <typename S>
S gaussian_kl(const VecX<S>& mu_old, const VecX<S>& var_old,
              const VecX<S>& mu_new, const VecX<S>& var_new) {
  S kl = 0;
  for (Eigen::Index i = 0; i < mu_old.size(); ++i) {
    const S dmu = mu_new[i] - mu_old[i];
    kl += S(0.5) * (std::log(var_new[i] / var_old[i]) +
                    (var_old[i] + dmu * dmu) / var_new[i] - S(1));
  }
  return kl;
}

// d KL / d mu_new, d KL / d var_new.
template <typename S>
void gaussian_kl_backward(const VecX<S>& mu_old, const VecX<S>& var_old,
                          const VecX<S>& mu_new, const VecX<S>& var_new,
                          S dkl, VecX<S>& dmu_new, VecX<S>& dvar_new) {
  dmu_new.resize(mu_new.size());
  dvar_new.resize(var_new.size());
  for (Eigen::Index i = 0; i < mu_new.size(); ++i) {
    const S dmu = mu_new[i] - mu_old[i];
    dmu_new[i] = dkl * dmu / var_new[i];
    dvar_new[i] =
        dkl * S(0.5) *
        (S(1) / var_new[i] -
         (var_old[i] + dmu * dmu) / (var_new[i] * var_new[i]));
  }
}

// Differential entropy of a diagonal Gaussian.
template <typename S>
S gaussian_entropy(const VecX<S>& var) {
  S h = 0;
  for (Eigen::Index i = 0; i < var.size(); ++i) {
    h += S(0.5) * (std::log(S(2) * S(std::numbers::pi) * var[i]) + S(1));
  }
  return h;
}

template <typename S>
void gaussian_entropy_backward(const VecX<S>& var, S dh, VecX<S>& dvar) {
  dvar.resize(var.size());
  for (Eigen::Index i = 0; i < var.size(); ++i) {
    dvar[i] = dh * S(0.5) / var[i];
  }
}

// ---------------------------------------------------------------------------
// Generalized advantage estimation.
//   delta_t = r_t + gamma * v_{t+1} * (1 - done_t) - v_t
//   A_t     = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}
// `values` carries one bootstrap entry beyond the rewards.
// ---------------------------------------------------------------------------

template <typename S>
struct GaeResult {
  std::vector<S> advantages;
  std::vector<S> returns;
};

template <typename S>
GaeResult<S> compute_gae(const std::vector<S>& rewards,
                         const std::vector<S>& values,
                         const std::vector<bool>& dones, double gamma,
                         double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n + 1 || dones.size() != n) {
    throw ContractError("compute_gae: length mismatch");
  }
  GaeResult<S> out;
  out.advantages.assign(n, S(0));
  out.returns.assign(n, S(0));
  S next_adv = 0;
  for (std::size_t i = n; i-- > 0;) {
    const S not_done = dones[i] ? S(0) : S(1);
    const S delta =
        rewards[i] + S(gamma) * values[i + 1] * not_done - values[i];
    next_adv = delta + S(gamma) * S(lambda) * not_done * next_adv;
    out.advantages[i] = next_adv;
    out.returns[i] = next_adv + values[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Clipped surrogate. Returned as a loss: the negated mean of
//   min(r * A, clip(r, 1 - eps, 1 + eps) * A),  r = exp(logp - logp_old).
// ---------------------------------------------------------------------------

template <typename S>
S ppo_surrogate(const VecX<S>& logp_new, const VecX<S>& logp_old,
                const VecX<S>& advantages, double eps,
                VecX<S>* dlogp_new = nullptr) {
  const Eigen::Index n = logp_new.size();
  if (logp_old.size() != n || advantages.size() != n) {
    throw ContractError("ppo_surrogate: length mismatch");
  }
  if (dlogp_new) dlogp_new->setZero(n);
  S total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const S r = std::exp(logp_new[i] - logp_old[i]);
    if (!std::isfinite(r)) {
      throw DegenerateInputError("ppo_surrogate: non-finite ratio");
    }
    const S lo = S(1.0 - eps), hi = S(1.0 + eps);
    const S unclipped = r * advantages[i];
    const S clipped = std::clamp(r, lo, hi) * advantages[i];
    total += std::min(unclipped, clipped);
    if (dlogp_new) {
      // Subgradient of -min(...)/n w.r.t. logp_new. When the min picks the
      // clipped branch the clamp is active and the slope is zero.
      const S slope = unclipped <= clipped ? r * advantages[i] : S(0);
      (*dlogp_new)[i] = -slope / static_cast<S>(n);
    }
  }
  return -total / static_cast<S>(n);
}

// ---------------------------------------------------------------------------
// Clipped value loss: mean of
//   max( (v_new - ret)^2, (v_old + clip(v_new - v_old, +-c) - ret)^2 ).
// ---------------------------------------------------------------------------

template <typename S>
S value_loss(const VecX<S>& values_new, const VecX<S>& values_old,
             const VecX<S>& returns, double vf_clip,
             VecX<S>* dvalues_new = nullptr) {
  const Eigen::Index n = values_new.size();
  if (values_old.size() != n || returns.size() != n) {
    throw ContractError("value_loss: length mismatch");
  }
  if (dvalues_new) dvalues_new->setZero(n);
  S total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const S unclipped = values_new[i] - returns[i];
    const S delta = std::clamp(values_new[i] - values_old[i], S(-vf_clip),
                               S(vf_clip));
    const S clipped = values_old[i] + delta - returns[i];
    const S u2 = unclipped * unclipped;
    const S c2 = clipped * clipped;
    total += std::max(u2, c2);
    if (dvalues_new) {
      S g = 0;
      if (u2 >= c2) {
        g = S(2) * unclipped;
      } else if (std::abs(values_new[i] - values_old[i]) < S(vf_clip)) {
        g = S(2) * clipped;
      }
      (*dvalues_new)[i] = g / static_cast<S>(n);
    }
  }
  return total / static_cast<S>(n);
}

// ---------------------------------------------------------------------------
// Adaptive KL coefficient: widen or shrink by 1.5x outside the
// [target/2, 2*target] dead zone.
// ---------------------------------------------------------------------------

inline double adaptive_kl_update(double kl_measured, double kl_coef,
                                 double kl_target) {
  if (kl_measured < 0) {
    throw DegenerateInputError("adaptive_kl_update: negative KL");
  }
  if (kl_measured > 2.0 * kl_target) return kl_coef * 1.5;
  if (kl_measured < kl_target / 2.0) return kl_coef / 1.5;
  return kl_coef;
}

}  // namespace driverep

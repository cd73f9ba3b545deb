#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "driverep/nn/layers.hpp"
#include "driverep/nn/tensor.hpp"

namespace driverep {

// ---------------------------------------------------------------------------
// InfoNCE over cosine similarities at temperature alpha. Each query carries
// explicit positive and negative key index sets, which covers both the
// single-positive and the multi-positive form:
//
//   L_q = -log( sum_{k in P} exp(sim(q,k)/a) / sum_{k in P u N} exp(sim(q,k)/a) )
//
// averaged over queries, with sim = cosine.
// ---------------------------------------------------------------------------

template <typename S>
struct ContrastiveBatch {
  MatX<S> queries;  // N x D
  MatX<S> keys;     // M x D
  std::vector<std::vector<int>> positives;  // per query, >= 1 each
  std::vector<std::vector<int>> negatives;  // per query, >= 1 each
  double temperature = 0.1;

  void validate() const {
    if (queries.cols() != keys.cols()) {
      throw ContractError("contrastive batch: dimension mismatch");
    }
    if (temperature <= 0) throw ContractError("temperature must be positive");
    if (positives.size() != static_cast<std::size_t>(queries.rows()) ||
        negatives.size() != static_cast<std::size_t>(queries.rows())) {
      throw ContractError("contrastive batch: index sets per query");
    }
    for (std::size_t i = 0; i < positives.size(); ++i) {
      if (positives[i].empty()) {
        throw ContractError("contrastive batch: query without positives");
      }
      if (negatives[i].empty()) {
        throw DegenerateInputError(
            "contrastive batch: query without negatives");
      }
    }
  }
};

namespace detail {

// log(sum_i exp(x_i)) with max subtraction.
template <typename S>
S log_sum_exp(const std::vector<S>& xs) {
  S m = -std::numeric_limits<S>::infinity();
  for (S x : xs) m = std::max(m, x);
  S acc = 0;
  for (S x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

}  // namespace detail

template <typename S>
S info_nce(const ContrastiveBatch<S>& batch, MatX<S>* dqueries = nullptr,
           MatX<S>* dkeys = nullptr) {
  batch.validate();
  const Eigen::Index n = batch.queries.rows();
  const S alpha = static_cast<S>(batch.temperature);
  const S eps = static_cast<S>(1e-12);

  if (dqueries) dqueries->setZero(batch.queries.rows(), batch.queries.cols());
  if (dkeys) dkeys->setZero(batch.keys.rows(), batch.keys.cols());

  VecX<S> qnorm(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    qnorm[i] = batch.queries.row(i).norm();
    if (!(qnorm[i] > eps)) {
      throw DegenerateInputError("info_nce: zero-norm query");
    }
  }
  VecX<S> knorm(batch.keys.rows());
  for (Eigen::Index k = 0; k < batch.keys.rows(); ++k) {
    knorm[k] = batch.keys.row(k).norm();
    if (!(knorm[k] > eps)) {
      throw DegenerateInputError("info_nce: zero-norm key");
    }
  }

  S total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& pos = batch.positives[static_cast<std::size_t>(i)];
    const auto& neg = batch.negatives[static_cast<std::size_t>(i)];
    std::vector<int> all(pos);
    all.insert(all.end(), neg.begin(), neg.end());

    std::vector<S> logits(all.size());
    for (std::size_t a = 0; a < all.size(); ++a) {
      const int k = all[a];
      const S cos = batch.queries.row(i).dot(batch.keys.row(k)) /
                    (qnorm[i] * knorm[k]);
      logits[a] = cos / alpha;
    }
    std::vector<S> pos_logits(logits.begin(),
                              logits.begin() + static_cast<long>(pos.size()));
    const S lse_pos = detail::log_sum_exp(pos_logits);
    const S lse_all = detail::log_sum_exp(logits);
    total += lse_all - lse_pos;

    if (dqueries || dkeys) {
      // dL_i/d logit_a = softmax_all(a) - [a is positive] softmax_pos(a)
      for (std::size_t a = 0; a < all.size(); ++a) {
        S coeff = std::exp(logits[a] - lse_all);
        if (a < pos.size()) coeff -= std::exp(logits[a] - lse_pos);
        coeff /= static_cast<S>(n);  // mean over queries
        const int k = all[a];
        // chain through cosine and temperature
        const S cos = logits[a] * alpha;
        const auto q = batch.queries.row(i);
        const auto kk = batch.keys.row(k);
        const S inv = coeff / alpha;
        if (dqueries) {
          dqueries->row(i) +=
              inv * (kk / (qnorm[i] * knorm[k]) -
                     q * (cos / (qnorm[i] * qnorm[i])));
        }
        if (dkeys) {
          dkeys->row(k) += inv * (q / (qnorm[i] * knorm[k]) -
                                  kk * (cos / (knorm[k] * knorm[k])));
        }
      }
    }
  }
  return total / static_cast<S>(n);
}

// ---------------------------------------------------------------------------
// Bootstrap (non-contrastive) loss: mean squared error between the already
// L2-normalized online prediction and target projection. The target branch
// is gradient-blocked by construction.
// ---------------------------------------------------------------------------

template <typename S>
struct ByolPair {
  MatX<S> online;  // N x D, normalized rows
  MatX<S> target;  // N x D, normalized rows, no gradient

  void validate() const {
    if (online.rows() != target.rows() || online.cols() != target.cols()) {
      throw ContractError("byol pair: shape mismatch");
    }
    for (Eigen::Index i = 0; i < online.rows(); ++i) {
      if (std::abs(online.row(i).norm() - S(1)) > S(1e-5) ||
          std::abs(target.row(i).norm() - S(1)) > S(1e-5)) {
        throw ContractError("byol pair: rows must be L2-normalized");
      }
    }
  }
};

// Returns mean_i ||online_i - target_i||^2. dtarget, when requested, is
// exactly zero (stop-gradient contract).
template <typename S>
S byol_loss(const ByolPair<S>& pair, MatX<S>* donline = nullptr,
            MatX<S>* dtarget = nullptr) {
  pair.validate();
  const S n = static_cast<S>(pair.online.rows());
  const MatX<S> diff = pair.online - pair.target;
  if (donline) *donline = S(2) / n * diff;
  if (dtarget) dtarget->setZero(pair.target.rows(), pair.target.cols());
  return diff.squaredNorm() / n;
}

// ---------------------------------------------------------------------------
// Autoencoding loss: per-pixel mean squared reconstruction error plus the
// closed-form Gaussian KL to the standard normal,
//   kl = 1/2 sum_l (mu^2 + sigma^2 - 1 - log sigma^2), averaged over batch.
// ---------------------------------------------------------------------------

template <typename S>
struct VaeBatch {
  std::vector<Tensor<S>> input;
  std::vector<Tensor<S>> reconstruction;
  MatX<S> mu;       // N x L
  MatX<S> log_var;  // N x L

  void validate() const {
    if (input.size() != reconstruction.size() ||
        input.size() != static_cast<std::size_t>(mu.rows()) ||
        mu.rows() != log_var.rows() || mu.cols() != log_var.cols()) {
      throw ContractError("vae batch: inconsistent sizes");
    }
    for (std::size_t i = 0; i < input.size(); ++i) {
      if (!input[i].same_shape(reconstruction[i])) {
        throw ContractError("vae batch: reconstruction shape mismatch");
      }
    }
    if (!log_var.allFinite() || !mu.allFinite()) {
      throw DegenerateInputError("vae batch: non-finite latent parameters");
    }
  }
};

template <typename S>
struct VaeLossTerms {
  S total = 0;
  S reconstruction = 0;
  S kl = 0;
};

template <typename S>
VaeLossTerms<S> vae_loss(const VaeBatch<S>& batch, double kl_weight,
                         std::vector<Tensor<S>>* drecon = nullptr,
                         MatX<S>* dmu = nullptr, MatX<S>* dlog_var = nullptr) {
  batch.validate();
  const Eigen::Index n = batch.mu.rows();
  VaeLossTerms<S> terms;

  Eigen::Index total_elems = 0;
  for (const auto& t : batch.input) total_elems += t.numel();
  for (std::size_t i = 0; i < batch.input.size(); ++i) {
    terms.reconstruction +=
        (batch.reconstruction[i].data - batch.input[i].data).squaredNorm();
  }
  terms.reconstruction /= static_cast<S>(total_elems);

  const auto var = batch.log_var.array().exp();
  terms.kl = S(0.5) *
             (batch.mu.array().square() + var - S(1) - batch.log_var.array())
                 .sum() /
             static_cast<S>(n);

  terms.total = terms.reconstruction + static_cast<S>(kl_weight) * terms.kl;

  if (drecon) {
    drecon->resize(batch.input.size());
    for (std::size_t i = 0; i < batch.input.size(); ++i) {
      (*drecon)[i] = batch.reconstruction[i];
      (*drecon)[i].data = S(2) / static_cast<S>(total_elems) *
                          (batch.reconstruction[i].data - batch.input[i].data);
    }
  }
  if (dmu) {
    *dmu = static_cast<S>(kl_weight) / static_cast<S>(n) * batch.mu;
  }
  if (dlog_var) {
    *dlog_var = (static_cast<S>(kl_weight) * S(0.5) / static_cast<S>(n) *
                 (var - S(1)))
                    .matrix();
  }
  return terms;
}

}  // namespace driverep

#pragma once

#include <vector>

#include "driverep/nn/layers.hpp"
#include "driverep/nn/params.hpp"
#include "driverep/ssl/objectives.hpp"

namespace driverep {

// Predictive-coding head: a gated recurrent cell aggregates per-cell block
// features over time, then a linear predictor rolls future block features
// out of the hidden state, feeding each prediction back into the cell.
// Weights are shared across spatial cells (equivalent to a 1x1-kernel
// convolutional recurrent cell).
template <typename S>
class DpcHead {
 public:
  DpcHead(int feat_dim, int n_cells) : feat_dim_(feat_dim), n_cells_(n_cells) {
    gru_.build(layout_, "dpc.gru", feat_dim, feat_dim);
    pred_.build(layout_, "dpc.pred", feat_dim, feat_dim);
  }

  const ParamLayout& layout() const { return layout_; }
  int feat_dim() const { return feat_dim_; }
  int n_cells() const { return n_cells_; }

  VecX<S> init_params(std::uint64_t seed) const {
    return init_he_normal<S>(layout_, seed);
  }

  struct SampleCache {
    // [block][cell] recurrent caches for the context sweep, then for the
    // prediction feedback steps.
    std::vector<std::vector<GruCache<S>>> context;
    std::vector<std::vector<GruCache<S>>> feedback;
    std::vector<MatX<S>> hidden;  // g[j], cells x C, j = 0..horizon-1
    std::vector<MatX<S>> preds;   // p_j, cells x C, j = 1..horizon
  };

  // feats: one matrix per block, cells x C. The first `context` blocks are
  // aggregated; the rest are predicted.
  std::vector<MatX<S>> rollout(const std::vector<MatX<S>>& feats, int context,
                               const VecX<S>& theta,
                               SampleCache* cache) const {
    const int total = static_cast<int>(feats.size());
    const int horizon = total - context;
    if (context < 1 || horizon < 1) {
      throw ContractError("dpc rollout: need >= 1 context and future block");
    }
    if (cache) {
      cache->context.assign(static_cast<std::size_t>(context), {});
      cache->feedback.assign(static_cast<std::size_t>(horizon - 1), {});
      cache->hidden.clear();
      cache->preds.clear();
    }
    MatX<S> h = MatX<S>::Zero(n_cells_, feat_dim_);
    for (int t = 0; t < context; ++t) {
      if (cache) {
        cache->context[static_cast<std::size_t>(t)].resize(
            static_cast<std::size_t>(n_cells_));
      }
      MatX<S> next(n_cells_, feat_dim_);
      for (int c = 0; c < n_cells_; ++c) {
        GruCache<S>* gc =
            cache ? &cache->context[static_cast<std::size_t>(t)]
                        [static_cast<std::size_t>(c)]
                  : nullptr;
        next.row(c) = gru_.step(
            feats[static_cast<std::size_t>(t)].row(c).transpose(),
            h.row(c).transpose(), theta.data(), gc).transpose();
      }
      h = std::move(next);
    }
    std::vector<MatX<S>> preds;
    for (int j = 0; j < horizon; ++j) {
      if (cache) cache->hidden.push_back(h);
      MatX<S> p(n_cells_, feat_dim_);
      for (int c = 0; c < n_cells_; ++c) {
        p.row(c) =
            pred_.forward(h.row(c).transpose(), theta.data()).transpose();
      }
      preds.push_back(p);
      if (j + 1 < horizon) {
        if (cache) {
          cache->feedback[static_cast<std::size_t>(j)].resize(
              static_cast<std::size_t>(n_cells_));
        }
        MatX<S> next(n_cells_, feat_dim_);
        for (int c = 0; c < n_cells_; ++c) {
          GruCache<S>* gc =
              cache ? &cache->feedback[static_cast<std::size_t>(j)]
                          [static_cast<std::size_t>(c)]
                    : nullptr;
          next.row(c) = gru_.step(p.row(c).transpose(), h.row(c).transpose(),
                                  theta.data(), gc).transpose();
        }
        h = std::move(next);
      }
    }
    if (cache) cache->preds = preds;
    return preds;
  }

  // dpreds: gradient per predicted block (cells x C). Accumulates head
  // gradients and returns per-context-block feature gradients.
  std::vector<MatX<S>> rollout_backward(const SampleCache& cache, int context,
                                        const std::vector<MatX<S>>& dpreds,
                                        const VecX<S>& theta,
                                        VecX<S>& grad) const {
    const int horizon = static_cast<int>(dpreds.size());
    MatX<S> dh = MatX<S>::Zero(n_cells_, feat_dim_);
    for (int j = horizon - 1; j >= 0; --j) {
      MatX<S> dp = dpreds[static_cast<std::size_t>(j)];
      if (j + 1 < horizon) {
        // The feedback step consumed (p_j, g_j) to produce g_{j+1}.
        MatX<S> dh_prev(n_cells_, feat_dim_);
        for (int c = 0; c < n_cells_; ++c) {
          VecX<S> dx;
          dh_prev.row(c) =
              gru_.backward(cache.feedback[static_cast<std::size_t>(j)]
                                [static_cast<std::size_t>(c)],
                            dh.row(c).transpose(), theta.data(), grad.data(),
                            &dx).transpose();
          dp.row(c) += dx.transpose();
        }
        dh = std::move(dh_prev);
      } else {
        dh.setZero();
      }
      for (int c = 0; c < n_cells_; ++c) {
        dh.row(c) +=
            pred_
                .backward(cache.hidden[static_cast<std::size_t>(j)]
                              .row(c)
                              .transpose(),
                          dp.row(c).transpose(), theta.data(), grad.data())
                .transpose();
      }
    }
    // Context sweep, newest block first.
    std::vector<MatX<S>> dfeats(static_cast<std::size_t>(context));
    for (int t = context - 1; t >= 0; --t) {
      MatX<S> dx_block(n_cells_, feat_dim_);
      MatX<S> dh_prev(n_cells_, feat_dim_);
      for (int c = 0; c < n_cells_; ++c) {
        VecX<S> dx;
        dh_prev.row(c) =
            gru_.backward(cache.context[static_cast<std::size_t>(t)]
                              [static_cast<std::size_t>(c)],
                          dh.row(c).transpose(), theta.data(), grad.data(),
                          &dx).transpose();
        dx_block.row(c) = dx.transpose();
      }
      dfeats[static_cast<std::size_t>(t)] = std::move(dx_block);
      dh = std::move(dh_prev);
    }
    return dfeats;
  }

 private:
  int feat_dim_;
  int n_cells_;
  ParamLayout layout_;
  GruSpec<S> gru_;
  LinearSpec<S> pred_;
};

// Scores predictions against the true future blocks with the contrastive
// objective: the positive for a predicted cell is the co-located cell of the
// correct future block; every other true future cell in the batch is a
// negative. Returns the loss; fills per-sample gradients for predictions and
// true features.
template <typename S>
S dpc_score(const std::vector<std::vector<MatX<S>>>& preds,
            const std::vector<std::vector<MatX<S>>>& future,
            double temperature,
            std::vector<std::vector<MatX<S>>>* dpreds = nullptr,
            std::vector<std::vector<MatX<S>>>* dfuture = nullptr) {
  if (preds.empty() || preds.size() != future.size()) {
    throw ContractError("dpc_score: batch mismatch");
  }
  const int n = static_cast<int>(preds.size());
  const int horizon = static_cast<int>(preds.front().size());
  const int cells = static_cast<int>(preds.front().front().rows());
  const int dim = static_cast<int>(preds.front().front().cols());
  const int rows = n * horizon * cells;

  ContrastiveBatch<S> batch;
  batch.temperature = temperature;
  batch.queries.resize(rows, dim);
  batch.keys.resize(rows, dim);
  batch.positives.resize(static_cast<std::size_t>(rows));
  batch.negatives.resize(static_cast<std::size_t>(rows));
  auto flat = [&](int i, int j, int c) {
    return (i * horizon + j) * cells + c;
  };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < horizon; ++j) {
      for (int c = 0; c < cells; ++c) {
        const int r = flat(i, j, c);
        batch.queries.row(r) =
            preds[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]
                .row(c);
        batch.keys.row(r) =
            future[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]
                .row(c);
        batch.positives[static_cast<std::size_t>(r)] = {r};
        auto& negs = batch.negatives[static_cast<std::size_t>(r)];
        negs.reserve(static_cast<std::size_t>(rows - 1));
        for (int k = 0; k < rows; ++k) {
          if (k != r) negs.push_back(k);
        }
      }
    }
  }
  MatX<S> dq, dk;
  const S loss = info_nce(batch, (dpreds || dfuture) ? &dq : nullptr,
                          (dpreds || dfuture) ? &dk : nullptr);
  auto unflatten = [&](const MatX<S>& src,
                       std::vector<std::vector<MatX<S>>>* dst) {
    dst->assign(static_cast<std::size_t>(n), {});
    for (int i = 0; i < n; ++i) {
      auto& per = (*dst)[static_cast<std::size_t>(i)];
      per.assign(static_cast<std::size_t>(horizon),
                 MatX<S>::Zero(cells, dim));
      for (int j = 0; j < horizon; ++j) {
        for (int c = 0; c < cells; ++c) {
          per[static_cast<std::size_t>(j)].row(c) =
              src.row(flat(i, j, c));
        }
      }
    }
  };
  if (dpreds) unflatten(dq, dpreds);
  if (dfuture) unflatten(dk, dfuture);
  return loss;
}

}  // namespace driverep

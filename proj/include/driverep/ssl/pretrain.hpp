#pragma once

#include <deque>
#include <memory>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "driverep/core/parallel.hpp"
#include "driverep/encoder/encoder.hpp"
#include "driverep/ssl/dataset.hpp"
#include "driverep/ssl/dpc.hpp"
#include "driverep/ssl/objectives.hpp"

namespace driverep {

enum class Scheme { kMoco, kByol, kDpc, kVae };

Scheme parse_scheme(const std::string& name);
std::string scheme_name(Scheme s);

struct PretrainConfig {
  Scheme scheme = Scheme::kByol;
  int batch_videos = 8;  // V videos per step; joint-embedding schemes use 2V clips
  int steps = 200;
  double lr = 1e-3;
  int queue_size = 1024;
  double kl_weight = 1.0;
  double temperature = 0.1;
  bool byol_symmetrize = true;
  int dpc_blocks = 3;
  int dpc_context = 2;
  std::uint64_t seed = 0;
  AugmentationParams aug;
  int threads = 0;

  void validate() const;
  static PretrainConfig from_kv(const KeyValueConfig& kv,
                                const std::string& prefix = "pretrain.");
};

struct PretrainMetrics {
  int step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double embedding_std = 0.0;
  int queue_fill = 0;
  double reconstruction = 0.0;  // autoencoder only
  double kl = 0.0;              // autoencoder only
  bool collapse_warning = false;
};

// Builds the same-video positive-pair contrastive batch: every clip is a
// query whose positive is the key of its sibling clip; keys of all other
// videos (plus the queue) are negatives.
template <typename S>
ContrastiveBatch<S> temporal_persistency_pairs(const MatX<S>& query_embed,
                                               const MatX<S>& key_embed,
                                               const std::vector<int>& video_ids,
                                               const MatX<S>& queue,
                                               double temperature) {
  const Eigen::Index n = query_embed.rows();
  if (n != key_embed.rows() ||
      video_ids.size() != static_cast<std::size_t>(n)) {
    throw ContractError("temporal_persistency_pairs: row mismatch");
  }
  // Exactly two clips per video, adjacent rows.
  if (n % 2 != 0) {
    throw ContractError("temporal_persistency_pairs: expected clip pairs");
  }
  for (Eigen::Index i = 0; i + 1 < n; i += 2) {
    if (video_ids[static_cast<std::size_t>(i)] !=
        video_ids[static_cast<std::size_t>(i + 1)]) {
      throw ContractError("temporal_persistency_pairs: unpaired clips");
    }
  }
  for (Eigen::Index i = 0; i < n; i += 2) {
    for (Eigen::Index j = i + 2; j < n; j += 2) {
      if (video_ids[static_cast<std::size_t>(i)] ==
          video_ids[static_cast<std::size_t>(j)]) {
        throw ContractError(
            "temporal_persistency_pairs: the same video appears twice");
      }
    }
  }
  if (n < 4) {
    throw DegenerateInputError(
        "temporal_persistency_pairs: need >= 2 videos for negatives");
  }
  ContrastiveBatch<S> batch;
  batch.temperature = temperature;
  batch.queries = query_embed;
  batch.keys.resize(n + queue.rows(), query_embed.cols());
  batch.keys.topRows(n) = key_embed;
  if (queue.rows() > 0) batch.keys.bottomRows(queue.rows()) = queue;
  batch.positives.resize(static_cast<std::size_t>(n));
  batch.negatives.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int sibling = static_cast<int>(i % 2 == 0 ? i + 1 : i - 1);
    batch.positives[static_cast<std::size_t>(i)] = {sibling};
    auto& negs = batch.negatives[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < n; ++k) {
      if (video_ids[static_cast<std::size_t>(k)] !=
          video_ids[static_cast<std::size_t>(i)]) {
        negs.push_back(static_cast<int>(k));
      }
    }
    for (Eigen::Index q = 0; q < queue.rows(); ++q) {
      negs.push_back(static_cast<int>(n + q));
    }
  }
  return batch;
}

// Offline pretraining driver: owns the online encoder, the momentum target,
// scheme-specific heads, the optimizer and the key queue.
template <typename S>
class Pretrainer {
 public:
  Pretrainer(const EncoderConfig& enc_cfg, const PretrainConfig& cfg,
             const ClipDataset& data)
      : enc_(enc_cfg), cfg_(cfg), data_(&data), rng_(Rng::split_mix(cfg.seed)) {
    cfg_.validate();
    data.validate(enc_cfg.clip_len, cfg_.aug.temporal_stride);
    theta_ = enc_.init_params(cfg_.seed ^ 0x9e3779b97f4a7c15ULL);
    target_theta_ = theta_;
    adam_ = Adam<S>(cfg_.lr);
    adam_.register_params(theta_.size());

    const auto fd = enc_.feature_dims();
    if (cfg_.scheme == Scheme::kVae) {
      build_decoder();
    } else if (cfg_.scheme == Scheme::kDpc) {
      dpc_ = std::make_unique<DpcHead<S>>(fd[0], fd[2] * fd[3]);
      extra_theta_ = dpc_->init_params(cfg_.seed ^ 0x2545f4914f6cdd1dULL);
      extra_adam_ = Adam<S>(cfg_.lr);
      extra_adam_.register_params(extra_theta_.size());
    }
    if (cfg_.scheme == Scheme::kVae) {
      extra_adam_ = Adam<S>(cfg_.lr);
      extra_adam_.register_params(extra_theta_.size());
    }
  }

  PretrainMetrics step() {
    PretrainMetrics m;
    m.step = ++step_count_;
    switch (cfg_.scheme) {
      case Scheme::kMoco:
        step_moco(m);
        break;
      case Scheme::kByol:
        step_byol(m);
        break;
      case Scheme::kDpc:
        step_dpc(m);
        break;
      case Scheme::kVae:
        step_vae(m);
        break;
    }
    if (!std::isfinite(m.loss)) {
      throw DegenerateInputError("pretrain step " + std::to_string(m.step) +
                                 ": non-finite loss");
    }
    m.collapse_warning = m.embedding_std < 1e-9;
    return m;
  }

  const VideoEncoder<S>& encoder() const { return enc_; }
  const VecX<S>& online_params() const { return theta_; }
  const VecX<S>& target_params() const { return target_theta_; }
  VecX<S>& mutable_online_params() { return theta_; }
  int queue_fill() const { return static_cast<int>(queue_.size()); }

  // Writes the frozen checkpoint: backbone + projection of the online
  // encoder, tagged with the training scheme. Momentum copy, queue,
  // predictor and decoder heads are training-only artifacts and stay out.
  void export_frozen(const std::filesystem::path& path) const {
    save_encoder(path, enc_, theta_, scheme_name(cfg_.scheme));
  }

 private:
  struct ClipBatchEntry {
    Tensor<S> view_a, view_b;
    int video = 0;
  };

  std::vector<int> sample_videos(int count) {
    // Without replacement; deterministic order from the rng.
    std::vector<int> all(static_cast<std::size_t>(data_->num_videos()));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    for (int i = 0; i < count; ++i) {
      const int j = i + static_cast<int>(rng_.uniform_int(
                            static_cast<std::uint64_t>(all.size() - i)));
      std::swap(all[static_cast<std::size_t>(i)],
                all[static_cast<std::size_t>(j)]);
    }
    all.resize(static_cast<std::size_t>(count));
    return all;
  }

  std::vector<ClipBatchEntry> sample_pair_batch() {
    const int v = std::min(cfg_.batch_videos, data_->num_videos());
    if (v < 2) {
      throw DegenerateInputError("need >= 2 videos for paired batches");
    }
    std::vector<ClipBatchEntry> batch;
    for (int video : sample_videos(v)) {
      auto [a, b] = sample_clip_pair<S>(*data_, video, enc_.config().clip_len,
                                        cfg_.aug, rng_);
      batch.push_back({std::move(a), std::move(b), video});
    }
    return batch;
  }

  // Per-dimension std over rows, averaged; rows must be normalized already.
  static double embedding_std(const MatX<S>& rows) {
    if (rows.rows() < 2) return 0.0;
    const VecX<S> mean = rows.colwise().mean();
    VecX<S> var = VecX<S>::Zero(rows.cols());
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
      var.array() +=
          (rows.row(i).transpose() - mean).array().square();
    }
    var /= static_cast<S>(rows.rows() - 1);
    return var.array().sqrt().mean();
  }

  // Splits [0, n) into ordered chunks, runs fn(i, chunk) in parallel, one
  // gradient buffer per chunk, reduced in chunk order.
  template <typename Fn>
  void chunked_accumulate(int n, VecX<S>& grad, VecX<S>* extra_grad,
                          const Fn& fn) {
    const int threads = cfg_.threads > 0 ? cfg_.threads : default_threads();
    const int chunks = std::max(1, std::min(threads, n));
    std::vector<VecX<S>> bufs(static_cast<std::size_t>(chunks),
                              VecX<S>::Zero(grad.size()));
    std::vector<VecX<S>> extra_bufs;
    if (extra_grad) {
      extra_bufs.assign(static_cast<std::size_t>(chunks),
                        VecX<S>::Zero(extra_grad->size()));
    }
    parallel_for(
        chunks,
        [&](int chunk) {
          const int lo = n * chunk / chunks;
          const int hi = n * (chunk + 1) / chunks;
          for (int i = lo; i < hi; ++i) {
            fn(i, bufs[static_cast<std::size_t>(chunk)],
               extra_grad ? &extra_bufs[static_cast<std::size_t>(chunk)]
                          : nullptr);
          }
        },
        chunks);
    for (const auto& b : bufs) grad += b;
    if (extra_grad) {
      for (const auto& b : extra_bufs) *extra_grad += b;
    }
  }

  void push_queue(const MatX<S>& keys) {
    for (Eigen::Index i = 0; i < keys.rows(); ++i) {
      queue_.push_back(keys.row(i));
      if (static_cast<int>(queue_.size()) > cfg_.queue_size) {
        queue_.pop_front();
      }
    }
  }

  MatX<S> queue_matrix() const {
    MatX<S> q(static_cast<Eigen::Index>(queue_.size()),
              enc_.config().projection_dim);
    for (std::size_t i = 0; i < queue_.size(); ++i) {
      q.row(static_cast<Eigen::Index>(i)) = queue_[i];
    }
    return q;
  }

  void step_moco(PretrainMetrics& m);
  void step_byol(PretrainMetrics& m);
  void step_dpc(PretrainMetrics& m);
  void step_vae(PretrainMetrics& m);
  void build_decoder();

  VideoEncoder<S> enc_;
  PretrainConfig cfg_;
  const ClipDataset* data_;
  Rng rng_;

  VecX<S> theta_;         // online encoder (+ predictor)
  VecX<S> target_theta_;  // momentum copy, optimizer never touches it
  Adam<S> adam_;

  // Scheme extras share one layout + vector.
  ParamLayout extra_layout_;
  VecX<S> extra_theta_;
  Adam<S> extra_adam_;
  std::unique_ptr<DpcHead<S>> dpc_;

  // Autoencoder pieces (built against the encoder geometry).
  LinearSpec<S> vae_logvar_;
  LinearSpec<S> dec_fc_;
  std::vector<Conv3dSpec<S>> dec_convs_;
  std::vector<std::array<int, 3>> dec_up_factors_;
  std::vector<std::vector<int>> dec_in_dims_;

  std::deque<Eigen::RowVector<S, Eigen::Dynamic>> queue_;
  int step_count_ = 0;
};

}  // namespace driverep

#include "driverep/ssl/pretrain_impl.hpp"

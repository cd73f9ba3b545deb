#pragma once

// Implementation of the Pretrainer steps. Included at the end of
// pretrain.hpp; not meant to be included directly.

#include <memory>

namespace driverep {

template <typename S>
void Pretrainer<S>::build_decoder() {
  const auto fd = enc_.feature_dims();
  const auto& cfg = enc_.config();
  vae_logvar_.build(extra_layout_, "vae.logvar", cfg.projection_hidden,
                    cfg.projection_dim);
  dec_fc_.build(extra_layout_, "vae.dec.fc", cfg.projection_dim,
                static_cast<int>(Tensor<S>::count(fd)));
  std::vector<int> dims = fd;
  const int n_stages = static_cast<int>(cfg.stage_channels.size());
  for (int s = n_stages - 1; s >= 0; --s) {
    const auto f = cfg.stage_strides[static_cast<std::size_t>(s)];
    dec_up_factors_.push_back(f);
    dec_in_dims_.push_back(dims);
    std::vector<int> up_dims = {dims[0], dims[1] * f[0], dims[2] * f[1],
                                dims[3] * f[2]};
    const int out_ch =
        s > 0 ? cfg.stage_channels[static_cast<std::size_t>(s - 1)]
              : cfg.channels;
    Conv3dSpec<S> conv;
    conv.build(extra_layout_, "vae.dec.conv" + std::to_string(n_stages - 1 - s),
               up_dims[0], {up_dims[1], up_dims[2], up_dims[3]}, out_ch,
               {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
    dec_convs_.push_back(conv);
    dims = conv.output_dims();
  }
  extra_theta_ = init_he_normal<S>(extra_layout_, cfg_.seed ^ 0x7f4a7c159e37ULL);
}

// ---------------------------------------------------------------------------

template <typename S>
void Pretrainer<S>::step_moco(PretrainMetrics& m) {
  auto batch = sample_pair_batch();
  const int v = static_cast<int>(batch.size());
  const int n = 2 * v;
  const int dim = enc_.config().projection_dim;

  std::vector<typename VideoEncoder<S>::ForwardCache> caches(
      static_cast<std::size_t>(n));
  MatX<S> z_online(n, dim), k_target(n, dim);
  std::vector<int> ids(static_cast<std::size_t>(n));
  auto clip_of = [&](int i) -> const Tensor<S>& {
    return i % 2 == 0 ? batch[static_cast<std::size_t>(i / 2)].view_a
                      : batch[static_cast<std::size_t>(i / 2)].view_b;
  };
  parallel_for(
      n,
      [&](int i) {
        auto& cache = caches[static_cast<std::size_t>(i)];
        const Tensor<S> f = enc_.encode(clip_of(i), theta_, &cache);
        z_online.row(i) = enc_.project(f, theta_, &cache).transpose();
        const Tensor<S> ft = enc_.encode(clip_of(i), target_theta_);
        k_target.row(i) = enc_.project(ft, target_theta_).transpose();
        ids[static_cast<std::size_t>(i)] =
            batch[static_cast<std::size_t>(i / 2)].video;
      },
      cfg_.threads);

  const MatX<S> q_norm = l2_normalize_rows(z_online);
  const MatX<S> k_norm = l2_normalize_rows(k_target);
  auto cb = temporal_persistency_pairs(q_norm, k_norm, ids, queue_matrix(),
                                       cfg_.temperature);
  MatX<S> dq_norm;
  m.loss = static_cast<double>(info_nce(cb, &dq_norm, nullptr));
  const MatX<S> dz = l2_normalize_rows_backward(z_online, dq_norm);

  VecX<S> grad = VecX<S>::Zero(theta_.size());
  chunked_accumulate(n, grad, nullptr, [&](int i, VecX<S>& g, VecX<S>*) {
    auto& cache = caches[static_cast<std::size_t>(i)];
    const Tensor<S> dfmap =
        enc_.project_backward(dz.row(i).transpose(), cache, theta_, g);
    enc_.encode_backward(dfmap, cache, theta_, g);
  });

  m.grad_norm = static_cast<double>(grad.norm());
  m.embedding_std = embedding_std(q_norm);
  adam_.step(theta_, grad);
  momentum_update(enc_.layout(), target_theta_, theta_,
                  enc_.config().momentum);
  push_queue(k_norm);
  m.queue_fill = queue_fill();
}

// ---------------------------------------------------------------------------

template <typename S>
void Pretrainer<S>::step_byol(PretrainMetrics& m) {
  auto batch = sample_pair_batch();
  const int v = static_cast<int>(batch.size());
  const int n = 2 * v;
  const int dim = enc_.config().projection_dim;

  std::vector<typename VideoEncoder<S>::ForwardCache> caches(
      static_cast<std::size_t>(n));
  MatX<S> z_online(n, dim);   // online projections (for the collapse probe)
  MatX<S> p_raw(n, dim);      // online predictions, pre-normalization
  MatX<S> t_raw(n, dim);      // target projections, pre-normalization
  auto clip_of = [&](int i) -> const Tensor<S>& {
    return i % 2 == 0 ? batch[static_cast<std::size_t>(i / 2)].view_a
                      : batch[static_cast<std::size_t>(i / 2)].view_b;
  };
  parallel_for(
      n,
      [&](int i) {
        auto& cache = caches[static_cast<std::size_t>(i)];
        const Tensor<S> f = enc_.encode(clip_of(i), theta_, &cache);
        const VecX<S> z = enc_.project(f, theta_, &cache);
        z_online.row(i) = z.transpose();
        p_raw.row(i) = enc_.predict(z, theta_, &cache).transpose();
        const Tensor<S> ft = enc_.encode(clip_of(i), target_theta_);
        t_raw.row(i) = enc_.project(ft, target_theta_).transpose();
      },
      cfg_.threads);

  const MatX<S> p_norm = l2_normalize_rows(p_raw);
  const MatX<S> t_norm = l2_normalize_rows(t_raw);

  // Direction a -> b: even rows predict odd-row targets; the symmetric
  // direction swaps the roles.
  auto rows_of = [&](const MatX<S>& src, int parity) {
    MatX<S> out(v, dim);
    for (int i = 0; i < v; ++i) out.row(i) = src.row(2 * i + parity);
    return out;
  };
  MatX<S> dp_norm = MatX<S>::Zero(n, dim);
  ByolPair<S> ab{rows_of(p_norm, 0), rows_of(t_norm, 1)};
  MatX<S> dab;
  double loss = static_cast<double>(byol_loss(ab, &dab));
  for (int i = 0; i < v; ++i) dp_norm.row(2 * i) += dab.row(i);
  if (cfg_.byol_symmetrize) {
    ByolPair<S> ba{rows_of(p_norm, 1), rows_of(t_norm, 0)};
    MatX<S> dba;
    loss += static_cast<double>(byol_loss(ba, &dba));
    for (int i = 0; i < v; ++i) dp_norm.row(2 * i + 1) += dba.row(i);
  }
  m.loss = loss;

  const MatX<S> dp = l2_normalize_rows_backward(p_raw, dp_norm);
  VecX<S> grad = VecX<S>::Zero(theta_.size());
  chunked_accumulate(n, grad, nullptr, [&](int i, VecX<S>& g, VecX<S>*) {
    auto& cache = caches[static_cast<std::size_t>(i)];
    const VecX<S> dz =
        enc_.predict_backward(dp.row(i).transpose(), cache, theta_, g);
    const Tensor<S> dfmap = enc_.project_backward(dz, cache, theta_, g);
    enc_.encode_backward(dfmap, cache, theta_, g);
  });

  m.grad_norm = static_cast<double>(grad.norm());
  m.embedding_std = embedding_std(l2_normalize_rows(z_online));
  adam_.step(theta_, grad);
  momentum_update(enc_.layout(), target_theta_, theta_,
                  enc_.config().momentum);
}

// ---------------------------------------------------------------------------

template <typename S>
void Pretrainer<S>::step_vae(PretrainMetrics& m) {
  const int v = std::min(cfg_.batch_videos, data_->num_videos());
  const int dim = enc_.config().projection_dim;
  const int clip_len = enc_.config().clip_len;

  // Sample clips and the reparametrization noise serially so the draw order
  // is independent of the thread count.
  std::vector<Tensor<S>> clips;
  for (int video : sample_videos(v)) {
    const auto& meta = data_->video(video);
    const int span = clip_len * cfg_.aug.temporal_stride;
    const int start = static_cast<int>(
        rng_.uniform_int(static_cast<std::uint64_t>(meta.frames - span + 1)));
    Tensor<S> raw =
        data_->clip<S>(video, start, clip_len, cfg_.aug.temporal_stride);
    const AugmentationDraw d =
        sample_augmentation(cfg_.aug, meta.height, meta.width, rng_);
    clips.push_back(augment(raw, d));
  }
  MatX<S> epsilon(v, dim);
  for (int i = 0; i < v; ++i) {
    for (int l = 0; l < dim; ++l) {
      epsilon(i, l) = static_cast<S>(rng_.gaussian());
    }
  }

  struct DecCache {
    std::vector<Tensor<S>> pre_up;    // input to each upsample
    std::vector<MatX<S>> patches;     // conv patches
    std::vector<Tensor<S>> post_act;  // post relu / sigmoid
    VecX<S> z;
  };
  std::vector<typename VideoEncoder<S>::ForwardCache> caches(
      static_cast<std::size_t>(v));
  std::vector<DecCache> dec_caches(static_cast<std::size_t>(v));
  VaeBatch<S> batch;
  batch.input = clips;
  batch.reconstruction.resize(static_cast<std::size_t>(v));
  batch.mu.resize(v, dim);
  batch.log_var.resize(v, dim);

  const auto fd = enc_.feature_dims();
  parallel_for(
      v,
      [&](int i) {
        auto& cache = caches[static_cast<std::size_t>(i)];
        auto& dc = dec_caches[static_cast<std::size_t>(i)];
        const Tensor<S> f =
            enc_.encode(clips[static_cast<std::size_t>(i)], theta_, &cache);
        const VecX<S> mu = enc_.project(f, theta_, &cache);
        const VecX<S> log_var =
            vae_logvar_.forward(cache.hidden, extra_theta_.data());
        batch.mu.row(i) = mu.transpose();
        batch.log_var.row(i) = log_var.transpose();
        VecX<S> z = mu;
        for (int l = 0; l < dim; ++l) {
          z[l] += std::exp(log_var[l] / S(2)) * epsilon(i, l);
        }
        dc.z = z;
        // Decode: fc -> reshape -> (upsample, conv, relu)* -> sigmoid.
        VecX<S> flat = dec_fc_.forward(z, extra_theta_.data());
        Tensor<S> x;
        x.dims = fd;
        x.data = flat;
        dc.pre_up.resize(dec_convs_.size());
        dc.patches.resize(dec_convs_.size());
        dc.post_act.resize(dec_convs_.size());
        for (std::size_t sdx = 0; sdx < dec_convs_.size(); ++sdx) {
          dc.pre_up[sdx] = x;
          Tensor<S> up = upsample_nearest(x, dec_up_factors_[sdx]);
          Tensor<S> y =
              dec_convs_[sdx].forward(up, extra_theta_.data(), &dc.patches[sdx]);
          if (sdx + 1 < dec_convs_.size()) {
            relu_inplace(y.data);
          } else {
            y.data = sigmoid(y.data);
          }
          dc.post_act[sdx] = y;
          x = std::move(y);
        }
        batch.reconstruction[static_cast<std::size_t>(i)] = x;
      },
      cfg_.threads);

  std::vector<Tensor<S>> drecon;
  MatX<S> dmu, dlog_var;
  const auto terms = vae_loss(batch, cfg_.kl_weight, &drecon, &dmu, &dlog_var);
  m.loss = static_cast<double>(terms.total);
  m.reconstruction = static_cast<double>(terms.reconstruction);
  m.kl = static_cast<double>(terms.kl);

  VecX<S> grad = VecX<S>::Zero(theta_.size());
  VecX<S> extra_grad = VecX<S>::Zero(extra_theta_.size());
  chunked_accumulate(v, grad, &extra_grad, [&](int i, VecX<S>& g,
                                               VecX<S>* eg) {
    auto& cache = caches[static_cast<std::size_t>(i)];
    auto& dc = dec_caches[static_cast<std::size_t>(i)];
    // Decoder backward.
    Tensor<S> d = drecon[static_cast<std::size_t>(i)];
    for (int sdx = static_cast<int>(dec_convs_.size()) - 1; sdx >= 0; --sdx) {
      const auto& post = dc.post_act[static_cast<std::size_t>(sdx)];
      if (sdx + 1 == static_cast<int>(dec_convs_.size())) {
        d.data = (d.data.array() * post.data.array() *
                  (S(1) - post.data.array()))
                     .matrix();
      } else {
        d.data = relu_backward(post.data, d.data);
      }
      Tensor<S> dup = dec_convs_[static_cast<std::size_t>(sdx)].backward(
          dc.patches[static_cast<std::size_t>(sdx)], d, extra_theta_.data(),
          eg->data(), true);
      d = upsample_nearest_backward(
          dup, dc.pre_up[static_cast<std::size_t>(sdx)].dims,
          dec_up_factors_[static_cast<std::size_t>(sdx)]);
    }
    VecX<S> dz =
        dec_fc_.backward(dc.z, d.data, extra_theta_.data(), eg->data());
    // Reparametrization: z = mu + exp(l/2) eps.
    VecX<S> dmu_i = dmu.row(i).transpose() + dz;
    VecX<S> dlv_i = dlog_var.row(i).transpose();
    for (int l = 0; l < batch.mu.cols(); ++l) {
      dlv_i[l] += dz[l] * epsilon(i, l) *
                  std::exp(batch.log_var(i, l) / S(2)) / S(2);
    }
    // mu head is the projection; log-variance head shares its hidden layer.
    VecX<S> dhidden =
        vae_logvar_.backward(cache.hidden, dlv_i, extra_theta_.data(),
                             eg->data());
    Tensor<S> dfmap = enc_.project_backward(dmu_i, cache, theta_, g);
    // Add the log-variance path through the shared hidden layer.
    VecX<S> dh_relu = relu_backward(cache.hidden, dhidden);
    // project_backward already walked fc1; replicate its tail for the extra
    // contribution.
    VecX<S> dpooled2(cache.pooled.size());
    {
      const auto& blk = enc_.layout().block("projection.fc1.w");
      dpooled2 = block_view(theta_, blk).transpose() * dh_relu;
      block_view(g, enc_.layout().block("projection.fc1.w")).noalias() +=
          dh_relu * cache.pooled.transpose();
      block_view(g, enc_.layout().block("projection.fc1.b")).col(0) += dh_relu;
    }
    Tensor<S> dfmap2 = global_avg_pool_backward(dpooled2, enc_.feature_dims());
    dfmap.data += dfmap2.data;
    enc_.encode_backward(dfmap, cache, theta_, g);
  });

  m.grad_norm = static_cast<double>(
      std::sqrt(grad.squaredNorm() + extra_grad.squaredNorm()));
  m.embedding_std = embedding_std(l2_normalize_rows(batch.mu));
  adam_.step(theta_, grad);
  extra_adam_.step(extra_theta_, extra_grad);
}

// ---------------------------------------------------------------------------

template <typename S>
void Pretrainer<S>::step_dpc(PretrainMetrics& m) {
  const int v = std::min(cfg_.batch_videos, data_->num_videos());
  const int clip_len = enc_.config().clip_len;
  const int blocks = cfg_.dpc_blocks;
  const int context = cfg_.dpc_context;
  const int horizon = blocks - context;
  const int span = blocks * clip_len * cfg_.aug.temporal_stride;
  const auto fd = enc_.feature_dims();
  const int cells = fd[2] * fd[3];

  // One long window per video, augmented with a single draw so every block
  // sees the same view transform.
  std::vector<std::vector<Tensor<S>>> block_clips(
      static_cast<std::size_t>(v));
  for (int b = 0; b < v; ++b) {
    const int video = sample_videos(1)[0];
    const auto& meta = data_->video(video);
    if (meta.frames < span) {
      throw ConfigError("video too short for the configured block count");
    }
    const int start = static_cast<int>(
        rng_.uniform_int(static_cast<std::uint64_t>(meta.frames - span + 1)));
    Tensor<S> window = data_->clip<S>(video, start, blocks * clip_len,
                                      cfg_.aug.temporal_stride);
    const AugmentationDraw draw =
        sample_augmentation(cfg_.aug, meta.height, meta.width, rng_);
    Tensor<S> aug = augment(window, draw);
    for (int blk = 0; blk < blocks; ++blk) {
      Tensor<S> clip = Tensor<S>::zeros(
          {3, clip_len, meta.height, meta.width});
      for (int c = 0; c < 3; ++c) {
        for (int t = 0; t < clip_len; ++t) {
          for (int y = 0; y < meta.height; ++y) {
            for (int x = 0; x < meta.width; ++x) {
              clip.at4(c, t, y, x) = aug.at4(c, blk * clip_len + t, y, x);
            }
          }
        }
      }
      block_clips[static_cast<std::size_t>(b)].push_back(std::move(clip));
    }
  }

  struct SampleState {
    std::vector<typename VideoEncoder<S>::ForwardCache> enc_caches;
    std::vector<MatX<S>> feats;  // per block, cells x C
    typename DpcHead<S>::SampleCache head_cache;
  };
  std::vector<SampleState> states(static_cast<std::size_t>(v));
  std::vector<std::vector<MatX<S>>> preds(static_cast<std::size_t>(v));
  std::vector<std::vector<MatX<S>>> futures(static_cast<std::size_t>(v));

  auto cells_of = [&](const Tensor<S>& fmap) {
    const Tensor<S> reduced = temporal_avg(fmap);
    MatX<S> mat(cells, fd[0]);
    for (int c = 0; c < fd[0]; ++c) {
      for (int h = 0; h < fd[2]; ++h) {
        for (int w = 0; w < fd[3]; ++w) {
          mat(h * fd[3] + w, c) = reduced.at3(c, h, w);
        }
      }
    }
    return mat;
  };

  parallel_for(
      v,
      [&](int i) {
        auto& st = states[static_cast<std::size_t>(i)];
        st.enc_caches.resize(static_cast<std::size_t>(blocks));
        for (int blk = 0; blk < blocks; ++blk) {
          const Tensor<S> fmap = enc_.encode(
              block_clips[static_cast<std::size_t>(i)]
                         [static_cast<std::size_t>(blk)],
              theta_, &st.enc_caches[static_cast<std::size_t>(blk)]);
          st.feats.push_back(cells_of(fmap));
        }
        preds[static_cast<std::size_t>(i)] = dpc_->rollout(
            st.feats, context, extra_theta_, &st.head_cache);
        futures[static_cast<std::size_t>(i)].assign(
            st.feats.begin() + context, st.feats.end());
      },
      cfg_.threads);

  std::vector<std::vector<MatX<S>>> dpreds, dfutures;
  m.loss = static_cast<double>(
      dpc_score<S>(preds, futures, cfg_.temperature, &dpreds, &dfutures));

  VecX<S> grad = VecX<S>::Zero(theta_.size());
  VecX<S> extra_grad = VecX<S>::Zero(extra_theta_.size());
  chunked_accumulate(v, grad, &extra_grad, [&](int i, VecX<S>& g,
                                               VecX<S>* eg) {
    auto& st = states[static_cast<std::size_t>(i)];
    const auto dcontext = dpc_->rollout_backward(
        st.head_cache, context, dpreds[static_cast<std::size_t>(i)],
        extra_theta_, *eg);
    auto backprop_cells = [&](const MatX<S>& dcells, int blk) {
      Tensor<S> dreduced = Tensor<S>::zeros({fd[0], fd[2], fd[3]});
      for (int c = 0; c < fd[0]; ++c) {
        for (int h = 0; h < fd[2]; ++h) {
          for (int w = 0; w < fd[3]; ++w) {
            dreduced.at3(c, h, w) = dcells(h * fd[3] + w, c);
          }
        }
      }
      const Tensor<S> dfmap = temporal_avg_backward(
          dreduced, std::vector<int>{fd[0], fd[1], fd[2], fd[3]});
      enc_.encode_backward(dfmap,
                           st.enc_caches[static_cast<std::size_t>(blk)],
                           theta_, g);
    };
    for (int t = 0; t < context; ++t) {
      backprop_cells(dcontext[static_cast<std::size_t>(t)], t);
    }
    for (int j = 0; j < horizon; ++j) {
      backprop_cells(dfutures[static_cast<std::size_t>(i)]
                             [static_cast<std::size_t>(j)],
                     context + j);
    }
  });

  m.grad_norm = static_cast<double>(
      std::sqrt(grad.squaredNorm() + extra_grad.squaredNorm()));
  // Collapse probe: normalized projection of the first block per sample.
  MatX<S> probe(v, enc_.config().projection_dim);
  for (int i = 0; i < v; ++i) {
    const Tensor<S> f = enc_.encode(
        block_clips[static_cast<std::size_t>(i)].front(), theta_);
    probe.row(i) = enc_.project(f, theta_).transpose();
  }
  m.embedding_std = embedding_std(l2_normalize_rows(probe));
  adam_.step(theta_, grad);
  extra_adam_.step(extra_theta_, extra_grad);
}

}  // namespace driverep

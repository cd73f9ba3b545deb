#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "driverep/core/kv_config.hpp"
#include "driverep/nn/adam.hpp"
#include "driverep/nn/checkpoint.hpp"
#include "driverep/nn/layers.hpp"
#include "driverep/nn/params.hpp"
#include "driverep/sim/world.hpp"

namespace driverep {

struct EncoderConfig {
  int clip_len = 4;    // T
  int channels = 3;    // RGB
  int frame_size = 64;
  std::vector<int> stage_channels = {32, 64, 128, 256};
  // Per-stage (t, h, w) strides; kernel is 3x3x3 with padding 1 throughout.
  std::vector<std::array<int, 3>> stage_strides = {
      {1, 2, 2}, {2, 2, 2}, {2, 2, 2}, {1, 2, 2}};
  int projection_dim = 128;     // D; full scale 2048
  int projection_hidden = 256;  // pool -> hidden -> D
  int predictor_hidden = 256;   // 0 = single linear layer
  double momentum = 0.99;       // target-network coefficient

  void validate() const;
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
  static EncoderConfig from_kv(const KeyValueConfig& kv,
                               const std::string& prefix = "encoder.");
};

// Output-shape contract carried by every checkpoint: the feature-map shape
// (C', T', H', W') of the last convolutional stage and the projection width.
struct ShapeContract {
  std::array<int, 4> feature_map{};
  int projection_dim = 0;

  bool operator==(const ShapeContract&) const = default;
  nlohmann::json to_json() const;
  static ShapeContract from_json(const nlohmann::json& j);
  std::string to_string() const;
};

// Converts a stacked-frame observation to a (C, T, H, W) tensor in [0, 1].
template <typename S>
Tensor<S> clip_to_tensor(const VideoClip& clip) {
  const int t_len = clip.length();
  const int h = clip.height();
  const int w = clip.width();
  Tensor<S> x = Tensor<S>::zeros({3, t_len, h, w});
  for (int t = 0; t < t_len; ++t) {
    const auto& f = clip.frames[static_cast<std::size_t>(t)];
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
          x.at4(c, t, y, xx) = static_cast<S>(f.at(c, y, xx)) / S(255);
        }
      }
    }
  }
  return x;
}

// Spatiotemporal convolutional encoder: conv (3x3x3) + ReLU stages with the
// configured strides, a pooled two-layer projection head, and an optional
// predictor head used only by the bootstrap training scheme.
template <typename S>
class VideoEncoder {
 public:
  struct ForwardCache {
    std::vector<MatX<S>> patches;       // per stage
    std::vector<Tensor<S>> activations;  // post-ReLU outputs per stage
    Tensor<S> input;
    // projection
    VecX<S> pooled, hidden, embedding;
    // predictor
    VecX<S> pred_in, pred_hidden, pred_out;
  };

  explicit VideoEncoder(EncoderConfig config) : cfg_(std::move(config)) {
    cfg_.validate();
    std::array<int, 3> size{cfg_.clip_len, cfg_.frame_size, cfg_.frame_size};
    int in_ch = cfg_.channels;
    for (std::size_t s = 0; s < cfg_.stage_channels.size(); ++s) {
      Conv3dSpec<S> conv;
      conv.build(layout_, "backbone.stage" + std::to_string(s), in_ch, size,
                 cfg_.stage_channels[s], {3, 3, 3}, cfg_.stage_strides[s],
                 {1, 1, 1});
      size = conv.out_size;
      in_ch = cfg_.stage_channels[s];
      stages_.push_back(conv);
    }
    feature_dims_ = {in_ch, size[0], size[1], size[2]};
    proj_fc1_.build(layout_, "projection.fc1", in_ch, cfg_.projection_hidden);
    proj_fc2_.build(layout_, "projection.fc2", cfg_.projection_hidden,
                    cfg_.projection_dim);
    backbone_projection_size_ = layout_.total_size();
    if (cfg_.predictor_hidden > 0) {
      pred_fc1_.build(layout_, "predictor.fc1", cfg_.projection_dim,
                      cfg_.predictor_hidden);
      pred_fc2_.build(layout_, "predictor.fc2", cfg_.predictor_hidden,
                      cfg_.projection_dim);
    } else {
      pred_fc1_.build(layout_, "predictor.fc1", cfg_.projection_dim,
                      cfg_.projection_dim);
    }
  }

  const EncoderConfig& config() const { return cfg_; }
  const ParamLayout& layout() const { return layout_; }
  // Size of the exported (backbone + projection) prefix of the layout.
  Eigen::Index frozen_size() const { return backbone_projection_size_; }

  ShapeContract contract() const {
    ShapeContract c;
    c.feature_map = {feature_dims_[0], feature_dims_[1], feature_dims_[2],
                     feature_dims_[3]};
    c.projection_dim = cfg_.projection_dim;
    return c;
  }

  std::vector<int> feature_dims() const { return feature_dims_; }

  VecX<S> init_params(std::uint64_t seed) const {
    return init_he_normal<S>(layout_, seed);
  }

  Tensor<S> encode(const Tensor<S>& clip, const VecX<S>& theta,
                   ForwardCache* cache = nullptr) const {
    if (clip.rank() != 4 || clip.dim(0) != cfg_.channels ||
        clip.dim(1) != cfg_.clip_len || clip.dim(2) != cfg_.frame_size ||
        clip.dim(3) != cfg_.frame_size) {
      throw ContractError("encode: clip shape " + clip.shape_string() +
                          " does not match encoder config");
    }
    if (cache) {
      cache->patches.resize(stages_.size());
      cache->activations.resize(stages_.size());
      cache->input = clip;
    }
    Tensor<S> x = clip;
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      Tensor<S> y = stages_[s].forward(x, theta.data(),
                                       cache ? &cache->patches[s] : nullptr);
      relu_inplace(y.data);
      if (cache) cache->activations[s] = y;
      x = std::move(y);
    }
    return x;
  }

  // Gradient flow back through the conv stack. dfeature is w.r.t. the
  // post-ReLU output of the last stage.
  Tensor<S> encode_backward(const Tensor<S>& dfeature,
                            const ForwardCache& cache, const VecX<S>& theta,
                            VecX<S>& grad, bool need_dinput = false) const {
    Tensor<S> d = dfeature;
    for (int s = static_cast<int>(stages_.size()) - 1; s >= 0; --s) {
      d.data = relu_backward(cache.activations[static_cast<std::size_t>(s)].data,
                             d.data);
      const bool need_dx = s > 0 || need_dinput;
      d = stages_[static_cast<std::size_t>(s)].backward(
          cache.patches[static_cast<std::size_t>(s)], d, theta.data(),
          grad.data(), need_dx);
      if (!need_dx) break;
    }
    return d;
  }

  VecX<S> project(const Tensor<S>& fmap, const VecX<S>& theta,
                  ForwardCache* cache = nullptr) const {
    if (fmap.dims != feature_dims_) {
      throw ContractError("project: feature map shape " + fmap.shape_string() +
                          " does not match contract");
    }
    VecX<S> pooled = global_avg_pool(fmap);
    VecX<S> hidden = proj_fc1_.forward(pooled, theta.data());
    relu_inplace(hidden);
    VecX<S> z = proj_fc2_.forward(hidden, theta.data());
    if (cache) {
      cache->pooled = pooled;
      cache->hidden = hidden;
      cache->embedding = z;
    }
    return z;
  }

  Tensor<S> project_backward(const VecX<S>& dz, const ForwardCache& cache,
                             const VecX<S>& theta, VecX<S>& grad) const {
    VecX<S> dh = proj_fc2_.backward(cache.hidden, dz, theta.data(),
                                    grad.data());
    dh = relu_backward(cache.hidden, dh);
    VecX<S> dpooled =
        proj_fc1_.backward(cache.pooled, dh, theta.data(), grad.data());
    return global_avg_pool_backward(dpooled, feature_dims_);
  }

  VecX<S> predict(const VecX<S>& z, const VecX<S>& theta,
                  ForwardCache* cache = nullptr) const {
    if (z.size() != cfg_.projection_dim) {
      throw ContractError("predict: embedding size mismatch");
    }
    if (cfg_.predictor_hidden <= 0) {
      VecX<S> out = pred_fc1_.forward(z, theta.data());
      if (cache) {
        cache->pred_in = z;
        cache->pred_out = out;
      }
      return out;
    }
    VecX<S> h = pred_fc1_.forward(z, theta.data());
    relu_inplace(h);
    VecX<S> out = pred_fc2_.forward(h, theta.data());
    if (cache) {
      cache->pred_in = z;
      cache->pred_hidden = h;
      cache->pred_out = out;
    }
    return out;
  }

  VecX<S> predict_backward(const VecX<S>& dout, const ForwardCache& cache,
                           const VecX<S>& theta, VecX<S>& grad) const {
    if (cfg_.predictor_hidden <= 0) {
      return pred_fc1_.backward(cache.pred_in, dout, theta.data(),
                                grad.data());
    }
    VecX<S> dh = pred_fc2_.backward(cache.pred_hidden, dout, theta.data(),
                                    grad.data());
    dh = relu_backward(cache.pred_hidden, dh);
    return pred_fc1_.backward(cache.pred_in, dh, theta.data(), grad.data());
  }

 private:
  EncoderConfig cfg_;
  ParamLayout layout_;
  std::vector<Conv3dSpec<S>> stages_;
  LinearSpec<S> proj_fc1_, proj_fc2_;
  LinearSpec<S> pred_fc1_, pred_fc2_;
  std::vector<int> feature_dims_;
  Eigen::Index backbone_projection_size_ = 0;
};

// A loaded, immutable encoder: parameters plus the verified contract.
struct FrozenEncoderTag {};

template <typename S>
struct LoadedEncoder {
  EncoderConfig config;
  VecX<S> theta;  // backbone + projection prefix (predictor zeroed)
  ShapeContract contract;
  std::string scheme;  // moco | byol | dpc | vae | external
  bool frozen = true;
};

void save_encoder_checkpoint(const std::filesystem::path& path,
                             const EncoderConfig& config,
                             const ShapeContract& contract,
                             const std::string& scheme,
                             const ParamLayout& layout,
                             const std::vector<double>& theta, int dtype);

// Convenience wrappers declared in src/encoder_io.cpp.
template <typename S>
void save_encoder(const std::filesystem::path& path,
                  const VideoEncoder<S>& enc, const VecX<S>& theta,
                  const std::string& scheme) {
  std::vector<double> values(static_cast<std::size_t>(enc.frozen_size()));
  for (Eigen::Index i = 0; i < enc.frozen_size(); ++i) {
    values[static_cast<std::size_t>(i)] = static_cast<double>(theta[i]);
  }
  save_encoder_checkpoint(path, enc.config(), enc.contract(), scheme,
                          enc.layout(), values, dtype_tag<S>());
}

// Loads and verifies a checkpoint: rebuilds the encoder from the stored
// config, fills the parameter prefix, checks the declared shape contract
// with a dry forward pass.
template <typename S>
LoadedEncoder<S> load_encoder(const std::filesystem::path& path) {
  const RawCheckpoint raw = read_checkpoint_file(path);
  if (raw.header.value("kind", "") != "encoder") {
    throw ContractError("checkpoint is not an encoder: " + path.string());
  }
  LoadedEncoder<S> out;
  out.config = EncoderConfig::from_json(raw.header.at("config"));
  out.scheme = raw.header.value("scheme", "external");
  const ShapeContract declared =
      ShapeContract::from_json(raw.header.at("contract"));

  VideoEncoder<S> enc(out.config);
  out.theta = VecX<S>::Zero(enc.layout().total_size());
  for (const auto& block : enc.layout().blocks()) {
    if (block.offset >= enc.frozen_size()) continue;  // predictor not stored
    const std::vector<double>* values = raw.find(block.name);
    if (!values) {
      throw CorruptFileError("checkpoint missing section '" + block.name +
                             "': " + path.string());
    }
    if (static_cast<Eigen::Index>(values->size()) != block.size()) {
      throw ContractError("checkpoint section '" + block.name +
                          "' has wrong size: " + path.string());
    }
    for (Eigen::Index i = 0; i < block.size(); ++i) {
      out.theta[block.offset + i] =
          static_cast<S>((*values)[static_cast<std::size_t>(i)]);
    }
  }

  // Dry forward pass against the declared contract.
  const ShapeContract actual = enc.contract();
  if (!(actual == declared)) {
    throw ContractError("checkpoint contract " + declared.to_string() +
                        " does not match architecture " + actual.to_string() +
                        ": " + path.string());
  }
  Tensor<S> probe = Tensor<S>::zeros({out.config.channels, out.config.clip_len,
                                      out.config.frame_size,
                                      out.config.frame_size});
  const Tensor<S> fmap = enc.encode(probe, out.theta);
  if (fmap.dims != std::vector<int>{declared.feature_map[0],
                                    declared.feature_map[1],
                                    declared.feature_map[2],
                                    declared.feature_map[3]}) {
    throw ContractError("dry forward pass violates declared contract: " +
                        path.string());
  }
  const VecX<S> z = enc.project(fmap, out.theta);
  if (z.size() != declared.projection_dim) {
    throw ContractError("projection width violates declared contract: " +
                        path.string());
  }
  out.contract = declared;
  out.frozen = true;
  return out;
}

}  // namespace driverep

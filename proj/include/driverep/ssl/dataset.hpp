#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "driverep/core/image.hpp"
#include "driverep/core/rng.hpp"
#include "driverep/nn/tensor.hpp"
#include "driverep/sim/world.hpp"

namespace driverep {

// On-disk clip corpus:
//   root/video_<id>/frame_<n>.png   (n = 000000, 000001, ...)
//   root/video_<id>/meta.json       {"id","frames","width","height","fps"}
// Videos are small at desk scale, so frames are decoded once and held in
// memory.
struct VideoMeta {
  std::string id;
  int frames = 0;
  int width = 0;
  int height = 0;
  double fps = 10.0;
};

class ClipDataset {
 public:
  static ClipDataset open(const std::filesystem::path& root);

  // Every video must offer at least clip_len * stride frames; ids unique.
  void validate(int clip_len, int stride) const;

  int num_videos() const { return static_cast<int>(videos_.size()); }
  const VideoMeta& video(int i) const {
    return videos_.at(static_cast<std::size_t>(i));
  }
  const FrameU8& frame(int video, int index) const {
    return frames_.at(static_cast<std::size_t>(video))
        .at(static_cast<std::size_t>(index));
  }
  const std::filesystem::path& root() const { return root_; }

  template <typename S>
  Tensor<S> clip(int video, int start, int len, int stride) const {
    const auto& meta = this->video(video);
    Tensor<S> x = Tensor<S>::zeros({3, len, meta.height, meta.width});
    for (int t = 0; t < len; ++t) {
      const FrameU8& f = frame(video, start + t * stride);
      for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < meta.height; ++y) {
          for (int xx = 0; xx < meta.width; ++xx) {
            x.at4(c, t, y, xx) = static_cast<S>(f.at(c, y, xx)) / S(255);
          }
        }
      }
    }
    return x;
  }

 private:
  std::filesystem::path root_;
  std::vector<VideoMeta> videos_;
  std::vector<std::vector<FrameU8>> frames_;
};

// View-generation parameters. One draw augments a whole clip: the same crop
// window, flip decision and color jitter apply to all frames.
struct AugmentationParams {
  double crop_min = 0.75;  // crop side as a fraction of the frame side
  double crop_max = 1.0;
  double flip_prob = 0.5;
  double brightness = 0.2;  // additive delta, drawn in [-b, b]
  double contrast = 0.2;    // factor drawn in [1-c, 1+c]
  double saturation = 0.2;  // factor drawn in [1-s, 1+s]
  int temporal_stride = 1;

  void validate() const;
  static AugmentationParams identity() {
    AugmentationParams p;
    p.crop_min = p.crop_max = 1.0;
    p.flip_prob = 0.0;
    p.brightness = p.contrast = p.saturation = 0.0;
    return p;
  }
};

struct AugmentationDraw {
  int crop_x0 = 0;
  int crop_y0 = 0;
  int crop_side = 0;
  bool flip = false;
  double brightness_delta = 0.0;
  double contrast_factor = 1.0;
  double saturation_factor = 1.0;
};

AugmentationDraw sample_augmentation(const AugmentationParams& params,
                                     int height, int width, Rng& rng);

// Applies one draw to every frame of a (3, T, H, W) clip in [0, 1]. The
// crop is resampled bilinearly back to the input resolution; a full-frame
// crop with identity jitter returns the input bit-exactly.
template <typename S>
Tensor<S> augment(const Tensor<S>& clip, const AugmentationDraw& draw);

// Two clips from the same video, independently augmented; temporal windows
// come from the rng and may overlap.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> sample_clip_pair(
    const ClipDataset& data, int video, int clip_len,
    const AugmentationParams& params, Rng& rng);

// Renders driving episodes under a scripted noisy-centerline policy and
// writes them as a corpus. Deterministic under seed.
void generate_synthetic_corpus(const std::filesystem::path& root,
                               int n_videos, int length, std::uint64_t seed,
                               const WorldConfig& base_config);

// Fingerprint over the manifest files, used for byte-identity checks.
std::uint64_t corpus_manifest_hash(const std::filesystem::path& root);

// ---------------------------------------------------------------------------
// Template definitions.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> augment(const Tensor<S>& clip, const AugmentationDraw& draw) {
  const int t_len = clip.dim(1);
  const int h = clip.dim(2);
  const int w = clip.dim(3);
  const bool identity_crop =
      draw.crop_side == h && h == w && draw.crop_x0 == 0 && draw.crop_y0 == 0;
  Tensor<S> out = Tensor<S>::zeros(clip.dims);

  for (int t = 0; t < t_len; ++t) {
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          S v;
          if (identity_crop) {
            v = clip.at4(c, t, y, x);
          } else {
            // Bilinear sample of the crop window, mapped back to (h, w).
            const double sy = draw.crop_y0 +
                              (y + 0.5) * draw.crop_side / h - 0.5;
            const double sx = draw.crop_x0 +
                              (x + 0.5) * draw.crop_side / w - 0.5;
            const int y0 = static_cast<int>(std::floor(sy));
            const int x0 = static_cast<int>(std::floor(sx));
            const double fy = sy - y0;
            const double fx = sx - x0;
            auto sample = [&](int yy, int xx) -> S {
              yy = std::clamp(yy, 0, h - 1);
              xx = std::clamp(xx, 0, w - 1);
              return clip.at4(c, t, yy, xx);
            };
            v = static_cast<S>(
                (1 - fy) * ((1 - fx) * sample(y0, x0) + fx * sample(y0, x0 + 1)) +
                fy * ((1 - fx) * sample(y0 + 1, x0) + fx * sample(y0 + 1, x0 + 1)));
          }
          const int ox = draw.flip ? (w - 1 - x) : x;
          out.at4(c, t, y, ox) = v;
        }
      }
    }
  }

  const bool identity_jitter = draw.brightness_delta == 0.0 &&
                               draw.contrast_factor == 1.0 &&
                               draw.saturation_factor == 1.0;
  if (!identity_jitter) {
    for (int t = 0; t < t_len; ++t) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const S r = out.at4(0, t, y, x);
          const S g = out.at4(1, t, y, x);
          const S b = out.at4(2, t, y, x);
          const S gray = (r + g + b) / S(3);
          for (int c = 0; c < 3; ++c) {
            S v = out.at4(c, t, y, x);
            v = gray + static_cast<S>(draw.saturation_factor) * (v - gray);
            v = S(0.5) + static_cast<S>(draw.contrast_factor) * (v - S(0.5));
            v += static_cast<S>(draw.brightness_delta);
            out.at4(c, t, y, x) = std::clamp(v, S(0), S(1));
          }
        }
      }
    }
  }
  return out;
}

template <typename S>
std::pair<Tensor<S>, Tensor<S>> sample_clip_pair(
    const ClipDataset& data, int video, int clip_len,
    const AugmentationParams& params, Rng& rng) {
  params.validate();
  const auto& meta = data.video(video);
  const int span = clip_len * params.temporal_stride;
  if (meta.frames < span) {
    throw ConfigError("video '" + meta.id + "' too short for clip length " +
                      std::to_string(clip_len) + " at stride " +
                      std::to_string(params.temporal_stride));
  }
  auto draw_clip = [&]() {
    const int max_start = meta.frames - span;
    const int start =
        static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_start + 1)));
    Tensor<S> raw = data.clip<S>(video, start, clip_len,
                                 params.temporal_stride);
    const AugmentationDraw d =
        sample_augmentation(params, meta.height, meta.width, rng);
    return augment(raw, d);
  };
  Tensor<S> a = draw_clip();
  Tensor<S> b = draw_clip();
  return {std::move(a), std::move(b)};
}

}  // namespace driverep

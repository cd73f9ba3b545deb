#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include <json.hpp>

#include "driverep/core/errors.hpp"
#include "driverep/core/hash.hpp"
#include "driverep/ssl/dataset.hpp"

namespace driverep {

namespace {

std::string frame_name(int n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06d.png", n);
  return buf;
}

double wrap_pi(double a) {
  while (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
  while (a < -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

}  // namespace

void AugmentationParams::validate() const {
  if (!(crop_min > 0.0) || crop_min > crop_max || crop_max > 1.0) {
    throw ConfigError("crop scale range must satisfy 0 < min <= max <= 1");
  }
  if (flip_prob < 0.0 || flip_prob > 1.0) {
    throw ConfigError("flip probability must be in [0, 1]");
  }
  if (brightness < 0.0 || contrast < 0.0 || saturation < 0.0) {
    throw ConfigError("jitter deltas must be >= 0");
  }
  if (temporal_stride < 1) throw ConfigError("temporal stride must be >= 1");
}

AugmentationDraw sample_augmentation(const AugmentationParams& params,
                                     int height, int width, Rng& rng) {
  AugmentationDraw d;
  const int side = std::min(height, width);
  const double scale = rng.uniform(params.crop_min, params.crop_max);
  d.crop_side = std::max(2, static_cast<int>(std::lround(scale * side)));
  d.crop_side = std::min(d.crop_side, side);
  d.crop_y0 = static_cast<int>(
      rng.uniform_int(static_cast<std::uint64_t>(height - d.crop_side + 1)));
  d.crop_x0 = static_cast<int>(
      rng.uniform_int(static_cast<std::uint64_t>(width - d.crop_side + 1)));
  d.flip = rng.bernoulli(params.flip_prob);
  d.brightness_delta = rng.uniform(-params.brightness, params.brightness);
  d.contrast_factor = rng.uniform(1.0 - params.contrast, 1.0 + params.contrast);
  d.saturation_factor =
      rng.uniform(1.0 - params.saturation, 1.0 + params.saturation);
  return d;
}

ClipDataset ClipDataset::open(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) {
    throw IoError("clip dataset root does not exist: " + root.string());
  }
  ClipDataset data;
  data.root_ = root;
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory() &&
        entry.path().filename().string().rfind("video_", 0) == 0) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) {
    throw CorruptFileError("no video_* directories under " + root.string());
  }
  for (const auto& dir : dirs) {
    const auto meta_path = dir / "meta.json";
    std::ifstream in(meta_path);
    if (!in) {
      throw CorruptFileError("missing manifest: " + meta_path.string());
    }
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception&) {
      throw CorruptFileError("invalid manifest: " + meta_path.string());
    }
    VideoMeta meta;
    meta.id = j.value("id", dir.filename().string());
    meta.frames = j.at("frames").get<int>();
    meta.width = j.at("width").get<int>();
    meta.height = j.at("height").get<int>();
    meta.fps = j.value("fps", 10.0);
    std::vector<FrameU8> frames;
    frames.reserve(static_cast<std::size_t>(meta.frames));
    for (int n = 0; n < meta.frames; ++n) {
      FrameU8 f = read_png(dir / frame_name(n));
      if (f.width != meta.width || f.height != meta.height) {
        throw CorruptFileError("frame size mismatch in " + dir.string());
      }
      frames.push_back(std::move(f));
    }
    data.videos_.push_back(meta);
    data.frames_.push_back(std::move(frames));
  }
  return data;
}

void ClipDataset::validate(int clip_len, int stride) const {
  std::set<std::string> ids;
  for (const auto& v : videos_) {
    if (!ids.insert(v.id).second) {
      throw ContractError("duplicate video id: " + v.id);
    }
    if (v.frames < clip_len * stride) {
      throw ConfigError("video '" + v.id + "' shorter than clip span");
    }
  }
}

void generate_synthetic_corpus(const std::filesystem::path& root,
                               int n_videos, int length, std::uint64_t seed,
                               const WorldConfig& base_config) {
  if (n_videos < 1 || length < 1) {
    throw ConfigError("corpus needs >= 1 video and >= 1 frame");
  }
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec || !std::filesystem::is_directory(root)) {
    throw IoError("cannot create corpus root: " + root.string());
  }
  const RouteId cycle[3] = {RouteId::kStraight, RouteId::kGentleCurve,
                            RouteId::kSCurve};
  for (int v = 0; v < n_videos; ++v) {
    WorldConfig cfg = base_config;
    cfg.route = cycle[v % 3];
    cfg.max_steps = std::max(length, 2);
    World world(cfg);
    Rng rng(Rng::split_mix(seed + static_cast<std::uint64_t>(v) * 1000003ULL));
    world.reset(rng.next_u64());

    const auto dir = root / ("video_" + std::to_string(v));
    std::filesystem::create_directories(dir);

    // Noisy centerline follower: proportional pull toward the lane center
    // blended with an Ornstein-Uhlenbeck wander so offsets vary.
    double noise = 0.0;
    int written = 0;
    write_png(dir / frame_name(written++), world.observation().frames.back());
    while (written < length) {
      const auto q = world.route().lateral_offset(world.state().x,
                                                  world.state().y);
      const double tangent = world.route().pose_at(q.arc_pos).heading;
      const double heading_err = wrap_pi(world.state().heading - tangent);
      noise = 0.9 * noise + 0.25 * rng.gaussian();
      const double steering =
          std::clamp(-0.5 * q.lateral - 1.8 * heading_err + noise, -1.0, 1.0);
      const StepResult r = world.step(steering);
      write_png(dir / frame_name(written++), r.observation.frames.back());
      if (r.done && written < length) {
        world.reset(rng.next_u64());
      }
    }

    nlohmann::json meta = {{"id", "video_" + std::to_string(v)},
                           {"frames", length},
                           {"width", cfg.frame_size},
                           {"height", cfg.frame_size},
                           {"fps", 1.0 / cfg.dt}};
    std::ofstream out(dir / "meta.json");
    if (!out) throw IoError("cannot write manifest in " + dir.string());
    out << meta.dump(2) << "\n";
  }
}

std::uint64_t corpus_manifest_hash(const std::filesystem::path& root) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::vector<std::filesystem::path> files;
  for (const auto& entry :
       std::filesystem::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const std::string rel =
        std::filesystem::relative(f, root).generic_string();
    h = fnv1a64(rel.data(), rel.size(), h);
    std::ifstream in(f, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    h = fnv1a64(bytes.data(), bytes.size(), h);
  }
  return h;
}

}  // namespace driverep

#include "driverep/ssl/pretrain.hpp"

namespace driverep {

Scheme parse_scheme(const std::string& name) {
  if (name == "moco") return Scheme::kMoco;
  if (name == "byol") return Scheme::kByol;
  if (name == "dpc") return Scheme::kDpc;
  if (name == "vae") return Scheme::kVae;
  throw ConfigError("unknown scheme: '" + name +
                    "' (expected moco, byol, dpc or vae)");
}

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::kMoco:
      return "moco";
    case Scheme::kByol:
      return "byol";
    case Scheme::kDpc:
      return "dpc";
    case Scheme::kVae:
      return "vae";
  }
  return "?";
}

void PretrainConfig::validate() const {
  if (batch_videos < 2) throw ConfigError("pretrain batch needs >= 2 videos");
  if (steps < 1) throw ConfigError("pretrain steps must be >= 1");
  if (queue_size < 0) throw ConfigError("queue size must be >= 0");
  if (temperature <= 0) throw ConfigError("temperature must be positive");
  if (dpc_blocks < 2 || dpc_context < 1 || dpc_context >= dpc_blocks) {
    throw ConfigError("dpc needs context >= 1 and blocks > context");
  }
  aug.validate();
}

PretrainConfig PretrainConfig::from_kv(const KeyValueConfig& kv,
                                       const std::string& p) {
  PretrainConfig c;
  c.scheme = parse_scheme(kv.get_string(p + "scheme", scheme_name(c.scheme)));
  c.batch_videos =
      static_cast<int>(kv.get_int(p + "batch_videos", c.batch_videos));
  c.steps = static_cast<int>(kv.get_int(p + "steps", c.steps));
  c.lr = kv.get_real(p + "lr", c.lr);
  c.queue_size = static_cast<int>(kv.get_int(p + "queue_size", c.queue_size));
  c.kl_weight = kv.get_real(p + "kl_weight", c.kl_weight);
  c.temperature = kv.get_real(p + "temperature", c.temperature);
  c.byol_symmetrize =
      kv.get_bool(p + "byol_symmetrize", c.byol_symmetrize);
  c.dpc_blocks = static_cast<int>(kv.get_int(p + "dpc_blocks", c.dpc_blocks));
  c.dpc_context =
      static_cast<int>(kv.get_int(p + "dpc_context", c.dpc_context));
  c.seed = static_cast<std::uint64_t>(kv.get_int(p + "seed", 0));
  c.aug.crop_min = kv.get_real(p + "aug_crop_min", c.aug.crop_min);
  c.aug.crop_max = kv.get_real(p + "aug_crop_max", c.aug.crop_max);
  c.aug.flip_prob = kv.get_real(p + "aug_flip_prob", c.aug.flip_prob);
  c.aug.brightness = kv.get_real(p + "aug_brightness", c.aug.brightness);
  c.aug.contrast = kv.get_real(p + "aug_contrast", c.aug.contrast);
  c.aug.saturation = kv.get_real(p + "aug_saturation", c.aug.saturation);
  c.aug.temporal_stride = static_cast<int>(
      kv.get_int(p + "aug_temporal_stride", c.aug.temporal_stride));
  c.threads = static_cast<int>(kv.get_int(p + "threads", c.threads));
  c.validate();
  return c;
}

}  // namespace driverep

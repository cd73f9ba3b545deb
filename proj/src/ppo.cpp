#include "driverep/rl/ppo.hpp"

namespace driverep {

void PpoConfig::validate() const {
  if (gamma <= 0.0 || gamma > 1.0) throw ConfigError("gamma must be in (0, 1]");
  if (lambda <= 0.0 || lambda > 1.0) {
    throw ConfigError("lambda must be in (0, 1]");
  }
  if (clip_eps <= 0.0) throw ConfigError("clip epsilon must be positive");
  if (vf_clip <= 0.0) throw ConfigError("vf clip must be positive");
  if (sgd_iters < 1) throw ConfigError("sgd iterations must be >= 1");
  if (minibatch < 1) throw ConfigError("minibatch must be >= 1");
  if (n_workers < 1) throw ConfigError("need >= 1 rollout worker");
  if (fragment_len < 1) throw ConfigError("fragment length must be >= 1");
  if (batch_size < fragment_len || batch_size % fragment_len != 0) {
    throw ConfigError("batch size must be a multiple of the fragment length");
  }
  if (kl_target <= 0.0) throw ConfigError("kl target must be positive");
}

PpoConfig PpoConfig::from_kv(const KeyValueConfig& kv, const std::string& p) {
  PpoConfig c;
  c.gamma = kv.get_real(p + "gamma", c.gamma);
  c.lambda = kv.get_real(p + "lambda", c.lambda);
  c.clip_eps = kv.get_real(p + "clip_eps", c.clip_eps);
  c.vf_clip = kv.get_real(p + "vf_clip", c.vf_clip);
  c.vf_coef = kv.get_real(p + "vf_coef", c.vf_coef);
  c.kl_coef_init = kv.get_real(p + "kl_coef", c.kl_coef_init);
  c.kl_target = kv.get_real(p + "kl_target", c.kl_target);
  c.sgd_iters = static_cast<int>(kv.get_int(p + "sgd_iters", c.sgd_iters));
  c.minibatch = static_cast<int>(kv.get_int(p + "minibatch", c.minibatch));
  c.lr = kv.get_real(p + "lr", c.lr);
  c.entropy_coef = kv.get_real(p + "entropy_coef", c.entropy_coef);
  c.n_workers = static_cast<int>(kv.get_int(p + "n_workers", c.n_workers));
  c.fragment_len =
      static_cast<int>(kv.get_int(p + "fragment_len", c.fragment_len));
  c.batch_size = static_cast<int>(kv.get_int(p + "batch_size", c.batch_size));
  c.normalize_advantages =
      kv.get_bool(p + "normalize_advantages", c.normalize_advantages);
  c.reg_l1 = kv.get_real(p + "reg_l1", c.reg_l1);
  c.reg_l2 = kv.get_real(p + "reg_l2", c.reg_l2);
  c.validate();
  return c;
}

}  // namespace driverep

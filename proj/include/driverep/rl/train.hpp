#pragma once

#include <cstring>
#include <memory>
#include <optional>
#include <vector>

#include "driverep/core/hash.hpp"
#include "driverep/core/parallel.hpp"
#include "driverep/encoder/encoder.hpp"
#include "driverep/heads/heads.hpp"
#include "driverep/rl/ppo.hpp"
#include "driverep/sim/world.hpp"

namespace driverep {

struct TrainSpec {
  PpoConfig ppo;
  WorldConfig world;
  HeadVariant variant;
  int n_actions = 1;  // steering only; 2 adds the (autopilot-ignored) slot
  int episodes = 300;
  std::uint64_t seed = 0;
  bool end_to_end = false;
  int threads = 0;
  bool serial = false;
};

struct IterationRow {
  int iteration = 0;
  int episodes_done = 0;
  double mean_reward = 0.0;
  double mean_steps = 0.0;
  double mean_invasions = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double kl = 0.0;
  double kl_coef = 0.0;
};

struct TrainResult {
  std::vector<EpisodeStats> episodes;
  std::vector<IterationRow> iterations;
  std::uint64_t encoder_hash_before = 0;
  std::uint64_t encoder_hash_after = 0;
};

template <typename S>
std::uint64_t hash_params(const VecX<S>& theta) {
  return fnv1a64(theta.data(),
                 static_cast<std::size_t>(theta.size()) * sizeof(S));
}

// Synchronous PPO over parallel simulator workers. Only head/actor/critic
// parameters train unless end_to_end is set; the encoder is then a second
// optimizer group.
template <typename S>
class PpoTrainer {
 public:
  PpoTrainer(const TrainSpec& spec, const LoadedEncoder<S>& encoder)
      : spec_(spec),
        enc_model_(encoder.config),
        enc_theta_(VecX<S>::Zero(enc_model_.layout().total_size())),
        policy_(spec.variant, encoder.contract, spec.n_actions) {
    spec_.ppo.validate();
    spec_.world.validate();
    if (spec_.serial) spec_.threads = 1;
    enc_theta_.head(encoder.theta.size()) = encoder.theta;
    if (spec_.end_to_end && encoder.frozen) {
      throw ContractError("end-to-end training requires unfrozen parameters");
    }
    policy_theta_ = policy_.init_params(Rng::split_mix(spec_.seed ^ 0xACC01ADEULL));
    policy_adam_ = Adam<S>(spec_.ppo.lr);
    policy_adam_.register_params(policy_theta_.size());
    if (spec_.end_to_end) {
      encoder_adam_ = Adam<S>(spec_.ppo.lr);
      encoder_adam_->register_params(enc_theta_.size());
    }
    kl_coef_ = spec_.ppo.kl_coef_init;
    learner_rng_ = Rng(Rng::split_mix(spec_.seed ^ 0x1ea44e11c0ffeeULL));

    const int workers = spec_.ppo.n_workers;
    Rng seeder(Rng::split_mix(spec_.seed));
    for (int w = 0; w < workers; ++w) {
      workers_.push_back(std::make_unique<WorkerState>(spec_.world,
                                                       seeder.fork(static_cast<std::uint64_t>(w) + 1)));
    }
  }

  TrainResult run() {
    TrainResult result;
    result.encoder_hash_before = hash_params(enc_theta_);
    int iteration = 0;
    while (static_cast<int>(result.episodes.size()) < spec_.episodes) {
      ++iteration;
      Batch batch = collect_batch(result.episodes);
      IterationRow row = update(batch);
      row.iteration = iteration;
      row.episodes_done = static_cast<int>(result.episodes.size());
      const std::size_t recent =
          std::min<std::size_t>(result.episodes.size(), 32);
      if (recent > 0) {
        double r = 0, st = 0, inv = 0;
        for (std::size_t i = result.episodes.size() - recent;
             i < result.episodes.size(); ++i) {
          r += result.episodes[i].total_reward;
          st += result.episodes[i].steps;
          inv += result.episodes[i].lane_invasions;
        }
        row.mean_reward = r / static_cast<double>(recent);
        row.mean_steps = st / static_cast<double>(recent);
        row.mean_invasions = inv / static_cast<double>(recent);
      }
      result.iterations.push_back(row);
    }
    result.episodes.resize(static_cast<std::size_t>(spec_.episodes));
    result.encoder_hash_after = hash_params(enc_theta_);
    return result;
  }

  const VecX<S>& policy_params() const { return policy_theta_; }
  const VecX<S>& encoder_params() const { return enc_theta_; }
  const PolicyNet<S>& policy() const { return policy_; }
  const VideoEncoder<S>& encoder_model() const { return enc_model_; }

  // Deterministic evaluation helper: action = mu, no sampling.
  EpisodeStats evaluate_episode(std::uint64_t seed,
                                std::vector<TraceRow>* trace = nullptr) const {
    return rollout_episode(
        [&](const VideoClip& obs) {
          const HeadInput<S> in = featurize(obs);
          const ActorOutput<S> a = policy_.actor(in, policy_theta_);
          return static_cast<double>(a.mu[0]);
        },
        seed, spec_.world, trace);
  }

  HeadInput<S> featurize(const VideoClip& obs) const {
    const Tensor<S> clip = clip_to_tensor<S>(obs);
    const Tensor<S> fmap = enc_model_.encode(clip, enc_theta_);
    VecX<S> projection;
    if (spec_.variant.kind == HeadKind::kDirectProjection1d) {
      projection = enc_model_.project(fmap, enc_theta_);
    }
    return adapt_features(spec_.variant.kind, fmap, projection);
  }

 private:
  struct Transition {
    HeadInput<S> features;     // cached when the encoder is frozen
    Tensor<S> clip;            // kept only in end-to-end mode
    VecX<S> action, mu_old, var_old;
    S reward = 0;
    bool done = false;
    S value = 0;
    S logp_old = 0;
  };

  struct Fragment {
    std::vector<Transition> transitions;
    S bootstrap = 0;
    std::vector<EpisodeStats> finished;
  };

  struct Batch {
    std::vector<Transition> transitions;
    VecX<S> advantages, returns;
  };

  struct WorkerState {
    World env;
    Rng rng;
    VideoClip obs;
    bool started = false;

    WorkerState(const WorldConfig& cfg, Rng r) : env(cfg), rng(std::move(r)) {}
  };

  Fragment run_fragment(WorkerState& w) {
    Fragment frag;
    if (!w.started) {
      w.obs = w.env.reset(w.rng.next_u64());
      w.started = true;
    }
    for (int t = 0; t < spec_.ppo.fragment_len; ++t) {
      Transition tr;
      const Tensor<S> clip = clip_to_tensor<S>(w.obs);
      const Tensor<S> fmap = enc_model_.encode(clip, enc_theta_);
      VecX<S> projection;
      if (spec_.variant.kind == HeadKind::kDirectProjection1d) {
        projection = enc_model_.project(fmap, enc_theta_);
      }
      HeadInput<S> in = adapt_features(spec_.variant.kind, fmap, projection);
      const ActorOutput<S> a = policy_.actor(in, policy_theta_);
      tr.value = policy_.critic(in, policy_theta_);
      tr.mu_old = a.mu;
      tr.var_old = a.var;
      tr.action.resize(spec_.n_actions);
      for (int d = 0; d < spec_.n_actions; ++d) {
        tr.action[d] =
            a.mu[d] + std::sqrt(a.var[d]) * static_cast<S>(w.rng.gaussian());
      }
      // Log-probability of the raw sample; the environment clips actuation.
      tr.logp_old = gaussian_logp(tr.action, a.mu, a.var);
      const StepResult sr =
          w.env.step(static_cast<double>(tr.action[0]));
      tr.reward = static_cast<S>(sr.reward);
      tr.done = sr.done;
      if (spec_.end_to_end) {
        tr.clip = clip;
      } else {
        tr.features = std::move(in);
      }
      frag.transitions.push_back(std::move(tr));
      if (sr.done) {
        frag.finished.push_back(w.env.episode_stats());
        w.obs = w.env.reset(w.rng.next_u64());
      } else {
        w.obs = sr.observation;
      }
    }
    if (!frag.transitions.back().done) {
      const HeadInput<S> in = featurize(w.obs);
      frag.bootstrap = policy_.critic(in, policy_theta_);
    }
    return frag;
  }

  Batch collect_batch(std::vector<EpisodeStats>& episode_sink) {
    const int n_frags = spec_.ppo.batch_size / spec_.ppo.fragment_len;
    const int workers = static_cast<int>(workers_.size());
    std::vector<Fragment> fragments(static_cast<std::size_t>(n_frags));
    // Fragment f runs on worker f % W; a worker's fragments stay ordered, so
    // results are identical in serial and parallel mode.
    parallel_for(
        workers,
        [&](int w) {
          try {
            for (int f = w; f < n_frags; f += workers) {
              fragments[static_cast<std::size_t>(f)] =
                  run_fragment(*workers_[static_cast<std::size_t>(w)]);
            }
          } catch (const std::exception& e) {
            throw ProtocolError("rollout worker " + std::to_string(w) +
                                " failed: " + e.what());
          }
        },
        spec_.serial ? 1 : std::min(workers, spec_.threads > 0
                                                 ? spec_.threads
                                                 : default_threads()));

    Batch batch;
    std::vector<S> adv_all, ret_all;
    for (auto& frag : fragments) {
      std::vector<S> rewards, values;
      std::vector<bool> dones;
      for (const auto& tr : frag.transitions) {
        rewards.push_back(tr.reward);
        values.push_back(tr.value);
        dones.push_back(tr.done);
      }
      values.push_back(frag.bootstrap);
      const GaeResult<S> gae = compute_gae<S>(rewards, values, dones,
                                              spec_.ppo.gamma, spec_.ppo.lambda);
      for (std::size_t i = 0; i < frag.transitions.size(); ++i) {
        batch.transitions.push_back(std::move(frag.transitions[i]));
        adv_all.push_back(gae.advantages[i]);
        ret_all.push_back(gae.returns[i]);
      }
      for (const auto& ep : frag.finished) episode_sink.push_back(ep);
    }
    batch.advantages =
        Eigen::Map<VecX<S>>(adv_all.data(), static_cast<Eigen::Index>(adv_all.size()));
    batch.returns =
        Eigen::Map<VecX<S>>(ret_all.data(), static_cast<Eigen::Index>(ret_all.size()));
    if (spec_.ppo.normalize_advantages && batch.advantages.size() > 1) {
      const S mean = batch.advantages.mean();
      const S stddev = std::sqrt(
          (batch.advantages.array() - mean).square().sum() /
          static_cast<S>(batch.advantages.size() - 1));
      batch.advantages =
          ((batch.advantages.array() - mean) / (stddev + S(1e-8))).matrix();
    }
    return batch;
  }

  struct SampleForward {
    typename VideoEncoder<S>::ForwardCache enc_cache;
    typename PolicyNet<S>::Cache actor_cache, critic_cache;
    HeadInput<S> input;
    ActorOutput<S> actor_out;
    S value = 0;
    S logp_new = 0;
    S kl = 0;
  };

  // One minibatch pass: batched forward, scalar losses, per-sample backward.
  void minibatch_update(Batch& batch, const std::vector<int>& idx,
                        IterationRow& row, int& loss_samples) {
    const int m = static_cast<int>(idx.size());
    std::vector<SampleForward> fw(static_cast<std::size_t>(m));
    const int threads = spec_.serial
                            ? 1
                            : (spec_.threads > 0 ? spec_.threads
                                                 : default_threads());
    parallel_for(
        m,
        [&](int i) {
          auto& f = fw[static_cast<std::size_t>(i)];
          const Transition& tr =
              batch.transitions[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
          if (spec_.end_to_end) {
            const Tensor<S> fmap =
                enc_model_.encode(tr.clip, enc_theta_, &f.enc_cache);
            VecX<S> projection;
            if (spec_.variant.kind == HeadKind::kDirectProjection1d) {
              projection = enc_model_.project(fmap, enc_theta_, &f.enc_cache);
            }
            f.input = adapt_features(spec_.variant.kind, fmap, projection);
          } else {
            f.input = tr.features;
          }
          f.actor_out = policy_.actor(f.input, policy_theta_, &f.actor_cache);
          f.value = policy_.critic(f.input, policy_theta_, &f.critic_cache);
          f.logp_new = gaussian_logp(tr.action, f.actor_out.mu, f.actor_out.var);
          f.kl = gaussian_kl(tr.mu_old, tr.var_old, f.actor_out.mu,
                             f.actor_out.var);
        },
        threads);

    VecX<S> logp_new(m), logp_old(m), adv(m), v_new(m), v_old(m), ret(m);
    for (int i = 0; i < m; ++i) {
      const int k = idx[static_cast<std::size_t>(i)];
      logp_new[i] = fw[static_cast<std::size_t>(i)].logp_new;
      logp_old[i] = batch.transitions[static_cast<std::size_t>(k)].logp_old;
      adv[i] = batch.advantages[k];
      v_new[i] = fw[static_cast<std::size_t>(i)].value;
      v_old[i] = batch.transitions[static_cast<std::size_t>(k)].value;
      ret[i] = batch.returns[k];
    }
    VecX<S> dlogp, dv;
    const S surrogate =
        ppo_surrogate(logp_new, logp_old, adv, spec_.ppo.clip_eps, &dlogp);
    const S vloss = value_loss(v_new, v_old, ret, spec_.ppo.vf_clip, &dv);
    S kl_mean = 0;
    for (const auto& f : fw) kl_mean += f.kl;
    kl_mean /= static_cast<S>(m);
    if (!std::isfinite(surrogate) || !std::isfinite(vloss)) {
      throw DegenerateInputError("ppo update: non-finite loss");
    }
    row.policy_loss += static_cast<double>(surrogate);
    row.value_loss += static_cast<double>(vloss);
    row.kl += static_cast<double>(kl_mean);
    ++loss_samples;

    VecX<S> pgrad = VecX<S>::Zero(policy_theta_.size());
    VecX<S> egrad;
    if (spec_.end_to_end) egrad = VecX<S>::Zero(enc_theta_.size());

    const int chunks = std::max(1, std::min(threads, m));
    std::vector<VecX<S>> pbufs(static_cast<std::size_t>(chunks),
                               VecX<S>::Zero(policy_theta_.size()));
    std::vector<VecX<S>> ebufs;
    if (spec_.end_to_end) {
      ebufs.assign(static_cast<std::size_t>(chunks),
                   VecX<S>::Zero(enc_theta_.size()));
    }
    parallel_for(
        chunks,
        [&](int chunk) {
          const int lo = m * chunk / chunks;
          const int hi = m * (chunk + 1) / chunks;
          for (int i = lo; i < hi; ++i) {
            auto& f = fw[static_cast<std::size_t>(i)];
            const Transition& tr = batch.transitions[static_cast<std::size_t>(
                idx[static_cast<std::size_t>(i)])];
            VecX<S>& pg = pbufs[static_cast<std::size_t>(chunk)];
            // d loss / d (mu, var) through the surrogate, the KL penalty and
            // the entropy bonus.
            VecX<S> dmu, dvar, dmu_kl, dvar_kl, dvar_ent;
            gaussian_logp_backward(tr.action, f.actor_out.mu, f.actor_out.var,
                                   dlogp[i], dmu, dvar);
            gaussian_kl_backward(tr.mu_old, tr.var_old, f.actor_out.mu,
                                 f.actor_out.var,
                                 S(kl_coef_) / static_cast<S>(m), dmu_kl,
                                 dvar_kl);
            dmu += dmu_kl;
            dvar += dvar_kl;
            if (spec_.ppo.entropy_coef != 0.0) {
              gaussian_entropy_backward(
                  f.actor_out.var,
                  S(-spec_.ppo.entropy_coef) / static_cast<S>(m), dvar_ent);
              dvar += dvar_ent;
            }
            HeadInputGrad<S> gin = policy_.actor_backward(
                f.actor_cache, f.actor_out, dmu, dvar, policy_theta_, pg,
                spec_.end_to_end);
            HeadInputGrad<S> gin_c = policy_.critic_backward(
                f.critic_cache, S(spec_.ppo.vf_coef) * dv[i], policy_theta_,
                pg, spec_.end_to_end);
            if (spec_.end_to_end) {
              VecX<S>& eg = ebufs[static_cast<std::size_t>(chunk)];
              if (gin.is_map) {
                gin.dmap.data += gin_c.dmap.data;
              } else {
                gin.dvec += gin_c.dvec;
              }
              Tensor<S> dfmap;
              VecX<S> dproj = VecX<S>::Zero(
                  enc_model_.config().projection_dim);
              adapt_features_backward(spec_.variant.kind, gin,
                                      enc_model_.feature_dims(), &dfmap,
                                      &dproj);
              if (spec_.variant.kind == HeadKind::kDirectProjection1d) {
                Tensor<S> dproj_fmap = enc_model_.project_backward(
                    dproj, f.enc_cache, enc_theta_, eg);
                dfmap.data += dproj_fmap.data;
              }
              enc_model_.encode_backward(dfmap, f.enc_cache, enc_theta_, eg);
            }
          }
        },
        chunks);
    for (const auto& b : pbufs) pgrad += b;
    if (spec_.end_to_end) {
      for (const auto& b : ebufs) egrad += b;
    }
    add_weight_regularization(policy_.layout(), policy_theta_, pgrad,
                              spec_.ppo.reg_l1, spec_.ppo.reg_l2);
    policy_adam_.step(policy_theta_, pgrad);
    if (spec_.end_to_end) encoder_adam_->step(enc_theta_, egrad);
  }

  IterationRow update(Batch& batch) {
    IterationRow row;
    const int n = static_cast<int>(batch.transitions.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    int loss_samples = 0;
    double last_epoch_kl = 0.0;
    int last_epoch_batches = 0;
    for (int epoch = 0; epoch < spec_.ppo.sgd_iters; ++epoch) {
      // Deterministic shuffle from the learner rng.
      for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(
            learner_rng_.uniform_int(static_cast<std::uint64_t>(i) + 1));
        std::swap(order[static_cast<std::size_t>(i)],
                  order[static_cast<std::size_t>(j)]);
      }
      const double kl_before = row.kl;
      int batches_before = loss_samples;
      for (int lo = 0; lo < n; lo += spec_.ppo.minibatch) {
        const int hi = std::min(n, lo + spec_.ppo.minibatch);
        std::vector<int> idx(order.begin() + lo, order.begin() + hi);
        minibatch_update(batch, idx, row, loss_samples);
      }
      if (epoch == spec_.ppo.sgd_iters - 1) {
        last_epoch_kl = row.kl - kl_before;
        last_epoch_batches = loss_samples - batches_before;
      }
    }
    row.policy_loss /= std::max(1, loss_samples);
    row.value_loss /= std::max(1, loss_samples);
    row.kl /= std::max(1, loss_samples);
    // The coefficient adapts on the KL measured in the final epoch.
    const double kl_measured =
        last_epoch_batches > 0 ? last_epoch_kl / last_epoch_batches : 0.0;
    kl_coef_ = adaptive_kl_update(std::max(0.0, kl_measured), kl_coef_,
                                  spec_.ppo.kl_target);
    row.kl_coef = kl_coef_;
    return row;
  }

  TrainSpec spec_;
  VideoEncoder<S> enc_model_;
  VecX<S> enc_theta_;
  PolicyNet<S> policy_;
  VecX<S> policy_theta_;
  Adam<S> policy_adam_;
  std::optional<Adam<S>> encoder_adam_;
  double kl_coef_ = 0.3;
  std::vector<std::unique_ptr<WorkerState>> workers_;
  Rng learner_rng_{0};
};

// Builds an end-to-end (trainable, randomly initialized) encoder stand-in.
template <typename S>
LoadedEncoder<S> fresh_encoder(const EncoderConfig& config,
                               std::uint64_t seed) {
  VideoEncoder<S> model(config);
  LoadedEncoder<S> out;
  out.config = config;
  VecX<S> theta = model.init_params(seed);
  out.theta = theta.head(model.frozen_size());
  out.contract = model.contract();
  out.scheme = "external";
  out.frozen = false;
  return out;
}

}  // namespace driverep

#include "driverep/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "driverep/core/csv.hpp"
#include "driverep/core/hash.hpp"
#include "driverep/report/aggregate.hpp"
#include "driverep/ssl/pretrain.hpp"

namespace driverep::cli {

namespace {

WorldConfig world_from(const Context& ctx) {
  return WorldConfig::from_kv(ctx.kv);
}

EncoderConfig encoder_from(const Context& ctx) {
  EncoderConfig cfg = EncoderConfig::from_kv(ctx.kv);
  // The encoder must consume exactly what the simulator emits.
  const WorldConfig wc = world_from(ctx);
  cfg.frame_size = static_cast<int>(
      ctx.kv.get_int("encoder.frame_size", wc.frame_size));
  cfg.clip_len =
      static_cast<int>(ctx.kv.get_int("encoder.clip_len", wc.stack_length));
  cfg.validate();
  return cfg;
}

std::string stem_of(const std::filesystem::path& p) {
  return p.stem().string();
}

}  // namespace

HeadVariant variant_from(const Context& ctx) {
  HeadVariant v;
  v.kind = parse_head_kind(ctx.head_variant);
  v.size = parse_head_size(ctx.head_size);
  return v;
}

int run_gen_corpus(const Context& ctx) {
  const int n_videos =
      ctx.n_videos > 0
          ? ctx.n_videos
          : static_cast<int>(ctx.kv.get_int("corpus.videos", 8));
  const int length =
      ctx.video_length > 0
          ? ctx.video_length
          : static_cast<int>(ctx.kv.get_int("corpus.length", 64));
  WorldConfig wc = world_from(ctx);
  generate_synthetic_corpus(ctx.out, n_videos, length, ctx.seed, wc);
  const ClipDataset data = ClipDataset::open(ctx.out);
  data.validate(wc.stack_length, 1);
  std::printf("corpus: %d videos x %d frames (%dpx) at %s\n",
              data.num_videos(), length, wc.frame_size,
              ctx.out.string().c_str());
  std::printf("manifest hash: %s\n",
              hex64(corpus_manifest_hash(ctx.out)).c_str());
  return 0;
}

int run_pretrain(const Context& ctx) {
  const EncoderConfig enc_cfg = encoder_from(ctx);
  PretrainConfig cfg = PretrainConfig::from_kv(ctx.kv);
  cfg.scheme = parse_scheme(ctx.scheme);
  cfg.seed = ctx.seed;
  if (ctx.threads > 0) cfg.threads = ctx.threads;
  if (ctx.serial) cfg.threads = 1;
  if (ctx.episodes > 0) cfg.steps = ctx.episodes;

  const ClipDataset data = ClipDataset::open(ctx.corpus);
  Pretrainer<float> trainer(enc_cfg, cfg, data);

  std::filesystem::create_directories(ctx.out);
  const auto csv_path = ctx.out / (scheme_name(cfg.scheme) + "_pretrain.csv");
  std::vector<std::string> cols = {"step", "loss", "grad_norm",
                                   "embedding_std", "queue_fill"};
  if (cfg.scheme == Scheme::kVae) {
    cols.push_back("reconstruction");
    cols.push_back("kl");
  }
  CsvWriter csv(csv_path, cols);
  for (int s = 0; s < cfg.steps; ++s) {
    const PretrainMetrics m = trainer.step();
    std::vector<std::string> row = {
        std::to_string(m.step), format_real(m.loss), format_real(m.grad_norm),
        format_real(m.embedding_std), std::to_string(m.queue_fill)};
    if (cfg.scheme == Scheme::kVae) {
      row.push_back(format_real(m.reconstruction));
      row.push_back(format_real(m.kl));
    }
    csv.row(row);
    if (m.collapse_warning) {
      std::fprintf(stderr,
                   "warning: embedding std is zero at step %d "
                   "(representation collapse)\n",
                   m.step);
    }
    if (m.step % 50 == 0 || m.step == cfg.steps) {
      std::printf("step %d  loss %.5f\n", m.step, m.loss);
    }
  }
  const auto ckpt = ctx.out / (scheme_name(cfg.scheme) + "_encoder.ckpt");
  trainer.export_frozen(ckpt);
  std::printf("checkpoint: %s\n", ckpt.string().c_str());
  std::printf("metrics: %s\n", csv_path.string().c_str());
  return 0;
}

namespace {

TrainSpec train_spec_from(const Context& ctx) {
  TrainSpec spec;
  spec.ppo = PpoConfig::from_kv(ctx.kv);
  spec.world = world_from(ctx);
  spec.variant = variant_from(ctx);
  spec.n_actions =
      static_cast<int>(ctx.kv.get_int("agent.n_actions", 1));
  spec.episodes =
      ctx.episodes > 0
          ? ctx.episodes
          : static_cast<int>(ctx.kv.get_int("agent.episodes", 300));
  spec.end_to_end = ctx.end_to_end;
  spec.threads = ctx.threads;
  spec.serial = ctx.serial;
  return spec;
}

LoadedEncoder<float> encoder_for_training(const Context& ctx,
                                          std::uint64_t seed) {
  if (ctx.end_to_end) {
    if (ctx.encoder_ckpt.empty()) {
      return fresh_encoder<float>(encoder_from(ctx), Rng::split_mix(seed));
    }
    LoadedEncoder<float> enc = load_encoder<float>(ctx.encoder_ckpt);
    enc.frozen = false;
    return enc;
  }
  if (ctx.encoder_ckpt.empty()) {
    throw ConfigError(
        "train-agent needs --encoder <checkpoint> (or --end-to-end)");
  }
  return load_encoder<float>(ctx.encoder_ckpt);
}

void write_episode_csv(const std::filesystem::path& path,
                       const std::vector<EpisodeStats>& eps) {
  CsvWriter csv(path,
                {"episode", "reward", "steps", "lane_invasions", "collisions"});
  for (std::size_t i = 0; i < eps.size(); ++i) {
    csv.row({std::to_string(i), format_real(eps[i].total_reward),
             std::to_string(eps[i].steps),
             std::to_string(eps[i].lane_invasions),
             std::to_string(eps[i].collisions)});
  }
}

void write_iteration_csv(const std::filesystem::path& path,
                         const std::vector<IterationRow>& rows) {
  CsvWriter csv(path, {"iteration", "episode", "mean_reward", "mean_steps",
                       "mean_lane_invasions", "policy_loss", "value_loss",
                       "kl", "kl_coef"});
  for (const auto& r : rows) {
    csv.row({std::to_string(r.iteration), std::to_string(r.episodes_done),
             format_real(r.mean_reward), format_real(r.mean_steps),
             format_real(r.mean_invasions), format_real(r.policy_loss),
             format_real(r.value_loss), format_real(r.kl),
             format_real(r.kl_coef)});
  }
}

}  // namespace

void write_aggregate_csv(const std::filesystem::path& path,
                         const std::vector<std::vector<double>>& seed_rewards,
                         int episodes, int window) {
  const std::vector<double> median = median_curve(seed_rewards, episodes);
  const std::vector<double> smoothed =
      trailing_moving_average(median, window);
  CsvWriter csv(path, {"episode", "median_reward", "median_reward_ma"});
  for (int e = 0; e < episodes; ++e) {
    csv.row({std::to_string(e), format_real(median[static_cast<std::size_t>(e)]),
             format_real(smoothed[static_cast<std::size_t>(e)])});
  }
}

void save_policy_checkpoint(const std::filesystem::path& path,
                            const PolicyNet<float>& policy,
                            const VecX<float>& theta,
                            const ShapeContract& contract) {
  nlohmann::json header = {
      {"kind", "policy"},
      {"variant", head_kind_name(policy.variant().kind)},
      {"size", head_size_name(policy.variant().size)},
      {"n_actions", policy.n_actions()},
      {"contract", contract.to_json()}};
  std::vector<std::pair<std::string, std::vector<double>>> sections;
  for (const auto& block : policy.layout().blocks()) {
    std::vector<double> values(static_cast<std::size_t>(block.size()));
    for (Eigen::Index i = 0; i < block.size(); ++i) {
      values[static_cast<std::size_t>(i)] =
          static_cast<double>(theta[block.offset + i]);
    }
    sections.emplace_back(block.name, std::move(values));
  }
  write_checkpoint_file(path, header, 1, sections);
}

LoadedPolicy load_policy_checkpoint(const std::filesystem::path& path) {
  const RawCheckpoint raw = read_checkpoint_file(path);
  if (raw.header.value("kind", "") != "policy") {
    throw ContractError("checkpoint is not a policy: " + path.string());
  }
  LoadedPolicy out;
  out.variant.kind = parse_head_kind(raw.header.at("variant").get<std::string>());
  out.variant.size = parse_head_size(raw.header.at("size").get<std::string>());
  out.n_actions = raw.header.at("n_actions").get<int>();
  out.contract = ShapeContract::from_json(raw.header.at("contract"));
  PolicyNet<float> net(out.variant, out.contract, out.n_actions);
  out.theta = VecX<float>::Zero(net.layout().total_size());
  for (const auto& block : net.layout().blocks()) {
    const auto* values = raw.find(block.name);
    if (!values ||
        static_cast<Eigen::Index>(values->size()) != block.size()) {
      throw ContractError("policy checkpoint section mismatch: " + block.name);
    }
    for (Eigen::Index i = 0; i < block.size(); ++i) {
      out.theta[block.offset + i] =
          static_cast<float>((*values)[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

int run_train_agent(const Context& ctx) {
  const TrainSpec base = train_spec_from(ctx);
  std::filesystem::create_directories(ctx.out);
  std::vector<std::vector<double>> seed_rewards;
  for (const std::uint64_t seed : ctx.seeds) {
    TrainSpec spec = base;
    spec.seed = seed;
    const LoadedEncoder<float> enc = encoder_for_training(ctx, seed);
    PpoTrainer<float> trainer(spec, enc);
    const TrainResult result = trainer.run();

    const std::string tag = "seed_" + std::to_string(seed);
    write_episode_csv(ctx.out / (tag + "_episodes.csv"), result.episodes);
    write_iteration_csv(ctx.out / (tag + "_iterations.csv"),
                        result.iterations);
    save_policy_checkpoint(ctx.out / (tag + "_policy.ckpt"), trainer.policy(),
                           trainer.policy_params(), enc.contract);
    if (ctx.end_to_end) {
      // The trained encoder is part of the run artifact in this mode.
      save_encoder(ctx.out / (tag + "_encoder.ckpt"), trainer.encoder_model(),
                   trainer.encoder_params(), "external");
    }
    std::vector<double> rewards;
    rewards.reserve(result.episodes.size());
    for (const auto& ep : result.episodes) rewards.push_back(ep.total_reward);
    seed_rewards.push_back(std::move(rewards));
    std::printf("%s: %zu episodes, final mean reward %.3f, encoder %s\n",
                tag.c_str(), result.episodes.size(),
                result.iterations.empty()
                    ? 0.0
                    : result.iterations.back().mean_reward,
                result.encoder_hash_before == result.encoder_hash_after
                    ? "unchanged"
                    : "updated");
  }
  const int window =
      static_cast<int>(ctx.kv.get_int("agent.smooth_window", 100));
  write_aggregate_csv(ctx.out / "aggregate.csv", seed_rewards, base.episodes,
                      window);
  std::printf("aggregate: %s\n", (ctx.out / "aggregate.csv").string().c_str());
  return 0;
}

namespace {

struct GridState {
  std::vector<AblationCell> cells;

  int find(const std::string& enc, const std::string& head) const {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].encoder == enc && cells[i].head == head) {
        return static_cast<int>(i);
      }
    }
    return -1;
  }
};

void write_grid_csv(const std::filesystem::path& path, const GridState& g) {
  CsvWriter csv(path, {"encoder", "head", "status", "best_smoothed_reward",
                       "normalized"});
  for (const auto& c : g.cells) {
    csv.row({c.encoder, c.head, c.done ? "done" : "missing",
             c.done ? format_real(c.best_smoothed_reward) : "",
             c.done ? format_real(c.normalized) : ""});
  }
  csv.flush();
}

GridState read_grid_csv(const std::filesystem::path& path) {
  GridState g;
  if (!std::filesystem::exists(path)) return g;
  const CsvTable t = read_csv(path);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    AblationCell c;
    c.encoder = t.rows[r][0];
    c.head = t.rows[r][1];
    c.done = t.rows[r][2] == "done";
    if (c.done) c.best_smoothed_reward = t.real(r, "best_smoothed_reward");
    g.cells.push_back(c);
  }
  return g;
}

void write_heatmap_png(const std::filesystem::path& path, const GridState& g,
                       int n_encoders, int n_heads) {
  const int cell = 24;
  FrameU8 img = FrameU8::filled(n_encoders * cell, n_heads * cell, 30);
  for (int e = 0; e < n_encoders; ++e) {
    for (int h = 0; h < n_heads; ++h) {
      const auto& c = g.cells[static_cast<std::size_t>(e * n_heads + h)];
      std::uint8_t r = 40, gg = 40, b = 60;
      if (c.done) {
        const double v = c.normalized;
        r = static_cast<std::uint8_t>(40 + 215 * v);
        gg = static_cast<std::uint8_t>(40 + 160 * v);
        b = static_cast<std::uint8_t>(120 - 80 * v);
      }
      for (int y = e * cell; y < (e + 1) * cell - 1; ++y) {
        for (int x = h * cell; x < (h + 1) * cell - 1; ++x) {
          img.at(0, y, x) = r;
          img.at(1, y, x) = gg;
          img.at(2, y, x) = b;
        }
      }
    }
  }
  write_png(path, img);
}

}  // namespace

int run_ablate(const Context& ctx) {
  if (ctx.encoder_ckpts.empty()) {
    throw ConfigError("ablate needs --encoders <ckpt,ckpt,...>");
  }
  std::filesystem::create_directories(ctx.out);
  const std::vector<HeadVariant> heads = {
      {HeadKind::kDirectProjection1d, HeadSize::kS},
      {HeadKind::kDirectProjection1d, HeadSize::kXl},
      {HeadKind::kConvAvg3d, HeadSize::kS},
      {HeadKind::kConvAvg3d, HeadSize::kXl},
      {HeadKind::kTemporalAxisReduction, HeadSize::kS},
      {HeadKind::kTemporalAxisReduction, HeadSize::kXl},
  };
  const auto grid_path = ctx.out / "grid.csv";
  GridState previous = read_grid_csv(grid_path);

  GridState grid;
  for (const auto& ckpt : ctx.encoder_ckpts) {
    for (const auto& head : heads) {
      AblationCell cell;
      cell.encoder = stem_of(ckpt);
      cell.head = head.label();
      const int prev = previous.find(cell.encoder, cell.head);
      if (prev >= 0 && previous.cells[static_cast<std::size_t>(prev)].done) {
        cell = previous.cells[static_cast<std::size_t>(prev)];
      }
      grid.cells.push_back(cell);
    }
  }

  const int budget =
      ctx.episodes > 0
          ? ctx.episodes
          : static_cast<int>(ctx.kv.get_int("ablate.episodes", 40));
  const int window =
      static_cast<int>(ctx.kv.get_int("agent.smooth_window", 100));
  TrainSpec base = train_spec_from(ctx);
  base.episodes = budget;
  base.seed = ctx.seed;

  std::size_t idx = 0;
  for (const auto& ckpt : ctx.encoder_ckpts) {
    for (const auto& head : heads) {
      AblationCell& cell = grid.cells[idx++];
      if (cell.done) {
        std::printf("cell %s / %s: cached\n", cell.encoder.c_str(),
                    cell.head.c_str());
        continue;
      }
      TrainSpec spec = base;
      spec.variant = head;
      const LoadedEncoder<float> enc = load_encoder<float>(ckpt);
      PpoTrainer<float> trainer(spec, enc);
      const TrainResult result = trainer.run();
      std::vector<double> rewards;
      for (const auto& ep : result.episodes) {
        rewards.push_back(ep.total_reward);
      }
      const auto smoothed = trailing_moving_average(rewards, window);
      cell.best_smoothed_reward =
          *std::max_element(smoothed.begin(), smoothed.end());
      cell.done = true;
      write_grid_csv(grid_path, grid);  // checkpoint after every cell
      std::printf("cell %s / %s: best smoothed reward %.3f\n",
                  cell.encoder.c_str(), cell.head.c_str(),
                  cell.best_smoothed_reward);
    }
  }

  // Min-max normalization across completed cells.
  std::vector<double> values;
  for (const auto& c : grid.cells) {
    if (c.done) values.push_back(c.best_smoothed_reward);
  }
  const auto normalized = minmax_normalize(values);
  std::size_t vi = 0;
  for (auto& c : grid.cells) {
    if (c.done) c.normalized = normalized[vi++];
  }
  write_grid_csv(grid_path, grid);
  nlohmann::json meta = {{"normalization", "minmax"},
                         {"episodes_per_cell", budget},
                         {"smooth_window", window}};
  std::ofstream(ctx.out / "grid_meta.json") << meta.dump(2) << "\n";
  if (ctx.heatmap) {
    write_heatmap_png(ctx.out / "grid.png", grid,
                      static_cast<int>(ctx.encoder_ckpts.size()),
                      static_cast<int>(heads.size()));
  }
  std::printf("grid: %s\n", grid_path.string().c_str());
  return 0;
}

int run_evaluate(const Context& ctx) {
  const LoadedEncoder<float> enc = load_encoder<float>(ctx.encoder_ckpt);
  const LoadedPolicy pol = load_policy_checkpoint(ctx.policy_ckpt);
  if (!(pol.contract == enc.contract)) {
    throw ContractError("policy was trained against a different encoder "
                        "contract");
  }
  TrainSpec spec = train_spec_from(ctx);
  spec.variant = pol.variant;
  spec.n_actions = pol.n_actions;
  spec.seed = ctx.seed;

  VideoEncoder<float> model(enc.config);
  VecX<float> enc_theta = VecX<float>::Zero(model.layout().total_size());
  enc_theta.head(enc.theta.size()) = enc.theta;
  PolicyNet<float> net(pol.variant, pol.contract, pol.n_actions);

  std::filesystem::create_directories(ctx.out);
  CsvWriter csv(ctx.out / "evaluation.csv",
                {"episode", "reward", "steps", "lane_invasions", "collisions"});
  std::vector<EpisodeStats> all;
  for (int e = 0; e < ctx.eval_episodes; ++e) {
    const EpisodeStats st = rollout_episode(
        [&](const VideoClip& obs) {
          const Tensor<float> clip = clip_to_tensor<float>(obs);
          const Tensor<float> fmap = model.encode(clip, enc_theta);
          VecX<float> projection;
          if (pol.variant.kind == HeadKind::kDirectProjection1d) {
            projection = model.project(fmap, enc_theta);
          }
          const HeadInput<float> in =
              adapt_features(pol.variant.kind, fmap, projection);
          const ActorOutput<float> a = net.actor(in, pol.theta);
          return static_cast<double>(a.mu[0]);
        },
        ctx.seed + static_cast<std::uint64_t>(e), spec.world);
    csv.row({std::to_string(e), format_real(st.total_reward),
             std::to_string(st.steps), std::to_string(st.lane_invasions),
             std::to_string(st.collisions)});
    all.push_back(st);
  }
  auto mean_of = [&](auto get) {
    double s = 0;
    for (const auto& ep : all) s += get(ep);
    return s / static_cast<double>(all.size());
  };
  std::vector<double> rewards;
  for (const auto& ep : all) rewards.push_back(ep.total_reward);
  std::sort(rewards.begin(), rewards.end());
  const double median =
      rewards.size() % 2 == 1
          ? rewards[rewards.size() / 2]
          : 0.5 * (rewards[rewards.size() / 2 - 1] +
                   rewards[rewards.size() / 2]);
  std::printf("episodes: %d\n", ctx.eval_episodes);
  std::printf("mean reward: %.3f (median %.3f)\n",
              mean_of([](const EpisodeStats& e) { return e.total_reward; }),
              median);
  std::printf("mean steps: %.2f  mean invasions: %.2f  mean collisions: %.3f\n",
              mean_of([](const EpisodeStats& e) { return double(e.steps); }),
              mean_of([](const EpisodeStats& e) {
                return double(e.lane_invasions);
              }),
              mean_of([](const EpisodeStats& e) {
                return double(e.collisions);
              }));
  return 0;
}

}  // namespace driverep::cli

#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "driverep/cli/commands.hpp"
#include "driverep/core/parallel.hpp"

namespace {

using driverep::cli::Context;

void add_common(CLI::App* cmd, Context& ctx, std::string& config_path,
                std::string& seeds_csv) {
  cmd->add_option("--config", config_path, "key = value configuration file");
  cmd->add_option("--seed", ctx.seed, "base seed");
  cmd->add_option("--seeds", seeds_csv,
                  "comma-separated seed list (multi-seed commands)");
  cmd->add_option("--out", ctx.out, "output directory");
  cmd->add_option("--threads", ctx.threads, "worker threads (0 = auto)");
  cmd->add_flag("--serial", ctx.serial,
                "fully serial execution for bit-exact reproducibility");
}

void finalize(Context& ctx, const std::string& config_path,
              const std::string& seeds_csv) {
  if (!config_path.empty()) {
    ctx.kv = driverep::KeyValueConfig::parse_file(config_path);
  }
  if (!seeds_csv.empty()) {
    ctx.seeds.clear();
    std::size_t pos = 0;
    while (pos < seeds_csv.size()) {
      const std::size_t comma = seeds_csv.find(',', pos);
      const std::string tok = seeds_csv.substr(
          pos, comma == std::string::npos ? std::string::npos : comma - pos);
      if (!tok.empty()) ctx.seeds.push_back(std::stoull(tok));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (ctx.seeds.empty()) {
      throw driverep::ConfigError("--seeds: no seeds given");
    }
  }
  if (ctx.serial) ctx.threads = 1;
  if (ctx.threads > 0) driverep::set_default_threads(ctx.threads);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "driverep: self-supervised video encoders + PPO lane driving at desk "
      "scale"};
  app.require_subcommand(1);

  Context ctx;
  std::string config_path, seeds_csv, encoders_csv;

  auto* gen = app.add_subcommand("gen-corpus",
                                 "render a synthetic driving-clip corpus");
  add_common(gen, ctx, config_path, seeds_csv);
  gen->add_option("--videos", ctx.n_videos, "number of videos");
  gen->add_option("--length", ctx.video_length, "frames per video");

  auto* pre = app.add_subcommand("pretrain",
                                 "train an encoder offline on a corpus");
  add_common(pre, ctx, config_path, seeds_csv);
  pre->add_option("--corpus", ctx.corpus, "clip corpus directory")
      ->required();
  pre->add_option("--scheme", ctx.scheme, "moco | byol | dpc | vae");
  pre->add_option("--steps", ctx.episodes, "optimization steps");

  auto* train = app.add_subcommand(
      "train-agent", "train head/actor/critic with PPO on a frozen encoder");
  add_common(train, ctx, config_path, seeds_csv);
  train->add_option("--encoder", ctx.encoder_ckpt, "encoder checkpoint");
  train->add_option("--head-variant", ctx.head_variant,
                    "pro1d | avg1d | avg2d");
  train->add_option("--head-size", ctx.head_size, "s | xl");
  train->add_option("--episodes", ctx.episodes, "episode budget per seed");
  train->add_flag("--end-to-end", ctx.end_to_end,
                  "train the encoder with the RL loss (comparison mode)");

  auto* abl = app.add_subcommand(
      "ablate", "run the encoder x head grid and normalize best rewards");
  add_common(abl, ctx, config_path, seeds_csv);
  abl->add_option("--encoders", encoders_csv,
                  "comma-separated encoder checkpoints")
      ->required();
  abl->add_option("--episodes", ctx.episodes, "episode budget per cell");
  abl->add_flag("--heatmap", ctx.heatmap, "also render grid.png");

  auto* eval = app.add_subcommand("evaluate",
                                  "deterministic evaluation of a policy");
  add_common(eval, ctx, config_path, seeds_csv);
  eval->add_option("--encoder", ctx.encoder_ckpt, "encoder checkpoint")
      ->required();
  eval->add_option("--policy", ctx.policy_ckpt, "policy checkpoint")
      ->required();
  eval->add_option("--episodes", ctx.eval_episodes, "evaluation episodes");

  CLI11_PARSE(app, argc, argv);

  try {
    finalize(ctx, config_path, seeds_csv);
    if (!encoders_csv.empty()) {
      std::size_t pos = 0;
      while (pos < encoders_csv.size()) {
        const std::size_t comma = encoders_csv.find(',', pos);
        const std::string tok = encoders_csv.substr(
            pos,
            comma == std::string::npos ? std::string::npos : comma - pos);
        if (!tok.empty()) ctx.encoder_ckpts.push_back(tok);
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
    }
    if (gen->parsed()) return driverep::cli::run_gen_corpus(ctx);
    if (pre->parsed()) return driverep::cli::run_pretrain(ctx);
    if (train->parsed()) return driverep::cli::run_train_agent(ctx);
    if (abl->parsed()) return driverep::cli::run_ablate(ctx);
    if (eval->parsed()) return driverep::cli::run_evaluate(ctx);
  } catch (const driverep::ConfigError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

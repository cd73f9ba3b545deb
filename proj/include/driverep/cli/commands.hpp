#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "driverep/core/kv_config.hpp"
#include "driverep/encoder/encoder.hpp"
#include "driverep/heads/heads.hpp"
#include "driverep/rl/train.hpp"

namespace driverep::cli {

// Everything the subcommands consume; populated from flags plus an optional
// key = value config file (flags win).
struct Context {
  KeyValueConfig kv;
  std::filesystem::path out = "out";
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::string scheme = "byol";
  std::string head_variant = "avg1d";
  std::string head_size = "s";
  bool end_to_end = false;
  bool serial = false;
  int threads = 0;

  std::filesystem::path corpus;
  std::filesystem::path encoder_ckpt;
  std::vector<std::filesystem::path> encoder_ckpts;
  std::filesystem::path policy_ckpt;
  int episodes = -1;     // -1: take from config / default
  int n_videos = -1;
  int video_length = -1;
  int eval_episodes = 20;
  bool heatmap = false;
};

int run_gen_corpus(const Context& ctx);
int run_pretrain(const Context& ctx);
int run_train_agent(const Context& ctx);
int run_ablate(const Context& ctx);
int run_evaluate(const Context& ctx);

// Shared helpers, also exercised directly by tests.
HeadVariant variant_from(const Context& ctx);

void save_policy_checkpoint(const std::filesystem::path& path,
                            const PolicyNet<float>& policy,
                            const VecX<float>& theta,
                            const ShapeContract& contract);

struct LoadedPolicy {
  HeadVariant variant;
  int n_actions = 1;
  ShapeContract contract;
  VecX<float> theta;
};
LoadedPolicy load_policy_checkpoint(const std::filesystem::path& path);

// Median-of-seeds reporting written by train-agent.
void write_aggregate_csv(const std::filesystem::path& path,
                         const std::vector<std::vector<double>>& seed_rewards,
                         int episodes, int window);

}  // namespace driverep::cli

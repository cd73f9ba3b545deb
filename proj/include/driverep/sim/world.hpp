#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "driverep/core/image.hpp"
#include "driverep/core/kv_config.hpp"
#include "driverep/core/rng.hpp"
#include "driverep/sim/route.hpp"

namespace driverep {

struct WorldConfig {
  RouteId route = RouteId::kStraight;
  int frame_size = 64;      // square frames, full scale 128
  int stack_length = 4;     // frames per observation
  int max_steps = 400;
  double lane_penalty = 2.0;       // c_l
  double collision_penalty = 30.0;  // c_c
  double dt = 0.1;                  // seconds per step
  double speed = 5.0;               // autopilot speed, m/s
  double wheelbase = 2.5;           // m
  double max_steer_deg = 30.0;      // front wheel angle at |steering| = 1
  double lane_half_width = 2.0;     // m
  double vehicle_radius = 0.8;      // collision footprint, m
  double view_width = 16.0;         // rendered window width, m
  double view_behind = 4.0;         // metres of road kept behind the ego

  void validate() const;
  static WorldConfig from_kv(const KeyValueConfig& kv,
                             const std::string& prefix = "sim.");
};

// A temporal stack of frames, oldest first.
struct VideoClip {
  std::vector<FrameU8> frames;

  int length() const { return static_cast<int>(frames.size()); }
  int height() const { return frames.empty() ? 0 : frames.front().height; }
  int width() const { return frames.empty() ? 0 : frames.front().width; }
};

struct WorldState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
  int step = 0;
  bool done = false;
  double spawn_arc = 0.0;
  std::vector<ObstacleSpec> obstacles;  // current positions via elapsed time
};

struct StepInfo {
  bool lane_invaded = false;
  bool collided = false;
  int step = 0;
};

struct StepResult {
  VideoClip observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

struct EpisodeStats {
  double total_reward = 0.0;
  int steps = 0;
  int lane_invasions = 0;
  int collisions = 0;
};

// Sparse penalty: -c_l when out of lane this step, -c_c on collision, else 0.
double compute_reward(bool lane_invaded, bool collided,
                      const WorldConfig& config);

struct TraceRow {
  int step;
  double x, y, heading, steering, reward;
  bool lane_invaded, collided;
};

// Deterministic 2D driving world. One instance per thread; all behaviour is
// a pure function of (seed, config, action sequence).
class World {
 public:
  explicit World(const WorldConfig& config);

  VideoClip reset(std::uint64_t seed);
  StepResult step(double steering);

  FrameU8 render() const;  // pure rasterization of the current state

  const WorldConfig& config() const { return config_; }
  const WorldState& state() const { return state_; }
  const Route& route() const { return route_; }
  const EpisodeStats& episode_stats() const { return stats_; }
  const VideoClip& observation() const { return clip_; }

  // Signed lateral offset of the ego from the centerline.
  double ego_lateral() const;

 private:
  void advance_obstacles();
  std::pair<double, double> obstacle_position(const ObstacleSpec& obs) const;

  WorldConfig config_;
  Route route_;
  WorldState state_;
  EpisodeStats stats_;
  VideoClip clip_;  // ring of the last stack_length frames
};

// Runs reset + step loop until done. The policy maps the current observation
// to a steering value in [-1, 1].
using PolicyFn = std::function<double(const VideoClip&)>;
EpisodeStats rollout_episode(const PolicyFn& policy, std::uint64_t seed,
                             const WorldConfig& config,
                             std::vector<TraceRow>* trace = nullptr);

void write_trace_csv(const std::filesystem::path& path,
                     const std::vector<TraceRow>& trace);

// Palette used by the rasterizer (r, g, b). Exposed so tests can count
// pixels of a given class.
struct RenderPalette {
  static constexpr std::uint8_t background[3] = {26, 82, 40};
  static constexpr std::uint8_t road[3] = {88, 88, 96};
  static constexpr std::uint8_t boundary[3] = {235, 235, 235};
  static constexpr std::uint8_t center_dash[3] = {222, 192, 60};
  static constexpr std::uint8_t obstacle[3] = {198, 48, 38};
};

}  // namespace driverep

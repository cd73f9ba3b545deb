#include "driverep/sim/world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "driverep/core/csv.hpp"
#include "driverep/core/errors.hpp"

namespace driverep {

void WorldConfig::validate() const {
  if (frame_size < 16) throw ConfigError("frame_size must be >= 16");
  if (stack_length < 1) throw ConfigError("stack_length must be >= 1");
  if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
  if (lane_penalty < 0) throw ConfigError("lane penalty must be >= 0");
  if (collision_penalty < 0) throw ConfigError("collision penalty must be >= 0");
  if (dt <= 0) throw ConfigError("dt must be positive");
  if (speed <= 0) throw ConfigError("speed must be positive");
  if (wheelbase <= 0) throw ConfigError("wheelbase must be positive");
  if (lane_half_width <= vehicle_radius) {
    throw ConfigError("lane half-width must exceed the vehicle footprint");
  }
}

WorldConfig WorldConfig::from_kv(const KeyValueConfig& kv,
                                 const std::string& p) {
  WorldConfig c;
  c.route = parse_route_id(kv.get_string(p + "route", route_id_name(c.route)));
  c.frame_size = static_cast<int>(kv.get_int(p + "frame_size", c.frame_size));
  c.stack_length =
      static_cast<int>(kv.get_int(p + "stack_length", c.stack_length));
  c.max_steps = static_cast<int>(kv.get_int(p + "max_steps", c.max_steps));
  c.lane_penalty = kv.get_real(p + "lane_penalty", c.lane_penalty);
  c.collision_penalty =
      kv.get_real(p + "collision_penalty", c.collision_penalty);
  c.dt = kv.get_real(p + "dt", c.dt);
  c.speed = kv.get_real(p + "speed", c.speed);
  c.wheelbase = kv.get_real(p + "wheelbase", c.wheelbase);
  c.max_steer_deg = kv.get_real(p + "max_steer_deg", c.max_steer_deg);
  c.lane_half_width = kv.get_real(p + "lane_half_width", c.lane_half_width);
  c.vehicle_radius = kv.get_real(p + "vehicle_radius", c.vehicle_radius);
  c.view_width = kv.get_real(p + "view_width", c.view_width);
  c.view_behind = kv.get_real(p + "view_behind", c.view_behind);
  c.validate();
  return c;
}

double compute_reward(bool lane_invaded, bool collided,
                      const WorldConfig& config) {
  return -(lane_invaded ? config.lane_penalty : 0.0) -
         (collided ? config.collision_penalty : 0.0);
}

World::World(const WorldConfig& config)
    : config_(config), route_(make_route(config.route)) {
  config_.validate();
}

double World::ego_lateral() const {
  return route_.lateral_offset(state_.x, state_.y).lateral;
}

VideoClip World::reset(std::uint64_t seed) {
  Rng rng(Rng::split_mix(seed ^ 0x5157ae37cb90d2f1ULL));
  // Leave room for a full episode plus margin ahead of the spawn point.
  const double travel = config_.speed * config_.dt * config_.max_steps;
  const double hi = std::max(5.0, route_.total_length() - travel - 10.0);
  const double spawn = rng.uniform(2.0, hi);
  const Pose pose = route_.pose_at(spawn);
  state_ = WorldState{};
  state_.x = pose.x;
  state_.y = pose.y;
  state_.heading = pose.heading;
  state_.speed = config_.speed;
  state_.spawn_arc = spawn;
  state_.obstacles.clear();
  for (const auto& spec : route_.obstacles()) {
    state_.obstacles.push_back(spec);
  }
  stats_ = EpisodeStats{};
  const FrameU8 first = render();
  clip_.frames.assign(static_cast<std::size_t>(config_.stack_length), first);
  return clip_;
}

void World::advance_obstacles() {
  for (auto& obs : state_.obstacles) {
    if (obs.speed_along != 0.0) {
      obs.s += obs.speed_along * config_.dt;
    }
  }
}

std::pair<double, double> World::obstacle_position(
    const ObstacleSpec& obs) const {
  // Anchor pose plus the lateral offset along the left normal.
  const Pose anchor = route_.pose_at(obs.s);
  return {anchor.x - std::sin(anchor.heading) * obs.lateral,
          anchor.y + std::cos(anchor.heading) * obs.lateral};
}

StepResult World::step(double steering) {
  if (state_.done) {
    throw ProtocolError("step() called on a finished episode");
  }
  steering = std::clamp(steering, -1.0, 1.0);
  const double steer_angle =
      steering * config_.max_steer_deg * std::numbers::pi / 180.0;

  // Kinematic bicycle at fixed autopilot speed, explicit Euler.
  state_.x += state_.speed * std::cos(state_.heading) * config_.dt;
  state_.y += state_.speed * std::sin(state_.heading) * config_.dt;
  state_.heading += state_.speed / config_.wheelbase *
                    std::tan(steer_angle) * config_.dt;
  advance_obstacles();
  state_.step += 1;

  const LateralQuery q = route_.lateral_offset(state_.x, state_.y);
  const bool lane_invaded = std::abs(q.lateral) > config_.lane_half_width;
  bool collided = false;
  for (const auto& obs : state_.obstacles) {
    const auto [ox, oy] = obstacle_position(obs);
    if (std::hypot(state_.x - ox, state_.y - oy) <
        config_.vehicle_radius + obs.radius) {
      collided = true;
      break;
    }
  }

  const double reward = compute_reward(lane_invaded, collided, config_);
  state_.done = collided || state_.step >= config_.max_steps;

  stats_.total_reward += reward;
  stats_.steps = state_.step;
  stats_.lane_invasions += lane_invaded ? 1 : 0;
  stats_.collisions += collided ? 1 : 0;

  const FrameU8 frame = render();
  clip_.frames.erase(clip_.frames.begin());
  clip_.frames.push_back(frame);

  StepResult result;
  result.observation = clip_;
  result.reward = reward;
  result.done = state_.done;
  result.info = StepInfo{lane_invaded, collided, state_.step};
  return result;
}

FrameU8 World::render() const {
  const int n = config_.frame_size;
  FrameU8 frame = FrameU8::filled(n, n);
  const double m_per_px = config_.view_width / n;
  // Ego sits on the vertical axis, `view_behind` metres above the bottom
  // edge, facing up.
  const double ego_row = n - config_.view_behind / m_per_px;
  const double ego_col = n / 2.0;
  const double ch = std::cos(state_.heading);
  const double sh = std::sin(state_.heading);
  const double boundary_w = 0.5;   // marking strip half-plane width, m
  const double dash_half = 0.2;    // center dash half-width, m
  const double dash_period = 4.0;  // dash cycle length along the lane, m
  const double dash_on = 2.0;

  std::vector<std::pair<double, double>> obstacle_xy;
  obstacle_xy.reserve(state_.obstacles.size());
  for (const auto& obs : state_.obstacles) {
    obstacle_xy.push_back(obstacle_position(obs));
  }

  for (int i = 0; i < n; ++i) {
    const double forward = (ego_row - (i + 0.5)) * m_per_px;
    for (int j = 0; j < n; ++j) {
      const double right = (j + 0.5 - ego_col) * m_per_px;
      // World position of the pixel center.
      const double wx = state_.x + forward * ch + right * sh;
      const double wy = state_.y + forward * sh - right * ch;

      const std::uint8_t* color = RenderPalette::background;
      bool is_obstacle = false;
      for (std::size_t k = 0; k < state_.obstacles.size(); ++k) {
        const double dx = wx - obstacle_xy[k].first;
        const double dy = wy - obstacle_xy[k].second;
        const double r = state_.obstacles[k].radius;
        if (dx * dx + dy * dy <= r * r) {
          is_obstacle = true;
          break;
        }
      }
      if (is_obstacle) {
        color = RenderPalette::obstacle;
      } else {
        const LateralQuery q = route_.lateral_offset(wx, wy);
        const double d = std::abs(q.lateral);
        const double hw = config_.lane_half_width;
        if (q.on_route && std::abs(d - hw) <= boundary_w / 2.0) {
          color = RenderPalette::boundary;
        } else if (q.on_route && d <= hw) {
          const double phase = std::fmod(q.arc_pos, dash_period);
          if (d <= dash_half && phase < dash_on) {
            color = RenderPalette::center_dash;
          } else {
            color = RenderPalette::road;
          }
        }
      }
      frame.at(0, i, j) = color[0];
      frame.at(1, i, j) = color[1];
      frame.at(2, i, j) = color[2];
    }
  }
  return frame;
}

EpisodeStats rollout_episode(const PolicyFn& policy, std::uint64_t seed,
                             const WorldConfig& config,
                             std::vector<TraceRow>* trace) {
  World world(config);
  VideoClip obs = world.reset(seed);
  while (true) {
    const double steering = policy(obs);
    const StepResult r = world.step(steering);
    if (trace) {
      trace->push_back(TraceRow{r.info.step, world.state().x, world.state().y,
                                world.state().heading, steering, r.reward,
                                r.info.lane_invaded, r.info.collided});
    }
    obs = r.observation;
    if (r.done) break;
  }
  return world.episode_stats();
}

void write_trace_csv(const std::filesystem::path& path,
                     const std::vector<TraceRow>& trace) {
  CsvWriter csv(path, {"step", "x", "y", "heading", "steering", "reward",
                       "lane_invaded", "collided"});
  for (const auto& row : trace) {
    csv.row({std::to_string(row.step), format_real(row.x), format_real(row.y),
             format_real(row.heading), format_real(row.steering),
             format_real(row.reward), row.lane_invaded ? "1" : "0",
             row.collided ? "1" : "0"});
  }
}

}  // namespace driverep

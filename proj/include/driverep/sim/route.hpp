#pragma once

#include <string>
#include <vector>

namespace driverep {

enum class RouteId {
  kStraight,
  kGentleCurve,
  kSCurve,
  kObstacleCourse,
};

RouteId parse_route_id(const std::string& name);
std::string route_id_name(RouteId id);

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians, ccw from +x
};

// Nearest-centerline query result. `lateral` is signed, positive to the left
// of the travel direction.
struct LateralQuery {
  double lateral = 0.0;
  double arc_pos = 0.0;  // arc length of the nearest centerline point
  bool on_route = false;
};

// An obstacle anchored to the route at construction: placed at arc length
// `s` with lateral offset `lateral`, optionally sliding along the route
// tangent at constant speed.
struct ObstacleSpec {
  double s = 0.0;
  double lateral = 0.0;
  double radius = 0.5;
  double speed_along = 0.0;  // m/s along the spawn tangent
};

// Tangent-continuous chain of line and circular-arc segments.
class Route {
 public:
  struct Segment {
    bool is_arc = false;
    double length = 0.0;
    // line
    double x0 = 0.0, y0 = 0.0, ux = 1.0, uy = 0.0;
    // arc: center, radius, start angle (from center to start point),
    // signed sweep (+ccw)
    double cx = 0.0, cy = 0.0, radius = 0.0, angle0 = 0.0, sweep = 0.0;
  };

  double total_length() const { return total_length_; }
  Pose pose_at(double s) const;
  LateralQuery lateral_offset(double x, double y) const;

  const std::vector<ObstacleSpec>& obstacles() const { return obstacles_; }

  // Builders; the chain starts at `start` and grows tangent-continuously.
  static Route start_at(Pose start);
  Route& add_line(double length);
  Route& add_arc(double radius, double sweep_rad);  // sweep > 0 turns left
  Route& add_obstacle(const ObstacleSpec& obs);

 private:
  std::vector<Segment> segments_;
  std::vector<ObstacleSpec> obstacles_;
  Pose end_pose_;
  double total_length_ = 0.0;
};

// Built-in layouts. Every route is long enough for a full default episode
// (400 steps at 0.5 m per step) from any sanctioned spawn position.
Route make_route(RouteId id);

}  // namespace driverep

#include "driverep/sim/route.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "driverep/core/errors.hpp"

namespace driverep {

namespace {
constexpr double kPi = std::numbers::pi;

double wrap_angle(double a) {
  while (a > kPi) a -= 2.0 * kPi;
  while (a < -kPi) a += 2.0 * kPi;
  return a;
}
}  // namespace

RouteId parse_route_id(const std::string& name) {
  if (name == "straight") return RouteId::kStraight;
  if (name == "gentle_curve") return RouteId::kGentleCurve;
  if (name == "s_curve") return RouteId::kSCurve;
  if (name == "obstacle_course") return RouteId::kObstacleCourse;
  throw ConfigError("unknown route id: '" + name +
                    "' (expected straight, gentle_curve, s_curve or "
                    "obstacle_course)");
}

std::string route_id_name(RouteId id) {
  switch (id) {
    case RouteId::kStraight:
      return "straight";
    case RouteId::kGentleCurve:
      return "gentle_curve";
    case RouteId::kSCurve:
      return "s_curve";
    case RouteId::kObstacleCourse:
      return "obstacle_course";
  }
  return "?";
}

Route Route::start_at(Pose start) {
  Route r;
  r.end_pose_ = start;
  return r;
}

Route& Route::add_line(double length) {
  Segment seg;
  seg.is_arc = false;
  seg.length = length;
  seg.x0 = end_pose_.x;
  seg.y0 = end_pose_.y;
  seg.ux = std::cos(end_pose_.heading);
  seg.uy = std::sin(end_pose_.heading);
  segments_.push_back(seg);
  end_pose_.x += seg.ux * length;
  end_pose_.y += seg.uy * length;
  total_length_ += length;
  return *this;
}

Route& Route::add_arc(double radius, double sweep_rad) {
  Segment seg;
  seg.is_arc = true;
  seg.radius = radius;
  seg.sweep = sweep_rad;
  seg.length = radius * std::abs(sweep_rad);
  // Center lies on the left normal (-sin h, cos h) for a left turn.
  const double side = sweep_rad > 0 ? 1.0 : -1.0;
  seg.cx = end_pose_.x + side * radius * (-std::sin(end_pose_.heading));
  seg.cy = end_pose_.y + side * radius * (std::cos(end_pose_.heading));
  seg.angle0 = std::atan2(end_pose_.y - seg.cy, end_pose_.x - seg.cx);
  segments_.push_back(seg);
  const double angle1 = seg.angle0 + sweep_rad;
  end_pose_.x = seg.cx + radius * std::cos(angle1);
  end_pose_.y = seg.cy + radius * std::sin(angle1);
  end_pose_.heading = wrap_angle(end_pose_.heading + sweep_rad);
  total_length_ += seg.length;
  return *this;
}

Route& Route::add_obstacle(const ObstacleSpec& obs) {
  obstacles_.push_back(obs);
  return *this;
}

Pose Route::pose_at(double s) const {
  if (segments_.empty()) throw ProtocolError("empty route");
  if (s < 0.0) s = 0.0;
  if (s > total_length_) s = total_length_;
  for (const auto& seg : segments_) {
    if (s > seg.length + 1e-12) {
      s -= seg.length;
      continue;
    }
    Pose p;
    if (!seg.is_arc) {
      p.x = seg.x0 + seg.ux * s;
      p.y = seg.y0 + seg.uy * s;
      p.heading = std::atan2(seg.uy, seg.ux);
    } else {
      const double dir = seg.sweep > 0 ? 1.0 : -1.0;
      const double angle = seg.angle0 + dir * s / seg.radius;
      p.x = seg.cx + seg.radius * std::cos(angle);
      p.y = seg.cy + seg.radius * std::sin(angle);
      // Tangent is perpendicular to the center ray, oriented by sweep sign.
      p.heading = wrap_angle(angle + dir * kPi / 2.0);
    }
    return p;
  }
  // s == total_length_ exactly: end pose of the final segment.
  return end_pose_;
}

LateralQuery Route::lateral_offset(double x, double y) const {
  if (segments_.empty()) throw ProtocolError("empty route");
  LateralQuery best;
  double best_abs = std::numeric_limits<double>::infinity();
  double s_base = 0.0;
  for (const auto& seg : segments_) {
    double s_loc = -1.0;
    double lateral = 0.0;
    bool in_span = false;
    if (!seg.is_arc) {
      const double rx = x - seg.x0;
      const double ry = y - seg.y0;
      s_loc = rx * seg.ux + ry * seg.uy;
      lateral = seg.ux * ry - seg.uy * rx;  // cross(u, r): left positive
      in_span = s_loc >= -1e-9 && s_loc <= seg.length + 1e-9;
    } else {
      const double rx = x - seg.cx;
      const double ry = y - seg.cy;
      const double dist = std::hypot(rx, ry);
      const double dir = seg.sweep > 0 ? 1.0 : -1.0;
      const double angle = std::atan2(ry, rx);
      double delta = wrap_angle(angle - seg.angle0) * dir;
      // Accept the wrapped angle only inside the swept span.
      if (delta < 0 && delta > -1e-9) delta = 0;
      in_span = delta >= 0 && delta <= std::abs(seg.sweep) + 1e-9;
      s_loc = delta * seg.radius;
      // Left of travel: toward the center on a left turn.
      lateral = dir * (seg.radius - dist);
    }
    if (in_span && std::abs(lateral) < best_abs) {
      best_abs = std::abs(lateral);
      best.lateral = lateral;
      best.arc_pos = s_base + std::min(std::max(s_loc, 0.0), seg.length);
      best.on_route = true;
    }
    s_base += seg.length;
  }
  if (!best.on_route) {
    // Off the ends: report distance to the nearest terminus as lateral
    // magnitude so callers still see "far from the lane".
    const Pose a = pose_at(0.0);
    const Pose b = pose_at(total_length_);
    const double da = std::hypot(x - a.x, y - a.y);
    const double db = std::hypot(x - b.x, y - b.y);
    best.lateral = std::min(da, db);
    best.arc_pos = da < db ? 0.0 : total_length_;
  }
  return best;
}

Route make_route(RouteId id) {
  switch (id) {
    case RouteId::kStraight:
      return Route::start_at({0.0, 0.0, 0.0}).add_line(280.0);
    case RouteId::kGentleCurve: {
      Route r = Route::start_at({0.0, 0.0, 0.0});
      r.add_line(40.0)
          .add_arc(60.0, 70.0 * kPi / 180.0)
          .add_line(40.0)
          .add_arc(60.0, 70.0 * kPi / 180.0)
          .add_line(60.0);
      return r;
    }
    case RouteId::kSCurve: {
      Route r = Route::start_at({0.0, 0.0, 0.0});
      r.add_line(20.0);
      double sign = 1.0;
      for (int i = 0; i < 6; ++i) {
        r.add_arc(30.0, sign * 75.0 * kPi / 180.0);
        sign = -sign;
      }
      r.add_line(40.0);
      return r;
    }
    case RouteId::kObstacleCourse: {
      Route r = Route::start_at({0.0, 0.0, 0.0});
      r.add_line(140.0).add_arc(45.0, 60.0 * kPi / 180.0).add_line(120.0);
      double side = 1.0;
      for (double s = 45.0; s < 260.0; s += 35.0) {
        r.add_obstacle({s, side * 0.9, 0.5, 0.0});
        side = -side;
      }
      return r;
    }
  }
  throw ConfigError("unknown route id");
}

}  // namespace driverep

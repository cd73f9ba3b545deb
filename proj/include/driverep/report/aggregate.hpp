#pragma once

#include <string>
#include <vector>

namespace driverep {

// Per-episode median across seeds. Every seed log must cover `episodes`
// entries; the curve has exactly that length.
std::vector<double> median_curve(
    const std::vector<std::vector<double>>& per_seed, int episodes);

// Trailing moving average with window min(i + 1, window).
std::vector<double> trailing_moving_average(const std::vector<double>& values,
                                            int window);

// Min-max normalization onto [0, 1]; the observed maximum maps to 1 and the
// minimum to 0. A constant vector maps to all zeros.
std::vector<double> minmax_normalize(const std::vector<double>& values);

struct AblationCell {
  std::string encoder;  // label, usually the checkpoint stem
  std::string head;     // variant label, e.g. "avg2d_s"
  bool done = false;
  double best_smoothed_reward = 0.0;
  double normalized = 0.0;
};

}  // namespace driverep

#include "driverep/report/aggregate.hpp"

#include <algorithm>
#include <cmath>

#include "driverep/core/errors.hpp"

namespace driverep {

std::vector<double> median_curve(
    const std::vector<std::vector<double>>& per_seed, int episodes) {
  if (per_seed.empty()) throw ContractError("median_curve: no seed logs");
  for (const auto& run : per_seed) {
    if (static_cast<int>(run.size()) < episodes) {
      throw ContractError("median_curve: a seed log is shorter than the "
                          "requested episode count");
    }
  }
  std::vector<double> curve(static_cast<std::size_t>(episodes));
  std::vector<double> column(per_seed.size());
  for (int e = 0; e < episodes; ++e) {
    for (std::size_t s = 0; s < per_seed.size(); ++s) {
      column[s] = per_seed[s][static_cast<std::size_t>(e)];
    }
    std::sort(column.begin(), column.end());
    const std::size_t n = column.size();
    curve[static_cast<std::size_t>(e)] =
        n % 2 == 1 ? column[n / 2]
                   : 0.5 * (column[n / 2 - 1] + column[n / 2]);
  }
  return curve;
}

std::vector<double> trailing_moving_average(const std::vector<double>& values,
                                            int window) {
  if (window < 1) throw ContractError("moving average window must be >= 1");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t lo = i + 1 >= static_cast<std::size_t>(window)
                               ? i + 1 - static_cast<std::size_t>(window)
                               : 0;
    double acc = 0.0;
    for (std::size_t j = lo; j <= i; ++j) acc += values[j];
    out[i] = acc / static_cast<double>(i - lo + 1);
  }
  return out;
}

std::vector<double> minmax_normalize(const std::vector<double>& values) {
  if (values.empty()) return {};
  double lo = values[0], hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<double> out(values.size());
  if (hi <= lo) {
    std::fill(out.begin(), out.end(), 0.0);
    return out;
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = (values[i] - lo) / (hi - lo);
  }
  return out;
}

}  // namespace driverep

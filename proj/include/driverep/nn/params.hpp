#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "driverep/core/errors.hpp"
#include "driverep/core/rng.hpp"
#include "driverep/nn/tensor.hpp"

namespace driverep {

// One named parameter block inside a flat parameter vector. Blocks with
// fan_in > 0 are weights (He-normal initialized); fan_in == 0 marks biases
// and other zero-initialized state.
struct ParamBlock {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  int fan_in = 0;

  Eigen::Index size() const { return rows * cols; }
};

// Describes how a module's parameters pack into one flat vector. Keeping
// parameters flat makes momentum averaging, optimizer state, finite
// difference probes, and checkpoint sections one-liners.
class ParamLayout {
 public:
  Eigen::Index add(const std::string& name, Eigen::Index rows,
                   Eigen::Index cols, int fan_in) {
    if (index_.count(name)) {
      throw ContractError("duplicate parameter block: " + name);
    }
    ParamBlock b;
    b.name = name;
    b.offset = total_;
    b.rows = rows;
    b.cols = cols;
    b.fan_in = fan_in;
    index_[name] = blocks_.size();
    blocks_.push_back(b);
    total_ += b.size();
    return b.offset;
  }

  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  Eigen::Index total_size() const { return total_; }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  const ParamBlock& block(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) {
      throw ContractError("unknown parameter block: " + name);
    }
    return blocks_[it->second];
  }

  bool same_as(const ParamLayout& other) const {
    if (blocks_.size() != other.blocks_.size()) return false;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const auto& a = blocks_[i];
      const auto& b = other.blocks_[i];
      if (a.name != b.name || a.rows != b.rows || a.cols != b.cols ||
          a.offset != b.offset) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<ParamBlock> blocks_;
  std::map<std::string, std::size_t> index_;
  Eigen::Index total_ = 0;
};

// Column-major matrix view of one block inside a flat vector.
template <typename S>
Eigen::Map<const MatX<S>> block_view(const VecX<S>& theta,
                                     const ParamBlock& b) {
  return Eigen::Map<const MatX<S>>(theta.data() + b.offset, b.rows, b.cols);
}

template <typename S>
Eigen::Map<MatX<S>> block_view(VecX<S>& theta, const ParamBlock& b) {
  return Eigen::Map<MatX<S>>(theta.data() + b.offset, b.rows, b.cols);
}

template <typename S>
Eigen::Map<const MatX<S>> block_map(const S* theta, const ParamBlock& b) {
  return Eigen::Map<const MatX<S>>(theta + b.offset, b.rows, b.cols);
}

template <typename S>
Eigen::Map<MatX<S>> block_map(S* theta, const ParamBlock& b) {
  return Eigen::Map<MatX<S>>(theta + b.offset, b.rows, b.cols);
}

// He-normal fan-in draw for weight blocks, zeros for biases.
template <typename S>
VecX<S> init_he_normal(const ParamLayout& layout, std::uint64_t seed) {
  VecX<S> theta = VecX<S>::Zero(layout.total_size());
  Rng rng(seed);
  for (const auto& b : layout.blocks()) {
    if (b.fan_in <= 0) continue;
    const double stddev = std::sqrt(2.0 / static_cast<double>(b.fan_in));
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      theta[b.offset + i] = static_cast<S>(rng.gaussian() * stddev);
    }
  }
  return theta;
}

// theta_target' = m * theta_target + (1 - m) * theta_online, elementwise.
// m = 1 is legal here (target never moves); training configs restrict the
// coefficient to [0, 1).
template <typename S>
void momentum_update(const ParamLayout& layout, VecX<S>& target,
                     const VecX<S>& online, double m) {
  if (m < 0.0 || m > 1.0) {
    throw ConfigError("momentum coefficient must be in [0, 1]");
  }
  if (target.size() != layout.total_size() ||
      online.size() < layout.total_size()) {
    throw ContractError("momentum_update: parameter layout mismatch");
  }
  const auto n = layout.total_size();
  target.head(n) = static_cast<S>(m) * target.head(n) +
                   static_cast<S>(1.0 - m) * online.head(n);
}

// Variant for parameters described by two independently built layouts.
template <typename S>
void momentum_update(const ParamLayout& online_layout, const VecX<S>& online,
                     const ParamLayout& target_layout, VecX<S>& target,
                     double m) {
  if (!online_layout.same_as(target_layout)) {
    throw ContractError("momentum_update: parameter layouts differ");
  }
  momentum_update(target_layout, target, online, m);
}

}  // namespace driverep

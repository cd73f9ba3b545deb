#pragma once

#include <Eigen/Dense>

#include <array>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "driverep/core/errors.hpp"

namespace driverep {

template <typename S>
using VecX = Eigen::Vector<S, Eigen::Dynamic>;
template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using RowMatX =
    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using ArrX = Eigen::Array<S, Eigen::Dynamic, 1>;

// Dense n-d array: a shape over flat row-major (C-order) storage. Heavy math
// happens through Eigen maps onto `data`.
template <typename S>
struct Tensor {
  std::vector<int> dims;
  VecX<S> data;

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape) {
    Tensor t;
    t.dims = std::move(shape);
    t.data = VecX<S>::Zero(count(t.dims));
    return t;
  }

  static Eigen::Index count(const std::vector<int>& shape) {
    Eigen::Index n = 1;
    for (int d : shape) {
      if (d <= 0) throw ContractError("tensor dims must be positive");
      n *= d;
    }
    return n;
  }

  Eigen::Index numel() const { return data.size(); }
  int rank() const { return static_cast<int>(dims.size()); }
  int dim(int i) const { return dims.at(static_cast<std::size_t>(i)); }

  // Index into a rank-4 tensor laid out as (d0, d1, d2, d3).
  Eigen::Index idx4(int a, int b, int c, int d) const {
    return ((static_cast<Eigen::Index>(a) * dims[1] + b) * dims[2] + c) *
               dims[3] +
           d;
  }

  S& at4(int a, int b, int c, int d) { return data[idx4(a, b, c, d)]; }
  S at4(int a, int b, int c, int d) const { return data[idx4(a, b, c, d)]; }

  Eigen::Index idx3(int a, int b, int c) const {
    return (static_cast<Eigen::Index>(a) * dims[1] + b) * dims[2] + c;
  }
  S& at3(int a, int b, int c) { return data[idx3(a, b, c)]; }
  S at3(int a, int b, int c) const { return data[idx3(a, b, c)]; }

  bool same_shape(const Tensor& other) const { return dims == other.dims; }

  std::string shape_string() const {
    std::string s = "(";
    for (std::size_t i = 0; i < dims.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(dims[i]);
    }
    return s + ")";
  }
};

// Maps the trailing axes of a rank-4 tensor (c, t, h, w) as one row per
// channel: rows = c, cols = t*h*w.
template <typename S>
Eigen::Map<RowMatX<S>> channel_matrix(Tensor<S>& t) {
  const Eigen::Index c = t.dims[0];
  return Eigen::Map<RowMatX<S>>(t.data.data(), c, t.numel() / c);
}

template <typename S>
Eigen::Map<const RowMatX<S>> channel_matrix(const Tensor<S>& t) {
  const Eigen::Index c = t.dims[0];
  return Eigen::Map<const RowMatX<S>>(t.data.data(), c, t.numel() / c);
}

}  // namespace driverep

#pragma once

#include <array>
#include <cmath>
#include <string>

#include "driverep/nn/params.hpp"
#include "driverep/nn/tensor.hpp"

namespace driverep {

// ---------------------------------------------------------------------------
// Activations and small pointwise ops (free functions, expression friendly).
// ---------------------------------------------------------------------------

template <typename S>
void relu_inplace(VecX<S>& v) {
  v = v.cwiseMax(S(0));
}

// Backward through ReLU given the post-activation values.
template <typename S>
VecX<S> relu_backward(const VecX<S>& post, const VecX<S>& dy) {
  return ((post.array() > S(0)).template cast<S>() * dy.array()).matrix();
}

template <typename S>
S softplus(S x) {
  return x > S(20) ? x : std::log1p(std::exp(x));
}

template <typename S>
S sigmoid(S x) {
  return x >= S(0) ? S(1) / (S(1) + std::exp(-x))
                   : std::exp(x) / (S(1) + std::exp(x));
}

template <typename S>
VecX<S> sigmoid(const VecX<S>& x) {
  VecX<S> y(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
  return y;
}

// Row-wise L2 normalization. Throws on (near-)zero rows: a zero-norm
// embedding has no direction.
template <typename S>
MatX<S> l2_normalize_rows(const MatX<S>& x, S eps = S(1e-12)) {
  MatX<S> y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const S n = x.row(i).norm();
    if (!(n > eps)) {
      throw DegenerateInputError("l2_normalize_rows: zero-norm row");
    }
    y.row(i) = x.row(i) / n;
  }
  return y;
}

// d/dx of y = x / ||x|| given x and upstream dy (per row).
template <typename S>
MatX<S> l2_normalize_rows_backward(const MatX<S>& x, const MatX<S>& dy) {
  MatX<S> dx(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const S n = x.row(i).norm();
    const auto y = x.row(i) / n;
    dx.row(i) = (dy.row(i) - y * y.dot(dy.row(i))) / n;
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Linear layer over a flat parameter vector.
// ---------------------------------------------------------------------------

template <typename S>
struct LinearSpec {
  int in = 0;
  int out = 0;
  ParamBlock w;  // out x in
  ParamBlock b;  // out x 1

  void build(ParamLayout& layout, const std::string& name, int in_dim,
             int out_dim) {
    in = in_dim;
    out = out_dim;
    layout.add(name + ".w", out_dim, in_dim, in_dim);
    layout.add(name + ".b", out_dim, 1, 0);
    w = layout.block(name + ".w");
    b = layout.block(name + ".b");
  }

  VecX<S> forward(const VecX<S>& x, const S* theta) const {
    return block_map<S>(theta, w) * x + block_map<S>(theta, b).col(0);
  }

  // Accumulates dW, db into grad; returns dx.
  VecX<S> backward(const VecX<S>& x, const VecX<S>& dy, const S* theta,
                   S* grad) const {
    block_map<S>(grad, w).noalias() += dy * x.transpose();
    block_map<S>(grad, b).col(0) += dy;
    return block_map<S>(theta, w).transpose() * dy;
  }

  // Batched rows: X is n x in, result n x out.
  MatX<S> forward_rows(const MatX<S>& x, const S* theta) const {
    MatX<S> y = x * block_map<S>(theta, w).transpose();
    y.rowwise() += block_map<S>(theta, b).col(0).transpose();
    return y;
  }

  MatX<S> backward_rows(const MatX<S>& x, const MatX<S>& dy, const S* theta,
                        S* grad) const {
    block_map<S>(grad, w).noalias() += dy.transpose() * x;
    block_map<S>(grad, b).col(0) += dy.colwise().sum().transpose();
    return dy * block_map<S>(theta, w);
  }
};

// ---------------------------------------------------------------------------
// 3D convolution (channels, time, height, width) via im2col + GEMM.
// A 2D convolution is the special case kernel_t = 1 on a tensor with T = 1.
// ---------------------------------------------------------------------------

template <typename S>
struct Conv3dSpec {
  int in_ch = 0;
  int out_ch = 0;
  std::array<int, 3> in_size{};   // (T, H, W)
  std::array<int, 3> out_size{};  // (T', H', W')
  std::array<int, 3> kernel{};
  std::array<int, 3> stride{};
  std::array<int, 3> pad{};
  ParamBlock w;  // out_ch x (in_ch * kt * kh * kw)
  ParamBlock b;  // out_ch x 1

  static int out_extent(int in, int k, int s, int p) {
    const int n = in + 2 * p - k;
    if (n < 0) throw ContractError("conv kernel larger than padded input");
    return n / s + 1;
  }

  void build(ParamLayout& layout, const std::string& name, int in_channels,
             std::array<int, 3> input_size, int out_channels,
             std::array<int, 3> kernel_size, std::array<int, 3> strides,
             std::array<int, 3> padding) {
    in_ch = in_channels;
    out_ch = out_channels;
    in_size = input_size;
    kernel = kernel_size;
    stride = strides;
    pad = padding;
    for (int a = 0; a < 3; ++a) {
      out_size[a] = out_extent(in_size[a], kernel[a], stride[a], pad[a]);
    }
    const int k = in_ch * kernel[0] * kernel[1] * kernel[2];
    layout.add(name + ".w", out_channels, k, k);
    layout.add(name + ".b", out_channels, 1, 0);
    w = layout.block(name + ".w");
    b = layout.block(name + ".b");
  }

  Eigen::Index patch_rows() const {
    return static_cast<Eigen::Index>(in_ch) * kernel[0] * kernel[1] *
           kernel[2];
  }
  Eigen::Index out_positions() const {
    return static_cast<Eigen::Index>(out_size[0]) * out_size[1] * out_size[2];
  }

  std::vector<int> output_dims() const {
    return {out_ch, out_size[0], out_size[1], out_size[2]};
  }

  // Gathers input patches into a (in_ch*kt*kh*kw) x (T'*H'*W') matrix.
  void im2col(const Tensor<S>& x, MatX<S>& patches) const {
    patches.setZero(patch_rows(), out_positions());
    const int T = in_size[0], H = in_size[1], W = in_size[2];
    Eigen::Index col = 0;
    for (int ot = 0; ot < out_size[0]; ++ot) {
      const int t0 = ot * stride[0] - pad[0];
      for (int oh = 0; oh < out_size[1]; ++oh) {
        const int h0 = oh * stride[1] - pad[1];
        for (int ow = 0; ow < out_size[2]; ++ow, ++col) {
          const int w0 = ow * stride[2] - pad[2];
          Eigen::Index row = 0;
          for (int c = 0; c < in_ch; ++c) {
            for (int dt = 0; dt < kernel[0]; ++dt) {
              const int t = t0 + dt;
              for (int dh = 0; dh < kernel[1]; ++dh) {
                const int h = h0 + dh;
                const bool inside_th =
                    t >= 0 && t < T && h >= 0 && h < H;
                for (int dw = 0; dw < kernel[2]; ++dw, ++row) {
                  const int ww = w0 + dw;
                  if (inside_th && ww >= 0 && ww < W) {
                    patches(row, col) = x.at4(c, t, h, ww);
                  }
                }
              }
            }
          }
        }
      }
    }
  }

  Tensor<S> forward(const Tensor<S>& x, const S* theta,
                    MatX<S>* patches_cache = nullptr) const {
    if (x.rank() != 4 || x.dim(0) != in_ch || x.dim(1) != in_size[0] ||
        x.dim(2) != in_size[1] || x.dim(3) != in_size[2]) {
      throw ContractError("conv3d: input shape " + x.shape_string() +
                          " does not match layer");
    }
    MatX<S> local;
    MatX<S>& patches = patches_cache ? *patches_cache : local;
    im2col(x, patches);
    Tensor<S> y = Tensor<S>::zeros(output_dims());
    auto ymat = channel_matrix(y);  // out_ch x positions, row-major
    ymat.noalias() = block_map<S>(theta, w) * patches;
    ymat.colwise() += block_map<S>(theta, b).col(0);
    return y;
  }

  // dy has the output shape. Accumulates dW, db; optionally produces dx.
  Tensor<S> backward(const MatX<S>& patches, const Tensor<S>& dy,
                     const S* theta, S* grad, bool need_dx) const {
    auto dymat = channel_matrix(dy);
    block_map<S>(grad, w).noalias() += dymat * patches.transpose();
    block_map<S>(grad, b).col(0) += dymat.rowwise().sum();
    Tensor<S> dx;
    if (!need_dx) return dx;
    MatX<S> dpatches = block_map<S>(theta, w).transpose() * dymat;
    dx = Tensor<S>::zeros({in_ch, in_size[0], in_size[1], in_size[2]});
    const int T = in_size[0], H = in_size[1], W = in_size[2];
    Eigen::Index col = 0;
    for (int ot = 0; ot < out_size[0]; ++ot) {
      const int t0 = ot * stride[0] - pad[0];
      for (int oh = 0; oh < out_size[1]; ++oh) {
        const int h0 = oh * stride[1] - pad[1];
        for (int ow = 0; ow < out_size[2]; ++ow, ++col) {
          const int w0 = ow * stride[2] - pad[2];
          Eigen::Index row = 0;
          for (int c = 0; c < in_ch; ++c) {
            for (int dt = 0; dt < kernel[0]; ++dt) {
              const int t = t0 + dt;
              for (int dh = 0; dh < kernel[1]; ++dh) {
                const int h = h0 + dh;
                const bool inside_th =
                    t >= 0 && t < T && h >= 0 && h < H;
                for (int dw = 0; dw < kernel[2]; ++dw, ++row) {
                  const int ww = w0 + dw;
                  if (inside_th && ww >= 0 && ww < W) {
                    dx.at4(c, t, h, ww) += dpatches(row, col);
                  }
                }
              }
            }
          }
        }
      }
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Pooling over a (C, T, H, W) feature map.
// ---------------------------------------------------------------------------

// Mean over (T, H, W) per channel.
template <typename S>
VecX<S> global_avg_pool(const Tensor<S>& f) {
  return channel_matrix(f).rowwise().mean();
}

template <typename S>
Tensor<S> global_avg_pool_backward(const VecX<S>& dpooled,
                                   const std::vector<int>& dims) {
  Tensor<S> dx = Tensor<S>::zeros(dims);
  auto m = channel_matrix(dx);
  const S inv = S(1) / static_cast<S>(m.cols());
  for (Eigen::Index col = 0; col < m.cols(); ++col) {
    m.col(col) = dpooled * inv;
  }
  return dx;
}

// Mean over T only: (C, T, H, W) -> (C, H, W).
template <typename S>
Tensor<S> temporal_avg(const Tensor<S>& f) {
  Tensor<S> y = Tensor<S>::zeros({f.dim(0), f.dim(2), f.dim(3)});
  const S inv = S(1) / static_cast<S>(f.dim(1));
  for (int c = 0; c < f.dim(0); ++c) {
    for (int t = 0; t < f.dim(1); ++t) {
      for (int h = 0; h < f.dim(2); ++h) {
        for (int w = 0; w < f.dim(3); ++w) {
          y.at3(c, h, w) += f.at4(c, t, h, w) * inv;
        }
      }
    }
  }
  return y;
}

template <typename S>
Tensor<S> temporal_avg_backward(const Tensor<S>& dy,
                                const std::vector<int>& dims) {
  Tensor<S> dx = Tensor<S>::zeros(dims);
  const S inv = S(1) / static_cast<S>(dims[1]);
  for (int c = 0; c < dims[0]; ++c) {
    for (int t = 0; t < dims[1]; ++t) {
      for (int h = 0; h < dims[2]; ++h) {
        for (int w = 0; w < dims[3]; ++w) {
          dx.at4(c, t, h, w) = dy.at3(c, h, w) * inv;
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Nearest-neighbour upsampling (decoder building block).
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> upsample_nearest(const Tensor<S>& x, std::array<int, 3> factor) {
  Tensor<S> y = Tensor<S>::zeros({x.dim(0), x.dim(1) * factor[0],
                                  x.dim(2) * factor[1],
                                  x.dim(3) * factor[2]});
  for (int c = 0; c < y.dim(0); ++c) {
    for (int t = 0; t < y.dim(1); ++t) {
      for (int h = 0; h < y.dim(2); ++h) {
        for (int w = 0; w < y.dim(3); ++w) {
          y.at4(c, t, h, w) =
              x.at4(c, t / factor[0], h / factor[1], w / factor[2]);
        }
      }
    }
  }
  return y;
}

template <typename S>
Tensor<S> upsample_nearest_backward(const Tensor<S>& dy,
                                    const std::vector<int>& in_dims,
                                    std::array<int, 3> factor) {
  Tensor<S> dx = Tensor<S>::zeros(in_dims);
  for (int c = 0; c < dy.dim(0); ++c) {
    for (int t = 0; t < dy.dim(1); ++t) {
      for (int h = 0; h < dy.dim(2); ++h) {
        for (int w = 0; w < dy.dim(3); ++w) {
          dx.at4(c, t / factor[0], h / factor[1], w / factor[2]) +=
              dy.at4(c, t, h, w);
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Gated recurrent cell. Gate order in the packed weights is (z, r, n):
//   z = sigmoid(Wz x + Uz h + bz)
//   r = sigmoid(Wr x + Ur h + br)
//   n = tanh(Wn x + r .* (Un h) + bn)
//   h' = z .* h + (1 - z) .* n
// ---------------------------------------------------------------------------

template <typename S>
struct GruCache {
  VecX<S> x, h_prev, z, r, n, uh_n;
};

template <typename S>
struct GruSpec {
  int input = 0;
  int hidden = 0;
  ParamBlock w;  // 3H x I
  ParamBlock u;  // 3H x H
  ParamBlock b;  // 3H x 1

  void build(ParamLayout& layout, const std::string& name, int input_dim,
             int hidden_dim) {
    input = input_dim;
    hidden = hidden_dim;
    layout.add(name + ".w", 3 * hidden_dim, input_dim, input_dim);
    layout.add(name + ".u", 3 * hidden_dim, hidden_dim, hidden_dim);
    layout.add(name + ".b", 3 * hidden_dim, 1, 0);
    w = layout.block(name + ".w");
    u = layout.block(name + ".u");
    b = layout.block(name + ".b");
  }

  VecX<S> step(const VecX<S>& x, const VecX<S>& h_prev, const S* theta,
               GruCache<S>* cache = nullptr) const {
    const auto W = block_map<S>(theta, w);
    const auto U = block_map<S>(theta, u);
    const auto B = block_map<S>(theta, b).col(0);
    const VecX<S> wx = W * x + B;
    const VecX<S> uh = U * h_prev;
    const int H = hidden;
    VecX<S> z(H), r(H), n(H);
    for (int i = 0; i < H; ++i) {
      z[i] = sigmoid(wx[i] + uh[i]);
      r[i] = sigmoid(wx[H + i] + uh[H + i]);
    }
    VecX<S> uh_n = uh.segment(2 * H, H);
    for (int i = 0; i < H; ++i) {
      n[i] = std::tanh(wx[2 * H + i] + r[i] * uh_n[i]);
    }
    VecX<S> h = z.cwiseProduct(h_prev) +
                (VecX<S>::Ones(H) - z).cwiseProduct(n);
    if (cache) {
      cache->x = x;
      cache->h_prev = h_prev;
      cache->z = z;
      cache->r = r;
      cache->n = n;
      cache->uh_n = uh_n;
    }
    return h;
  }

  // Backward through one step. Returns dh_prev; optionally also dx.
  VecX<S> backward(const GruCache<S>& c, const VecX<S>& dh, const S* theta,
                   S* grad, VecX<S>* dx_out = nullptr) const {
    const int H = hidden;
    const auto W = block_map<S>(theta, w);
    const auto U = block_map<S>(theta, u);
    const VecX<S> dz = dh.cwiseProduct(c.h_prev - c.n);
    const VecX<S> dn =
        dh.cwiseProduct(VecX<S>::Ones(H) - c.z);
    VecX<S> dh_prev = dh.cwiseProduct(c.z);

    // Pre-activation gradients.
    const VecX<S> dn_pre =
        dn.cwiseProduct(VecX<S>::Ones(H) - c.n.cwiseProduct(c.n));
    const VecX<S> dr = dn_pre.cwiseProduct(c.uh_n);
    const VecX<S> duh_n = dn_pre.cwiseProduct(c.r);
    const VecX<S> dz_pre =
        dz.cwiseProduct(c.z).cwiseProduct(VecX<S>::Ones(H) - c.z);
    const VecX<S> dr_pre =
        dr.cwiseProduct(c.r).cwiseProduct(VecX<S>::Ones(H) - c.r);

    VecX<S> dgates(3 * H);  // gradient w.r.t. (Wx + b) rows
    dgates.segment(0, H) = dz_pre;
    dgates.segment(H, H) = dr_pre;
    dgates.segment(2 * H, H) = dn_pre;

    VecX<S> duh(3 * H);  // gradient w.r.t. U h rows
    duh.segment(0, H) = dz_pre;
    duh.segment(H, H) = dr_pre;
    duh.segment(2 * H, H) = duh_n;

    block_map<S>(grad, w).noalias() += dgates * c.x.transpose();
    block_map<S>(grad, u).noalias() += duh * c.h_prev.transpose();
    block_map<S>(grad, b).col(0) += dgates;
    dh_prev.noalias() += U.transpose() * duh;
    if (dx_out) *dx_out = W.transpose() * dgates;
    return dh_prev;
  }
};

}  // namespace driverep

#pragma once

#include <string>

#include "driverep/encoder/encoder.hpp"
#include "driverep/nn/layers.hpp"

namespace driverep {

// The three adapters between frozen encoder outputs and the actor/critic:
//   pro1d  - the projection embedding used directly (prediction head omitted)
//   avg1d  - feature map averaged over (T', H', W') into a channel vector
//   avg2d  - feature map averaged over T' only, keeping (C', H', W')
enum class HeadKind { kDirectProjection1d, kConvAvg3d, kTemporalAxisReduction };
enum class HeadSize { kS, kXl };

struct HeadVariant {
  HeadKind kind = HeadKind::kConvAvg3d;
  HeadSize size = HeadSize::kS;

  std::string label() const;
};

HeadKind parse_head_kind(const std::string& name);
HeadSize parse_head_size(const std::string& name);
std::string head_kind_name(HeadKind k);
std::string head_size_name(HeadSize s);

// Layer widths per size. The larger network follows the reference layer
// table; the small one scales it down.
struct HeadNetConfig {
  int conv1_ch = 256;
  int conv2_ch = 128;
  int fc1 = 128;
  int fc2 = 64;

  static HeadNetConfig for_size(HeadSize s) {
    if (s == HeadSize::kXl) return {1024, 512, 400, 100};
    return {256, 128, 128, 64};
  }
};

template <typename S>
struct HeadInput {
  bool is_map = false;
  VecX<S> vec;    // pro1d / avg1d
  Tensor<S> map;  // avg2d: (C', H', W')
};

// Gradient of a head input, mirrored back toward the encoder outputs.
template <typename S>
struct HeadInputGrad {
  bool is_map = false;
  VecX<S> dvec;
  Tensor<S> dmap;
};

template <typename S>
HeadInput<S> adapt_features(HeadKind kind, const Tensor<S>& fmap,
                            const VecX<S>& projection) {
  HeadInput<S> in;
  switch (kind) {
    case HeadKind::kDirectProjection1d:
      in.is_map = false;
      in.vec = projection;
      break;
    case HeadKind::kConvAvg3d:
      in.is_map = false;
      in.vec = global_avg_pool(fmap);
      break;
    case HeadKind::kTemporalAxisReduction:
      in.is_map = true;
      in.map = temporal_avg(fmap);
      break;
  }
  return in;
}

// Routes a head-input gradient back to (dfmap, dprojection).
template <typename S>
void adapt_features_backward(HeadKind kind, const HeadInputGrad<S>& g,
                             const std::vector<int>& fmap_dims,
                             Tensor<S>* dfmap, VecX<S>* dprojection) {
  switch (kind) {
    case HeadKind::kDirectProjection1d:
      if (dprojection) *dprojection = g.dvec;
      if (dfmap) *dfmap = Tensor<S>::zeros(fmap_dims);
      break;
    case HeadKind::kConvAvg3d:
      if (dfmap) *dfmap = global_avg_pool_backward(g.dvec, fmap_dims);
      if (dprojection) dprojection->setZero();
      break;
    case HeadKind::kTemporalAxisReduction:
      if (dfmap) *dfmap = temporal_avg_backward(g.dmap, fmap_dims);
      if (dprojection) dprojection->setZero();
      break;
  }
}

// One actor-or-critic trunk. Vector inputs go straight into the FC stack;
// map inputs pass through two stride-1 convolutions first.
template <typename S>
struct TrunkSpec {
  bool has_conv = false;
  Conv3dSpec<S> conv1, conv2;
  LinearSpec<S> fc1, fc2, out;
  std::vector<int> map_dims;  // (C, H, W) when has_conv
  int in_dim = 0;
  int flat_dim = 0;

  void build(ParamLayout& layout, const std::string& name,
             const HeadInput<S>& probe, const HeadNetConfig& sizes,
             int out_dim) {
    if (probe.is_map) {
      has_conv = true;
      map_dims = probe.map.dims;
      conv1.build(layout, name + ".conv1", map_dims[0],
                  {1, map_dims[1], map_dims[2]}, sizes.conv1_ch, {1, 2, 2},
                  {1, 1, 1}, {0, 0, 0});
      conv2.build(layout, name + ".conv2", sizes.conv1_ch, conv1.out_size,
                  sizes.conv2_ch, {1, 2, 2}, {1, 1, 1}, {0, 0, 0});
      flat_dim = static_cast<int>(Tensor<S>::count(conv2.output_dims()));
      fc1.build(layout, name + ".fc1", flat_dim, sizes.fc1);
    } else {
      in_dim = static_cast<int>(probe.vec.size());
      fc1.build(layout, name + ".fc1", in_dim, sizes.fc1);
    }
    fc2.build(layout, name + ".fc2", sizes.fc1, sizes.fc2);
    out.build(layout, name + ".out", sizes.fc2, out_dim);
  }

  struct Cache {
    Tensor<S> in_map;
    MatX<S> p1, p2;
    Tensor<S> a1, a2;
    VecX<S> flat, in_vec, h1, h2;
  };

  VecX<S> forward(const HeadInput<S>& input, const S* theta,
                  Cache* cache = nullptr) const {
    VecX<S> x;
    if (has_conv) {
      if (!input.is_map) throw ContractError("trunk expects a map input");
      Tensor<S> m = input.map;
      m.dims = {map_dims[0], 1, map_dims[1], map_dims[2]};
      Tensor<S> a1 = conv1.forward(m, theta, cache ? &cache->p1 : nullptr);
      relu_inplace(a1.data);
      Tensor<S> a2 = conv2.forward(a1, theta, cache ? &cache->p2 : nullptr);
      relu_inplace(a2.data);
      x = a2.data;
      if (cache) {
        cache->in_map = m;
        cache->a1 = a1;
        cache->a2 = a2;
        cache->flat = x;
      }
    } else {
      if (input.is_map) throw ContractError("trunk expects a vector input");
      x = input.vec;
      if (cache) cache->in_vec = x;
    }
    VecX<S> h1 = fc1.forward(x, theta);
    relu_inplace(h1);
    VecX<S> h2 = fc2.forward(h1, theta);
    relu_inplace(h2);
    if (cache) {
      cache->h1 = h1;
      cache->h2 = h2;
    }
    return out.forward(h2, theta);
  }

  HeadInputGrad<S> backward(const Cache& cache, const VecX<S>& dout,
                            const S* theta, S* grad,
                            bool need_dinput = false) const {
    VecX<S> dh2 = out.backward(cache.h2, dout, theta, grad);
    dh2 = relu_backward(cache.h2, dh2);
    VecX<S> dh1 = fc2.backward(cache.h1, dh2, theta, grad);
    dh1 = relu_backward(cache.h1, dh1);
    HeadInputGrad<S> g;
    if (has_conv) {
      VecX<S> dflat = fc1.backward(cache.flat, dh1, theta, grad);
      Tensor<S> da2;
      da2.dims = conv2.output_dims();
      da2.data = relu_backward(cache.a2.data, dflat);
      Tensor<S> da1 =
          conv2.backward(cache.p2, da2, theta, grad, true);
      da1.data = relu_backward(cache.a1.data, da1.data);
      Tensor<S> dm = conv1.backward(cache.p1, da1, theta, grad, need_dinput);
      g.is_map = true;
      if (need_dinput) {
        dm.dims = map_dims;
        g.dmap = std::move(dm);
      }
    } else {
      VecX<S> dx = fc1.backward(cache.in_vec, dh1, theta, grad);
      g.is_map = false;
      if (need_dinput) g.dvec = std::move(dx);
    }
    return g;
  }

  std::string signature() const {
    std::string s;
    if (has_conv) {
      s += "conv(" + std::to_string(conv1.out_ch) + ",k2,s1)->relu->conv(" +
           std::to_string(conv2.out_ch) + ",k2,s1)->relu->";
    }
    s += "fc(" + std::to_string(fc1.out) + ")->relu->fc(" +
         std::to_string(fc2.out) + ")->relu->linear(" +
         std::to_string(out.out) + ")";
    return s;
  }
};

template <typename S>
struct ActorOutput {
  VecX<S> mu;
  VecX<S> var;      // strictly positive via softplus
  VecX<S> raw_var;  // pre-softplus, needed for the backward pass
};

// Actor and critic over one head variant. The trunks share their
// architecture and differ only in the output layer width.
template <typename S>
class PolicyNet {
 public:
  PolicyNet(HeadVariant variant, const ShapeContract& contract, int n_actions)
      : variant_(variant), n_actions_(n_actions) {
    if (n_actions < 1) throw ConfigError("need >= 1 controlled action");
    const HeadNetConfig sizes = HeadNetConfig::for_size(variant.size);
    HeadInput<S> probe = probe_input(contract);
    actor_.build(layout_, "actor", probe, sizes, 2 * n_actions);
    critic_.build(layout_, "critic", probe, sizes, 1);
  }

  HeadVariant variant() const { return variant_; }
  int n_actions() const { return n_actions_; }
  const ParamLayout& layout() const { return layout_; }

  VecX<S> init_params(std::uint64_t seed) const {
    return init_he_normal<S>(layout_, seed);
  }

  using Cache = typename TrunkSpec<S>::Cache;

  ActorOutput<S> actor(const HeadInput<S>& input, const VecX<S>& theta,
                       Cache* cache = nullptr) const {
    const VecX<S> raw = actor_.forward(input, theta.data(), cache);
    ActorOutput<S> out;
    out.mu.resize(n_actions_);
    out.var.resize(n_actions_);
    out.raw_var.resize(n_actions_);
    for (int a = 0; a < n_actions_; ++a) {
      out.mu[a] = raw[2 * a];
      out.raw_var[a] = raw[2 * a + 1];
      out.var[a] = softplus(raw[2 * a + 1]);
    }
    return out;
  }

  S critic(const HeadInput<S>& input, const VecX<S>& theta,
           Cache* cache = nullptr) const {
    return critic_.forward(input, theta.data(), cache)[0];
  }

  HeadInputGrad<S> actor_backward(const Cache& cache,
                                  const ActorOutput<S>& out,
                                  const VecX<S>& dmu, const VecX<S>& dvar,
                                  const VecX<S>& theta, VecX<S>& grad,
                                  bool need_dinput = false) const {
    VecX<S> dout(2 * n_actions_);
    for (int a = 0; a < n_actions_; ++a) {
      dout[2 * a] = dmu[a];
      dout[2 * a + 1] = dvar[a] * sigmoid(out.raw_var[a]);
    }
    return actor_.backward(cache, dout, theta.data(), grad.data(),
                           need_dinput);
  }

  HeadInputGrad<S> critic_backward(const Cache& cache, S dvalue,
                                   const VecX<S>& theta, VecX<S>& grad,
                                   bool need_dinput = false) const {
    VecX<S> dout(1);
    dout[0] = dvalue;
    return critic_.backward(cache, dout, theta.data(), grad.data(),
                            need_dinput);
  }

  std::string actor_signature() const { return actor_.signature(); }
  std::string critic_signature() const { return critic_.signature(); }

 private:
  HeadInput<S> probe_input(const ShapeContract& contract) const {
    HeadInput<S> probe;
    switch (variant_.kind) {
      case HeadKind::kDirectProjection1d:
        probe.is_map = false;
        probe.vec = VecX<S>::Zero(contract.projection_dim);
        break;
      case HeadKind::kConvAvg3d:
        probe.is_map = false;
        probe.vec = VecX<S>::Zero(contract.feature_map[0]);
        break;
      case HeadKind::kTemporalAxisReduction:
        probe.is_map = true;
        probe.map = Tensor<S>::zeros({contract.feature_map[0],
                                      contract.feature_map[2],
                                      contract.feature_map[3]});
        break;
    }
    return probe;
  }

  HeadVariant variant_;
  int n_actions_;
  ParamLayout layout_;
  TrunkSpec<S> actor_, critic_;
};

}  // namespace driverep

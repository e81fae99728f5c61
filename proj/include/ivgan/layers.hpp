#pragma once

#include "ivgan/autograd.hpp"

namespace ivgan {

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

// He et al. initialization: normal(0, sqrt(2 / fan_in))
template <typename T>
Tensor<T> he_init(const Shape& shape, int64_t fan_in, uint64_t seed) {
  return scale(rng_fill<T>(Dist::Normal01, shape, seed),
               T(std::sqrt(2.0 / double(fan_in))));
}

template <typename T>
struct NamedParam {
  std::string name;
  Var<T>* var;
};

// ---------------------------------------------------------------------------
// layers
// ---------------------------------------------------------------------------

template <typename T>
struct Linear {
  Var<T> w;  // [in, out]
  Var<T> b;  // [out]

  static Linear make(int64_t in, int64_t out, uint64_t seed) {
    Linear l;
    l.w = Var<T>::leaf(he_init<T>({in, out}, in, seed));
    l.b = Var<T>::leaf(Tensor<T>({out}, T(0)));
    return l;
  }

  Var<T> forward(const Var<T>& x) const {
    Var<T> y = matmul(x, w);
    return add(y, broadcast_to(reshape(b, {1, b.shape()[0]}), y.shape()));
  }
};

// Strided spatio-temporal convolution layer.
template <typename T>
struct Conv3dLayer {
  ConvSpec spec;
  Var<T> w;  // [kt,kh,kw,Cin,Cout]
  Var<T> b;  // [Cout], undefined when spec.bias is false

  static Conv3dLayer make(int64_t in_ch, int64_t out_ch, uint64_t seed,
                          ConvSpec base = ConvSpec{}) {
    Conv3dLayer l;
    l.spec = base;
    l.spec.in_channels = in_ch;
    l.spec.out_channels = out_ch;
    l.spec.transposed = false;
    int64_t fan_in = l.spec.kernel[0] * l.spec.kernel[1] * l.spec.kernel[2] * in_ch;
    l.w = Var<T>::leaf(he_init<T>(
        {l.spec.kernel[0], l.spec.kernel[1], l.spec.kernel[2], in_ch, out_ch},
        fan_in, seed));
    if (l.spec.bias) l.b = Var<T>::leaf(Tensor<T>({out_ch}, T(0)));
    return l;
  }

  Var<T> forward(const Var<T>& x) const {
    Var<T> y = conv3d(x, w, spec);
    if (!spec.bias) return y;
    return add(y, broadcast_to(reshape(b, {1, 1, 1, 1, b.shape()[0]}),
                               y.shape()));
  }
};

// Fractionally-strided convolution layer: upsamples by the stride. The
// weight tensor is stored in the adjoint (strided-conv) orientation
// [kt,kh,kw,C_layer_out,C_layer_in], so spec.in_channels is the layer's
// OUTPUT channel count.
template <typename T>
struct ConvTranspose3dLayer {
  ConvSpec spec;
  Var<T> w;
  Var<T> b;  // [layer out channels]

  static ConvTranspose3dLayer make(int64_t in_ch, int64_t out_ch,
                                   uint64_t seed, ConvSpec base = ConvSpec{}) {
    ConvTranspose3dLayer l;
    l.spec = base;
    l.spec.in_channels = out_ch;
    l.spec.out_channels = in_ch;
    l.spec.transposed = true;
    int64_t fan_in = l.spec.kernel[0] * l.spec.kernel[1] * l.spec.kernel[2] * in_ch;
    l.w = Var<T>::leaf(he_init<T>(
        {l.spec.kernel[0], l.spec.kernel[1], l.spec.kernel[2], out_ch, in_ch},
        fan_in, seed));
    if (l.spec.bias) l.b = Var<T>::leaf(Tensor<T>({out_ch}, T(0)));
    return l;
  }

  Var<T> forward(const Var<T>& x) const {
    Var<T> y = conv3d_transposed(x, w, spec);
    if (!spec.bias) return y;
    return add(y, broadcast_to(reshape(b, {1, 1, 1, 1, b.shape()[0]}),
                               y.shape()));
  }
};

namespace detail {

template <typename T>
Var<T> affine_per_channel(const Var<T>& xhat, const Var<T>& gamma,
                          const Var<T>& beta) {
  Shape bshape(xhat.shape().size(), 1);
  bshape.back() = gamma.shape()[0];
  Var<T> g = broadcast_to(reshape(gamma, bshape), xhat.shape());
  Var<T> b = broadcast_to(reshape(beta, bshape), xhat.shape());
  return add(mul(xhat, g), b);
}

}  // namespace detail

// Per-channel normalization over batch and spatio-temporal axes. Keeps
// running statistics for inference mode.
template <typename T>
struct BatchNorm {
  Var<T> gamma, beta;            // [C]
  Tensor<T> run_mean, run_var;   // [C]
  T eps = T(kNormEps);
  T momentum = T(kBatchNormMomentum);

  static BatchNorm make(int64_t channels) {
    BatchNorm bn;
    bn.gamma = Var<T>::leaf(Tensor<T>({channels}, T(1)));
    bn.beta = Var<T>::leaf(Tensor<T>({channels}, T(0)));
    bn.run_mean = Tensor<T>({channels}, T(0));
    bn.run_var = Tensor<T>({channels}, T(1));
    return bn;
  }

  // channel axis is last; normalizes over every other axis
  Var<T> forward(const Var<T>& x, bool training) {
    std::vector<int64_t> axes(x.shape().size() - 1);
    for (size_t i = 0; i + 1 < x.shape().size(); ++i) axes[i] = int64_t(i);
    if (training) {
      if (x.shape()[0] < 2)
        throw std::invalid_argument(
            "batch_norm: training mode requires batch >= 2");
      Var<T> mu = reduce_mean(x, axes, true);
      Var<T> xc = sub(x, broadcast_to(mu, x.shape()));
      Var<T> var = reduce_mean(square(xc), axes, true);
      Var<T> denom = sqrt(add_scalar(var, eps));
      Var<T> xhat = div(xc, broadcast_to(denom, x.shape()));
      int64_t c = gamma.shape()[0];
      // running stats track the biased batch statistics
      Tensor<T> bm = reshape(mu.value(), {c});
      Tensor<T> bv = reshape(var.value(), {c});
      run_mean = add(scale(run_mean, momentum), scale(bm, T(1) - momentum));
      run_var = add(scale(run_var, momentum), scale(bv, T(1) - momentum));
      return detail::affine_per_channel(xhat, gamma, beta);
    }
    Shape bshape(x.shape().size(), 1);
    bshape.back() = gamma.shape()[0];
    Var<T> mu = Var<T>::constant(reshape(run_mean, bshape));
    Var<T> denom =
        Var<T>::constant(reshape(sqrt(add_scalar(run_var, eps)), bshape));
    Var<T> xhat = div(sub(x, broadcast_to(mu, x.shape())),
                      broadcast_to(denom, x.shape()));
    return detail::affine_per_channel(xhat, gamma, beta);
  }
};

// Per-sample normalization over all non-batch axes; the output for sample i
// depends only on sample i.
template <typename T>
struct LayerNorm {
  Var<T> gamma, beta;  // [C]
  T eps = T(kNormEps);

  static LayerNorm make(int64_t channels) {
    LayerNorm ln;
    ln.gamma = Var<T>::leaf(Tensor<T>({channels}, T(1)));
    ln.beta = Var<T>::leaf(Tensor<T>({channels}, T(0)));
    return ln;
  }

  Var<T> forward(const Var<T>& x) const {
    std::vector<int64_t> axes(x.shape().size() - 1);
    for (size_t i = 1; i < x.shape().size(); ++i) axes[i - 1] = int64_t(i);
    Var<T> mu = reduce_mean(x, axes, true);
    Var<T> xc = sub(x, broadcast_to(mu, x.shape()));
    Var<T> var = reduce_mean(square(xc), axes, true);
    Var<T> denom = sqrt(add_scalar(var, eps));
    Var<T> xhat = div(xc, broadcast_to(denom, x.shape()));
    return detail::affine_per_channel(xhat, gamma, beta);
  }
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename T>
struct AdamConfig {
  T alpha = T(0.0002);
  T beta1 = T(0.5);
  T beta2 = T(0.99);
  T eps = T(1e-8);
};

template <typename T>
struct AdamState {
  Tensor<T> m, v;
  int64_t t = 0;
};

// One Adam update with bias correction; t is incremented first.
template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state,
               const AdamConfig<T>& cfg) {
  detail::check_same_shape(param.shape(), grad.shape(), "adam_step");
  if (!grad.all_finite())
    throw std::runtime_error("adam_step: non-finite gradient");
  if (state.t == 0) {
    state.m = Tensor<T>(param.shape(), T(0));
    state.v = Tensor<T>(param.shape(), T(0));
  }
  state.t += 1;
  const T b1 = cfg.beta1, b2 = cfg.beta2;
  const T c1 = T(1) - std::pow(double(b1), double(state.t));
  const T c2 = T(1) - std::pow(double(b2), double(state.t));
  for (int64_t i = 0; i < param.numel(); ++i) {
    T g = grad[i];
    state.m[i] = b1 * state.m[i] + (T(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (T(1) - b2) * g * g;
    T mhat = state.m[i] / c1;
    T vhat = state.v[i] / c2;
    param[i] -= cfg.alpha * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

// Optimizer over a fixed parameter list; updates leaf values in place.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Var<T>*> params, AdamConfig<T> cfg)
      : cfg_(cfg), params_(std::move(params)), states_(params_.size()) {}

  void step(const std::vector<Var<T>>& grads) {
    if (grads.size() != params_.size())
      throw std::invalid_argument("adam: gradient count mismatch");
    for (size_t i = 0; i < params_.size(); ++i)
      adam_step(params_[i]->mutable_value(), grads[i].value(), states_[i],
                cfg_);
  }

  T alpha() const { return cfg_.alpha; }
  void set_alpha(T a) { cfg_.alpha = a; }
  const std::vector<Var<T>*>& params() const { return params_; }

 private:
  AdamConfig<T> cfg_;
  std::vector<Var<T>*> params_;
  std::vector<AdamState<T>> states_;
};

}  // namespace ivgan

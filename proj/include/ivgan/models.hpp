#pragma once

#include "ivgan/layers.hpp"

namespace ivgan {

enum class ScalePreset { Full, Desk };

// Architecture parameters shared by generator, critic and encoder. The same
// builders produce the full-scale network (32 frames of 64x64) and a desk
// scale variant for CPU runs.
struct NetConfig {
  ScalePreset preset = ScalePreset::Full;
  int64_t z_dim = 100;
  int64_t frames = 32;
  int64_t height = 64;
  int64_t width = 64;
  int64_t channels = 3;
  int64_t base_width = 64;   // channel multiplier
  int64_t gen_blocks = 4;    // transposed-conv blocks in the generator

  static NetConfig full() { return NetConfig{}; }

  static NetConfig desk() {
    NetConfig c;
    c.preset = ScalePreset::Desk;
    c.frames = 8;
    c.height = c.width = 16;
    c.base_width = 32;
    c.gen_blocks = 3;
    return c;
  }

  static bool is_pow2(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

  void validate() const {
    if (!is_pow2(frames) || !is_pow2(height) || !is_pow2(width))
      throw std::invalid_argument("NetConfig: extents must be powers of two");
    if (height != width)
      throw std::invalid_argument("NetConfig: height must equal width");
    if ((frames >> gen_blocks) < 1 || (height >> gen_blocks) < 2)
      throw std::invalid_argument("NetConfig: extents too small for " +
                                  std::to_string(gen_blocks) + " blocks");
    if ((width >> critic_convs()) < 2)
      throw std::invalid_argument("NetConfig: width too small for critic");
    if (z_dim < 1 || base_width < 1 || channels < 1)
      throw std::invalid_argument("NetConfig: invalid dimension");
  }

  // generator seed tensor (full scale: 2x4x4x512)
  int64_t gen_t0() const { return frames >> gen_blocks; }
  int64_t gen_h0() const { return height >> gen_blocks; }
  int64_t gen_w0() const { return width >> gen_blocks; }
  int64_t gen_c0() const { return base_width << (gen_blocks - 1); }

  // channels produced by generator block i (last block emits the video)
  int64_t gen_block_out(int64_t i) const {
    return i + 1 == gen_blocks ? channels : gen_c0() >> (i + 1);
  }

  // strided conv layers in the critic: halve until the time axis reaches 1
  int64_t critic_convs() const {
    int64_t n = 0, t = frames;
    while (t > 1) { t >>= 1; ++n; }
    return n;
  }
  int64_t critic_ch(int64_t i) const { return base_width << i; }

  int64_t encoder_convs() const { return gen_blocks; }
  int64_t encoder_ch(int64_t i) const { return base_width << i; }
};

// ---------------------------------------------------------------------------
// static shape chains (checked without running data)
// ---------------------------------------------------------------------------

inline std::vector<Shape> generator_shape_chain(const NetConfig& cfg) {
  std::vector<Shape> chain;
  chain.push_back({cfg.z_dim});
  Shape s{cfg.gen_t0(), cfg.gen_h0(), cfg.gen_w0(), cfg.gen_c0()};
  chain.push_back(s);
  for (int64_t i = 0; i < cfg.gen_blocks; ++i) {
    s = {s[0] * 2, s[1] * 2, s[2] * 2, cfg.gen_block_out(i)};
    chain.push_back(s);
  }
  return chain;
}

inline std::vector<Shape> critic_shape_chain(const NetConfig& cfg) {
  std::vector<Shape> chain;
  Shape s{cfg.frames, cfg.height, cfg.width, cfg.channels};
  chain.push_back(s);
  for (int64_t i = 0; i < cfg.critic_convs(); ++i) {
    s = {s[0] / 2, s[1] / 2, s[2] / 2, cfg.critic_ch(i)};
    chain.push_back(s);
  }
  chain.push_back({1});  // linear head
  return chain;
}

inline std::vector<Shape> encoder_shape_chain(const NetConfig& cfg,
                                              int64_t in_channels) {
  std::vector<Shape> chain;
  Shape s{cfg.frames, cfg.height, cfg.width, in_channels};
  chain.push_back(s);
  for (int64_t i = 0; i < cfg.encoder_convs(); ++i) {
    s = {s[0] / 2, s[1] / 2, s[2] / 2, cfg.encoder_ch(i)};
    chain.push_back(s);
  }
  chain.push_back({cfg.z_dim});
  return chain;
}

// ---------------------------------------------------------------------------
// generator
// ---------------------------------------------------------------------------

template <typename T>
struct GeneratorNet {
  NetConfig cfg;
  Linear<T> project;
  BatchNorm<T> project_bn;
  std::vector<ConvTranspose3dLayer<T>> blocks;
  std::vector<BatchNorm<T>> block_bns;  // after every block but the last

  std::vector<NamedParam<T>> trainable() {
    std::vector<NamedParam<T>> p{{"g.project.w", &project.w},
                                 {"g.project.b", &project.b},
                                 {"g.project_bn.gamma", &project_bn.gamma},
                                 {"g.project_bn.beta", &project_bn.beta}};
    for (size_t i = 0; i < blocks.size(); ++i) {
      std::string base = "g.block" + std::to_string(i);
      p.push_back({base + ".w", &blocks[i].w});
      p.push_back({base + ".b", &blocks[i].b});
      if (i < block_bns.size()) {
        p.push_back({base + ".bn.gamma", &block_bns[i].gamma});
        p.push_back({base + ".bn.beta", &block_bns[i].beta});
      }
    }
    return p;
  }

  // trainable params plus batch-norm running statistics
  std::vector<std::pair<std::string, Tensor<T>*>> state_tensors() {
    std::vector<std::pair<std::string, Tensor<T>*>> s;
    for (auto& np : trainable()) s.emplace_back(np.name, &np.var->mutable_value());
    s.emplace_back("g.project_bn.run_mean", &project_bn.run_mean);
    s.emplace_back("g.project_bn.run_var", &project_bn.run_var);
    for (size_t i = 0; i < block_bns.size(); ++i) {
      std::string base = "g.block" + std::to_string(i) + ".bn";
      s.emplace_back(base + ".run_mean", &block_bns[i].run_mean);
      s.emplace_back(base + ".run_var", &block_bns[i].run_var);
    }
    return s;
  }
};

inline int64_t generator_expected_params(const NetConfig& cfg) {
  // project w+b, project bn gamma+beta, per block w+b, per inner block bn 2
  return 4 + 2 * cfg.gen_blocks + 2 * (cfg.gen_blocks - 1);
}

template <typename T>
GeneratorNet<T> build_generator(const NetConfig& cfg, uint64_t seed) {
  cfg.validate();
  GeneratorNet<T> net;
  net.cfg = cfg;
  Rng seeds(seed);
  int64_t seed_dim = cfg.gen_t0() * cfg.gen_h0() * cfg.gen_w0() * cfg.gen_c0();
  net.project = Linear<T>::make(cfg.z_dim, seed_dim, seeds.next_u64());
  net.project_bn = BatchNorm<T>::make(cfg.gen_c0());
  int64_t in_ch = cfg.gen_c0();
  for (int64_t i = 0; i < cfg.gen_blocks; ++i) {
    int64_t out_ch = cfg.gen_block_out(i);
    net.blocks.push_back(
        ConvTranspose3dLayer<T>::make(in_ch, out_ch, seeds.next_u64()));
    if (i + 1 < cfg.gen_blocks)
      net.block_bns.push_back(BatchNorm<T>::make(out_ch));
    in_ch = out_ch;
  }
  return net;
}

// z: [N, z_dim] -> video [N, T, H, W, C] in [-1, 1]
template <typename T>
Var<T> generator_forward(GeneratorNet<T>& net, const Var<T>& z,
                         bool training = true) {
  if (z.shape().size() != 2 || z.shape()[1] != net.cfg.z_dim)
    throw std::invalid_argument("generator_forward: expected [N," +
                                std::to_string(net.cfg.z_dim) + "], got " +
                                shape_str(z.shape()));
  if (!z.value().all_finite())
    throw std::invalid_argument("generator_forward: non-finite z");
  const NetConfig& c = net.cfg;
  int64_t n = z.shape()[0];
  Var<T> x = net.project.forward(z);
  x = reshape(x, {n, c.gen_t0(), c.gen_h0(), c.gen_w0(), c.gen_c0()});
  x = relu(net.project_bn.forward(x, training));
  for (size_t i = 0; i < net.blocks.size(); ++i) {
    x = net.blocks[i].forward(x);
    if (i + 1 < net.blocks.size())
      x = relu(net.block_bns[i].forward(x, training));
    else
      x = tanh(x);
  }
  return x;
}

// ---------------------------------------------------------------------------
// critic
// ---------------------------------------------------------------------------

template <typename T>
struct CriticNet {
  NetConfig cfg;
  std::vector<Conv3dLayer<T>> convs;
  std::vector<LayerNorm<T>> lns;  // after every conv but the first and last
  Linear<T> head;

  std::vector<NamedParam<T>> trainable() {
    std::vector<NamedParam<T>> p;
    for (size_t i = 0; i < convs.size(); ++i) {
      std::string base = "c.conv" + std::to_string(i);
      p.push_back({base + ".w", &convs[i].w});
      p.push_back({base + ".b", &convs[i].b});
    }
    for (size_t i = 0; i < lns.size(); ++i) {
      std::string base = "c.ln" + std::to_string(i + 1);
      p.push_back({base + ".gamma", &lns[i].gamma});
      p.push_back({base + ".beta", &lns[i].beta});
    }
    p.push_back({"c.head.w", &head.w});
    p.push_back({"c.head.b", &head.b});
    return p;
  }

  std::vector<std::pair<std::string, Tensor<T>*>> state_tensors() {
    std::vector<std::pair<std::string, Tensor<T>*>> s;
    for (auto& np : trainable()) s.emplace_back(np.name, &np.var->mutable_value());
    return s;
  }
};

inline int64_t critic_expected_params(const NetConfig& cfg) {
  int64_t nc = cfg.critic_convs();
  return 2 * nc + 2 * (nc - 2) + 2;
}

template <typename T>
CriticNet<T> build_critic(const NetConfig& cfg, uint64_t seed) {
  cfg.validate();
  CriticNet<T> net;
  net.cfg = cfg;
  Rng seeds(seed);
  int64_t nc = cfg.critic_convs();
  int64_t in_ch = cfg.channels;
  for (int64_t i = 0; i < nc; ++i) {
    int64_t out_ch = cfg.critic_ch(i);
    net.convs.push_back(Conv3dLayer<T>::make(in_ch, out_ch, seeds.next_u64()));
    // layer norm on all but the first and last conv (no batch norm anywhere:
    // the gradient penalty needs per-sample independence)
    if (i > 0 && i + 1 < nc) net.lns.push_back(LayerNorm<T>::make(out_ch));
    in_ch = out_ch;
  }
  Shape last = critic_shape_chain(cfg)[size_t(nc)];
  int64_t flat = last[0] * last[1] * last[2] * last[3];
  net.head = Linear<T>::make(flat, 1, seeds.next_u64());
  return net;
}

// x: [N, T, H, W, C] -> one unbounded score per sample [N]
template <typename T>
Var<T> critic_forward(CriticNet<T>& net, const Var<T>& x) {
  const NetConfig& c = net.cfg;
  Shape want{x.shape()[0], c.frames, c.height, c.width, c.channels};
  if (x.shape() != want)
    throw std::invalid_argument("critic_forward: input " +
                                shape_str(x.shape()) + " expected " +
                                shape_str(want));
  Var<T> h = x;
  size_t ln = 0;
  for (size_t i = 0; i < net.convs.size(); ++i) {
    h = net.convs[i].forward(h);
    if (i > 0 && i + 1 < net.convs.size()) h = net.lns[ln++].forward(h);
    h = leaky_relu(h, T(kLeakySlope));
  }
  int64_t n = x.shape()[0];
  h = reshape(h, {n, h.value().numel() / n});
  // linear head, deliberately no activation
  return reshape(net.head.forward(h), {n});
}

// ---------------------------------------------------------------------------
// encoder
// ---------------------------------------------------------------------------

template <typename T>
struct EncoderNet {
  NetConfig cfg;
  int64_t in_channels = 3;
  std::vector<Conv3dLayer<T>> convs;
  std::vector<BatchNorm<T>> bns;
  Linear<T> head;

  std::vector<NamedParam<T>> trainable() {
    std::vector<NamedParam<T>> p;
    for (size_t i = 0; i < convs.size(); ++i) {
      std::string base = "e.conv" + std::to_string(i);
      p.push_back({base + ".w", &convs[i].w});
      p.push_back({base + ".b", &convs[i].b});
      p.push_back({base + ".bn.gamma", &bns[i].gamma});
      p.push_back({base + ".bn.beta", &bns[i].beta});
    }
    p.push_back({"e.head.w", &head.w});
    p.push_back({"e.head.b", &head.b});
    return p;
  }

  std::vector<std::pair<std::string, Tensor<T>*>> state_tensors() {
    std::vector<std::pair<std::string, Tensor<T>*>> s;
    for (auto& np : trainable()) s.emplace_back(np.name, &np.var->mutable_value());
    for (size_t i = 0; i < bns.size(); ++i) {
      std::string base = "e.conv" + std::to_string(i) + ".bn";
      s.emplace_back(base + ".run_mean", &bns[i].run_mean);
      s.emplace_back(base + ".run_var", &bns[i].run_var);
    }
    return s;
  }
};

inline int64_t encoder_expected_params(const NetConfig& cfg) {
  return 4 * cfg.encoder_convs() + 2;
}

template <typename T>
EncoderNet<T> build_encoder(const NetConfig& cfg, int64_t in_channels,
                            uint64_t seed) {
  cfg.validate();
  if (in_channels != 1 && in_channels != 3)
    throw std::invalid_argument("build_encoder: condition channels must be 1 or 3");
  EncoderNet<T> net;
  net.cfg = cfg;
  net.in_channels = in_channels;
  Rng seeds(seed);
  int64_t in_ch = in_channels;
  for (int64_t i = 0; i < cfg.encoder_convs(); ++i) {
    int64_t out_ch = cfg.encoder_ch(i);
    net.convs.push_back(Conv3dLayer<T>::make(in_ch, out_ch, seeds.next_u64()));
    net.bns.push_back(BatchNorm<T>::make(out_ch));
    in_ch = out_ch;
  }
  Shape last = encoder_shape_chain(cfg, in_channels)[size_t(cfg.encoder_convs())];
  int64_t flat = last[0] * last[1] * last[2] * last[3];
  net.head = Linear<T>::make(flat, cfg.z_dim, seeds.next_u64());
  return net;
}

// y: [N, T, H, W, Cy] -> latent code [N, z_dim]
template <typename T>
Var<T> encoder_forward(EncoderNet<T>& net, const Var<T>& y,
                       bool training = true) {
  const NetConfig& c = net.cfg;
  Shape want{y.shape()[0], c.frames, c.height, c.width, net.in_channels};
  if (y.shape() != want)
    throw std::invalid_argument("encoder_forward: input " +
                                shape_str(y.shape()) + " expected " +
                                shape_str(want));
  Var<T> h = y;
  for (size_t i = 0; i < net.convs.size(); ++i) {
    h = net.convs[i].forward(h);
    h = relu(net.bns[i].forward(h, training));
  }
  int64_t n = y.shape()[0];
  h = reshape(h, {n, h.value().numel() / n});
  return net.head.forward(h);
}

template <typename T>
std::vector<Var<T>*> param_ptrs(std::vector<NamedParam<T>> named) {
  std::vector<Var<T>*> out;
  out.reserve(named.size());
  for (auto& np : named) out.push_back(np.var);
  return out;
}

}  // namespace ivgan

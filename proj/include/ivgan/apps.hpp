#pragma once

#include "ivgan/wgan.hpp"

namespace ivgan {

// BT.601 luma weights, applied in [0,1] space. The weights sum to one, so
// the same affine combination is valid directly on [-1,1] data.
inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

enum class Task { ColorizeSupervised, ColorizeUnsupervised, Inpaint, Predict };
enum class Corruption { SaltPepper, Hole };
enum class HoleMode { Center, Random };

// Condition construction and loss weighting for the multi-functional
// extension. nu = 1000 by default; salt & pepper probability 0.25; hole
// size 20 at full scale, scaled with resolution via hole_size_for().
struct TaskSpec {
  Task task = Task::Inpaint;
  double nu = 1000.0;
  Corruption corruption = Corruption::SaltPepper;
  double noise_prob = 0.25;
  int64_t hole_size = 0;  // 0: derive from resolution
  HoleMode hole_mode = HoleMode::Center;

  static int64_t hole_size_for(int64_t width) {
    // keep the covered-area fraction of 20/64
    return std::max<int64_t>(1, int64_t(std::llround(20.0 * double(width) / 64.0)));
  }

  int64_t resolved_hole_size(int64_t width) const {
    return hole_size > 0 ? hole_size : hole_size_for(width);
  }

  int64_t condition_channels() const {
    return (task == Task::ColorizeSupervised ||
            task == Task::ColorizeUnsupervised)
               ? 1
               : 3;
  }

  void validate() const {
    if (nu < 0) throw std::invalid_argument("TaskSpec: nu must be >= 0");
    if (noise_prob < 0 || noise_prob > 1)
      throw std::invalid_argument("TaskSpec: noise_prob must be in [0,1]");
    if (hole_size < 0)
      throw std::invalid_argument("TaskSpec: hole_size must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// corruption / conditioning operators
// ---------------------------------------------------------------------------

// (..., H, W, 3) -> (..., H, W, 1), both Tensor and Var flavors
template <typename T>
Tensor<T> to_grayscale(const Tensor<T>& x) {
  if (x.shape().back() != 3)
    throw std::invalid_argument("to_grayscale: expects 3 channels, got " +
                                shape_str(x.shape()));
  Shape out_shape = x.shape();
  out_shape.back() = 1;
  Tensor<T> out(out_shape);
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = T(kLumaR) * x[3 * i] + T(kLumaG) * x[3 * i + 1] +
             T(kLumaB) * x[3 * i + 2];
  return out;
}

template <typename T>
Var<T> to_grayscale(const Var<T>& x) {
  if (x.shape().back() != 3)
    throw std::invalid_argument("to_grayscale: expects 3 channels");
  std::vector<int64_t> off0(x.shape().size(), 0), off1 = off0, off2 = off0;
  off1.back() = 1;
  off2.back() = 2;
  Shape ext = x.shape();
  ext.back() = 1;
  Var<T> r = slice(x, off0, ext);
  Var<T> g = slice(x, off1, ext);
  Var<T> b = slice(x, off2, ext);
  return add(add(scale(r, T(kLumaR)), scale(g, T(kLumaG))),
             scale(b, T(kLumaB)));
}

// Each pixel position (all channels jointly) is corrupted with probability p
// to -1 or +1 with equal probability.
inline Clip salt_pepper(const Clip& x, double p, uint64_t seed) {
  if (p < 0 || p > 1)
    throw std::invalid_argument("salt_pepper: p must be in [0,1]");
  check_clip(x, "salt_pepper");
  Clip out = x;
  Rng rng(seed);
  int64_t c = x.shape().back();
  int64_t pixels = x.numel() / c;
  for (int64_t i = 0; i < pixels; ++i) {
    if (rng.uniform() < p) {
      float v = (rng.next_u64() & 1) ? 1.0f : -1.0f;
      for (int64_t ch = 0; ch < c; ++ch) out[i * c + ch] = v;
    }
  }
  return out;
}

struct HoleResult {
  Clip clip;
  Tensor<float> mask;  // (T, H, W), 1 inside the hole
};

// Square hole of `size` pixels, filled with 0 (mid-range), at a fixed
// spatial position across all frames. Center mode uses (H-size)/2; random
// mode draws one offset per clip.
inline HoleResult cut_hole(const Clip& x, int64_t size, HoleMode mode,
                           uint64_t seed) {
  check_clip(x, "cut_hole");
  int64_t t = x.extent(0), h = x.extent(1), w = x.extent(2), c = x.extent(3);
  if (size < 1 || size > h || size > w)
    throw std::invalid_argument("cut_hole: hole size " + std::to_string(size) +
                                " does not fit a " + std::to_string(h) + "x" +
                                std::to_string(w) + " frame");
  int64_t row, col;
  if (mode == HoleMode::Center) {
    row = (h - size) / 2;
    col = (w - size) / 2;
  } else {
    Rng rng(seed);
    row = int64_t(rng.next_u64() % uint64_t(h - size + 1));
    col = int64_t(rng.next_u64() % uint64_t(w - size + 1));
  }
  HoleResult res{x, Tensor<float>({t, h, w}, 0.0f)};
  for (int64_t ti = 0; ti < t; ++ti)
    for (int64_t r = row; r < row + size; ++r)
      for (int64_t cc = col; cc < col + size; ++cc) {
        res.mask[(ti * h + r) * w + cc] = 1.0f;
        for (int64_t ch = 0; ch < c; ++ch)
          res.clip[((ti * h + r) * w + cc) * c + ch] = 0.0f;
      }
  return res;
}

// mean squared difference over all elements
template <typename T>
Var<T> l2_loss(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "l2_loss");
  return mean_all(square(sub(a, b)));
}

// ---------------------------------------------------------------------------
// task conditioning and loss
// ---------------------------------------------------------------------------

// Build the condition y for a batch of real clips: grayscale for
// colorization, the damaged clip for inpainting, the replicated first frame
// for future prediction.
inline Tensor<float> make_condition(const TaskSpec& spec,
                                    const Tensor<float>& real, uint64_t seed) {
  if (real.ndim() != 5)
    throw std::invalid_argument("make_condition: expects (N,T,H,W,C) batch");
  switch (spec.task) {
    case Task::ColorizeSupervised:
    case Task::ColorizeUnsupervised:
      return to_grayscale(real);
    case Task::Inpaint: {
      int64_t n = real.extent(0);
      Tensor<float> out(real.shape());
      int64_t per = real.numel() / n;
      Rng rng(seed);
      for (int64_t i = 0; i < n; ++i) {
        Clip clip(Shape{real.extent(1), real.extent(2), real.extent(3),
                        real.extent(4)},
                  std::vector<float>(real.data() + i * per,
                                     real.data() + (i + 1) * per));
        Clip damaged =
            spec.corruption == Corruption::SaltPepper
                ? salt_pepper(clip, spec.noise_prob, rng.next_u64())
                : cut_hole(clip, spec.resolved_hole_size(real.extent(3)),
                           spec.hole_mode, rng.next_u64())
                      .clip;
        std::copy(damaged.data(), damaged.data() + per, out.data() + i * per);
      }
      return out;
    }
    case Task::Predict: {
      // replicate the first frame along the time axis
      Tensor<float> f0 =
          slice(real, {0, 0, 0, 0, 0},
                {real.extent(0), 1, real.extent(2), real.extent(3),
                 real.extent(4)});
      return broadcast_to(f0, real.shape());
    }
  }
  throw std::invalid_argument("make_condition: unknown task");
}

template <typename T>
struct TaskLossParts {
  Var<T> total;   // -E[C(G(E(y)))] + nu * L_AP
  Var<T> fake;    // G(E(y))
  T l_ap;
  T adversarial;
};

// The generator/encoder objective of the multi-functional extension.
template <typename T, typename CriticFn>
TaskLossParts<T> task_loss(const TaskSpec& spec, GeneratorNet<T>& G,
                           EncoderNet<T>& E, CriticFn&& critic,
                           const Tensor<T>& real, const Tensor<T>& condition,
                           bool training = true) {
  if (int64_t(condition.shape().back()) != E.in_channels)
    throw std::invalid_argument(
        "task_loss: condition channels do not match the encoder");
  if (spec.condition_channels() != E.in_channels)
    throw std::invalid_argument("task_loss: encoder does not fit the task");
  Var<T> y = Var<T>::constant(condition);
  Var<T> code = encoder_forward(E, y, training);
  Var<T> fake = generator_forward(G, code, training);
  Var<T> adv = generator_loss(critic, fake);

  Var<T> vreal = Var<T>::constant(real);
  Var<T> l_ap;
  switch (spec.task) {
    case Task::ColorizeSupervised:
      l_ap = l2_loss(fake, vreal);
      break;
    case Task::ColorizeUnsupervised:
      // gray-space loss: wrong colors are not penalized here
      l_ap = l2_loss(to_grayscale(fake), y);
      break;
    case Task::Inpaint:
      l_ap = l2_loss(fake, vreal);
      break;
    case Task::Predict: {
      Shape ext = fake.shape();
      ext[1] = 1;
      Var<T> f0 = slice(fake, {0, 0, 0, 0, 0}, ext);
      Var<T> y0 = slice(y, {0, 0, 0, 0, 0}, ext);
      l_ap = l2_loss(f0, y0);
      break;
    }
  }
  Var<T> total = add(adv, scale(l_ap, T(spec.nu)));
  return {total, fake, l_ap.item(), adv.item()};
}

// ---------------------------------------------------------------------------
// task trainer: critic updates as in the plain WGAN, fakes come from G(E(y))
// ---------------------------------------------------------------------------

template <typename T>
class TaskTrainer {
 public:
  TaskTrainer(const TrainConfig& cfg, const NetConfig& net_cfg,
              const TaskSpec& spec)
      : cfg_(cfg),
        net_cfg_(net_cfg),
        spec_(spec),
        G_(build_generator<T>(net_cfg, Rng::mix(cfg.seed, 1))),
        C_(build_critic<T>(net_cfg, Rng::mix(cfg.seed, 2))),
        E_(build_encoder<T>(net_cfg, spec.condition_channels(),
                            Rng::mix(cfg.seed, 4))),
        rng_(Rng::mix(cfg.seed, 3)) {
    cfg_.validate();
    spec_.validate();
    AdamConfig<T> ac{T(cfg.alpha), T(cfg.beta1), T(cfg.beta2), T(1e-8)};
    auto ge = param_ptrs(G_.trainable());
    auto ep = param_ptrs(E_.trainable());
    ge.insert(ge.end(), ep.begin(), ep.end());
    opt_ge_ = Adam<T>(ge, ac);
    opt_c_ = Adam<T>(param_ptrs(C_.trainable()), ac);
  }

  GeneratorNet<T>& generator() { return G_; }
  CriticNet<T>& critic() { return C_; }
  EncoderNet<T>& encoder() { return E_; }
  const TaskSpec& task() const { return spec_; }
  int64_t step() const { return step_; }

  StepReport train_step(Batcher& batcher) {
    auto t0 = std::chrono::steady_clock::now();
    StepReport rep;
    rep.step = step_;
    auto critic_fn = [this](const Var<T>& x) { return critic_forward(C_, x); };

    for (int64_t k = 0; k < cfg_.critic_ratio; ++k) {
      Tensor<T> real = batcher.next().template cast<T>();
      Tensor<T> cond = make_condition(spec_, real.template cast<float>(),
                                      rng_.next_u64())
                           .template cast<T>();
      uint64_t eps_seed = rng_.next_u64();
      Var<T> code = encoder_forward(E_, Var<T>::constant(cond), true);
      Tensor<T> fake = generator_forward(G_, code.detach(), true).value();
      auto parts = critic_loss(critic_fn, real, fake, T(cfg_.lambda), eps_seed);
      auto grads = grad(parts.loss, detail::leaves_of(opt_c_.params())).grads;
      opt_c_.step(grads);
      rep.wasserstein = double(parts.wasserstein);
      rep.penalty = double(parts.penalty);
      rep.critic_loss = double(parts.loss.item());
      rep.critic_grad_norm = detail::grad_norm(grads);
    }

    {
      Tensor<T> real = batcher.next().template cast<T>();
      Tensor<T> cond = make_condition(spec_, real.template cast<float>(),
                                      rng_.next_u64())
                           .template cast<T>();
      auto parts = task_loss(spec_, G_, E_, critic_fn, real, cond, true);
      auto grads = grad(parts.total, detail::leaves_of(opt_ge_.params())).grads;
      opt_ge_.step(grads);
      rep.generator_loss = double(parts.adversarial);
      rep.l_ap = double(parts.l_ap);
      rep.generator_grad_norm = detail::grad_norm(grads);
    }

    rep.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    if (!rep.finite())
      throw TrainAbort("non-finite values at step " + std::to_string(step_) +
                       " (run seed " + std::to_string(cfg_.seed) + ")");
    ++step_;
    return rep;
  }

  void train_loop(Batcher& batcher,
                  const std::function<void(const StepReport&)>& on_report,
                  const std::function<void(int64_t)>& on_checkpoint = {}) {
    for (int64_t s = step_; s < cfg_.total_steps; ++s) {
      StepReport rep = train_step(batcher);
      if (on_report) on_report(rep);
      if (on_checkpoint && cfg_.checkpoint_every > 0 &&
          (s + 1) % cfg_.checkpoint_every == 0)
        on_checkpoint(s + 1);
    }
    if (on_checkpoint) on_checkpoint(cfg_.total_steps);
  }

  std::vector<std::pair<std::string, Tensor<T>*>> state_tensors() {
    auto s = G_.state_tensors();
    auto c = C_.state_tensors();
    auto e = E_.state_tensors();
    s.insert(s.end(), c.begin(), c.end());
    s.insert(s.end(), e.begin(), e.end());
    return s;
  }

 private:
  TrainConfig cfg_;
  NetConfig net_cfg_;
  TaskSpec spec_;
  GeneratorNet<T> G_;
  CriticNet<T> C_;
  EncoderNet<T> E_;
  Adam<T> opt_ge_, opt_c_;
  Rng rng_;
  int64_t step_ = 0;
};

}  // namespace ivgan

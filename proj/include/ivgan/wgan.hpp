#pragma once

#include <chrono>
#include <functional>

#include "ivgan/data.hpp"
#include "ivgan/models.hpp"

namespace ivgan {

// Hyperparameters of the adversarial training schedule. Defaults are the
// paper values: lambda 10, 5 critic updates per generator update, Adam with
// alpha 0.0002, beta1 0.5, beta2 0.99, batch 64 at full scale.
struct TrainConfig {
  double lambda = 10.0;
  double nu = 1000.0;  // reconstruction weight for the task extension
  double alpha = 0.0002;
  double beta1 = 0.5;
  double beta2 = 0.99;
  int64_t critic_ratio = 5;
  int64_t batch_size = 64;
  int64_t total_steps = 2000;
  int64_t checkpoint_every = 0;  // 0: final checkpoint only
  std::vector<int64_t> lr_halve_at;
  uint64_t seed = 0;
  ScalePreset scale = ScalePreset::Full;

  void validate() const {
    if (lambda < 0) throw std::invalid_argument("TrainConfig: lambda must be >= 0");
    if (nu < 0) throw std::invalid_argument("TrainConfig: nu must be >= 0");
    if (alpha < 0) throw std::invalid_argument("TrainConfig: alpha must be >= 0");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
      throw std::invalid_argument("TrainConfig: betas must be in [0,1)");
    if (critic_ratio < 1)
      throw std::invalid_argument("TrainConfig: critic_ratio must be >= 1");
    if (batch_size < 2)
      throw std::invalid_argument("TrainConfig: batch_size must be >= 2");
    if (total_steps < 0)
      throw std::invalid_argument("TrainConfig: total_steps must be >= 0");
  }
};

struct StepReport {
  int64_t step = 0;
  double wasserstein = 0;      // E[C(x)] - E[C(G(z))], last critic sub-step
  double penalty = 0;          // gradient penalty, last critic sub-step
  double critic_loss = 0;
  double generator_loss = 0;
  double critic_grad_norm = 0;
  double generator_grad_norm = 0;
  double l_ap = 0;             // task reconstruction loss (task training only)
  double wall_ms = 0;

  bool finite() const {
    for (double v : {wasserstein, penalty, critic_loss, generator_loss,
                     critic_grad_norm, generator_grad_norm, l_ap})
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// Raised when a step produces non-finite values; carries the seed state so
// the offending batch can be reproduced.
struct TrainAbort : std::runtime_error {
  explicit TrainAbort(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// objective terms
// ---------------------------------------------------------------------------

// E[C(real)] - E[C(fake)] over the batch
template <typename T, typename CriticFn>
Var<T> wgan_value(CriticFn&& critic, const Var<T>& real, const Var<T>& fake) {
  if (real.shape()[0] != fake.shape()[0])
    throw std::invalid_argument("wgan_value: batch extents differ");
  return sub(mean_all(critic(real)), mean_all(critic(fake)));
}

// Per-sample uniform epsilon on the straight line between real and fake.
template <typename T>
Tensor<T> interpolate(const Tensor<T>& real, const Tensor<T>& fake,
                      uint64_t seed) {
  detail::check_same_shape(real.shape(), fake.shape(), "interpolate");
  Rng rng(seed);
  int64_t n = real.shape()[0];
  int64_t per = real.numel() / n;
  Tensor<T> out(real.shape());
  for (int64_t i = 0; i < n; ++i) {
    T eps = T(rng.uniform());
    const T* pr = real.data() + i * per;
    const T* pf = fake.data() + i * per;
    T* po = out.data() + i * per;
    for (int64_t j = 0; j < per; ++j)
      po[j] = eps * pr[j] + (T(1) - eps) * pf[j];
  }
  return out;
}

// E[(||d C(x_hat) / d x_hat||_2 - 1)^2]; each sample's gradient is
// flattened to one vector, its norm is taken, then the batch mean. The
// result stays differentiable wrt the critic parameters (create_graph).
template <typename T, typename CriticFn>
Var<T> gradient_penalty(CriticFn&& critic, const Var<T>& xhat) {
  if (!xhat.requires_grad())
    throw std::invalid_argument("gradient_penalty: x_hat must require grad");
  Var<T> scores = critic(xhat);
  auto g = grad(sum_all(scores), std::vector<Var<T>>{xhat},
                /*create_graph=*/true);
  int64_t n = xhat.shape()[0];
  Var<T> flat = reshape(g.grads[0], {n, g.grads[0].value().numel() / n});
  Var<T> norms = sqrt(reduce_sum(square(flat), {1}, false));
  return reduce_mean(square(add_scalar(norms, T(-1))), {0});
}

template <typename T>
struct CriticLossParts {
  Var<T> loss;
  T wasserstein;
  T penalty;
};

// critic_loss = -wgan_value + lambda * gradient_penalty (the critic
// minimizes this). fake is consumed as data: no gradient flows to G.
template <typename T, typename CriticFn>
CriticLossParts<T> critic_loss(CriticFn&& critic,
                                         const Tensor<T>& real,
                                         const Tensor<T>& fake, T lambda,
                                         uint64_t eps_seed) {
  Var<T> vr = Var<T>::constant(real);
  Var<T> vf = Var<T>::constant(fake);
  Var<T> value = wgan_value(critic, vr, vf);
  Var<T> xhat = Var<T>::leaf(interpolate(real, fake, eps_seed));
  Var<T> gp = gradient_penalty(critic, xhat);
  Var<T> loss = add(neg(value), scale(gp, lambda));
  return {loss, value.item(), gp.item()};
}

// generator term of the minimax: -E[C(G(z))]
template <typename T, typename CriticFn>
Var<T> generator_loss(CriticFn&& critic, const Var<T>& fake) {
  return neg(mean_all(critic(fake)));
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
double grad_norm(const std::vector<Var<T>>& grads) {
  double acc = 0;
  for (const auto& g : grads)
    for (int64_t i = 0; i < g.value().numel(); ++i)
      acc += double(g.value()[i]) * double(g.value()[i]);
  return std::sqrt(acc);
}

template <typename T>
std::vector<Var<T>> leaves_of(const std::vector<Var<T>*>& params) {
  std::vector<Var<T>> out;
  out.reserve(params.size());
  for (auto* p : params) out.push_back(*p);
  return out;
}

}  // namespace detail

// Unconditional WGAN-GP trainer (generator + critic).
template <typename T>
class GanTrainer {
 public:
  GanTrainer(const TrainConfig& cfg, const NetConfig& net_cfg)
      : cfg_(cfg),
        net_cfg_(net_cfg),
        G_(build_generator<T>(net_cfg, Rng::mix(cfg.seed, 1))),
        C_(build_critic<T>(net_cfg, Rng::mix(cfg.seed, 2))),
        rng_(Rng::mix(cfg.seed, 3)) {
    cfg_.validate();
    AdamConfig<T> ac{T(cfg.alpha), T(cfg.beta1), T(cfg.beta2), T(1e-8)};
    opt_g_ = Adam<T>(param_ptrs(G_.trainable()), ac);
    opt_c_ = Adam<T>(param_ptrs(C_.trainable()), ac);
  }

  GeneratorNet<T>& generator() { return G_; }
  CriticNet<T>& critic() { return C_; }
  const TrainConfig& config() const { return cfg_; }
  int64_t step() const { return step_; }

  StepReport train_step(Batcher& batcher) {
    auto t0 = std::chrono::steady_clock::now();
    maybe_halve_lr();
    StepReport rep;
    rep.step = step_;
    auto critic_fn = [this](const Var<T>& x) { return critic_forward(C_, x); };

    for (int64_t k = 0; k < cfg_.critic_ratio; ++k) {
      Tensor<T> real = batcher.next().template cast<T>();
      uint64_t z_seed = rng_.next_u64();
      uint64_t eps_seed = rng_.next_u64();
      Var<T> z = Var<T>::constant(rng_fill<T>(
          Dist::Normal01, {real.shape()[0], net_cfg_.z_dim}, z_seed));
      Tensor<T> fake = generator_forward(G_, z, true).value();
      auto parts = critic_loss(critic_fn, real, fake, T(cfg_.lambda), eps_seed);
      auto grads =
          grad(parts.loss, detail::leaves_of(opt_c_.params())).grads;
      opt_c_.step(grads);
      rep.wasserstein = double(parts.wasserstein);
      rep.penalty = double(parts.penalty);
      rep.critic_loss = double(parts.loss.item());
      rep.critic_grad_norm = detail::grad_norm(grads);
    }

    {
      // fresh z for the generator update
      uint64_t z_seed = rng_.next_u64();
      Var<T> z = Var<T>::constant(rng_fill<T>(
          Dist::Normal01, {cfg_.batch_size, net_cfg_.z_dim}, z_seed));
      Var<T> fake = generator_forward(G_, z, true);
      Var<T> gloss = generator_loss(critic_fn, fake);
      auto grads = grad(gloss, detail::leaves_of(opt_g_.params())).grads;
      opt_g_.step(grads);
      rep.generator_loss = double(gloss.item());
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
    s.insert(s.end(), c.begin(), c.end());
    return s;
  }

 private:
  void maybe_halve_lr() {
    for (int64_t at : cfg_.lr_halve_at) {
      if (at == step_) {
        opt_g_.set_alpha(opt_g_.alpha() / 2);
        opt_c_.set_alpha(opt_c_.alpha() / 2);
      }
    }
  }

  TrainConfig cfg_;
  NetConfig net_cfg_;
  GeneratorNet<T> G_;
  CriticNet<T> C_;
  Adam<T> opt_g_, opt_c_;
  Rng rng_;
  int64_t step_ = 0;
};

}  // namespace ivgan

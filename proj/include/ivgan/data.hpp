#pragma once

#include <array>

#include "ivgan/tensor.hpp"

namespace ivgan {

// A video sample: shape (T, H, W, C), f32 values in [-1, 1].
using Clip = Tensor<float>;

inline void check_clip(const Clip& c, const char* who) {
  if (c.ndim() != 4)
    throw std::invalid_argument(std::string(who) + ": clip must be (T,H,W,C), got " +
                                shape_str(c.shape()));
  for (int64_t i = 0; i < c.numel(); ++i)
    if (c[i] < -1.0f || c[i] > 1.0f)
      throw std::invalid_argument(std::string(who) + ": clip value out of [-1,1]");
}

// ---------------------------------------------------------------------------
// synthetic moving-squares clips
// ---------------------------------------------------------------------------

using Color = std::array<float, 3>;  // in [0, 1]

struct MovingSquare {
  int64_t row = 0, col = 0;  // top-left at frame 0
  int64_t size = 2;
  int64_t vy = 0, vx = 0;    // pixels per frame, integer
  Color color{1, 1, 1};
};

// A fully determined scene; synth_clip samples one of these and renders it.
struct SceneSpec {
  Color bg_a{0, 0, 0};
  Color bg_b{0, 0, 0};
  bool gradient = false;     // vertical gradient from bg_a to bg_b
  int64_t bg_vy = 0;         // background pan, pixels/frame (wrapping)
  std::vector<MovingSquare> squares;
};

enum class SynthPreset { MovingSquaresStaticBg, MovingSquaresPanningBg };

struct SynthSpec {
  SynthPreset preset = SynthPreset::MovingSquaresStaticBg;
  int64_t frames = 8, height = 16, width = 16;
  int64_t min_objects = 1, max_objects = 3;
  int64_t max_speed = 2;  // per-axis object speed bound, pixels/frame
  std::vector<Color> palette{{0.9f, 0.2f, 0.2f},
                             {0.2f, 0.85f, 0.3f},
                             {0.25f, 0.4f, 0.95f},
                             {0.95f, 0.9f, 0.2f},
                             {0.9f, 0.9f, 0.9f}};
  uint64_t seed = 0;
};

namespace detail {
inline float to_signed(float v01) { return 2.0f * v01 - 1.0f; }
inline int64_t wrap(int64_t v, int64_t m) { return ((v % m) + m) % m; }
}  // namespace detail

// Deterministic renderer. Squares move with constant integer velocity and
// are clipped at the frame edges; a panning background wraps around.
inline Clip render_scene(const SceneSpec& scene, int64_t frames, int64_t height,
                         int64_t width) {
  Clip clip({frames, height, width, 3});
  for (int64_t t = 0; t < frames; ++t) {
    for (int64_t r = 0; r < height; ++r) {
      int64_t src_row = scene.gradient && scene.bg_vy != 0
                            ? detail::wrap(r + t * scene.bg_vy, height)
                            : r;
      float frac = scene.gradient ? float(src_row) / float(height) : 0.0f;
      for (int64_t c = 0; c < width; ++c)
        for (int64_t ch = 0; ch < 3; ++ch) {
          float v = scene.bg_a[size_t(ch)] +
                    frac * (scene.bg_b[size_t(ch)] - scene.bg_a[size_t(ch)]);
          clip[((t * height + r) * width + c) * 3 + ch] = detail::to_signed(v);
        }
    }
    for (const auto& sq : scene.squares) {
      int64_t top = sq.row + t * sq.vy;
      int64_t left = sq.col + t * sq.vx;
      for (int64_t r = std::max<int64_t>(0, top);
           r < std::min(height, top + sq.size); ++r)
        for (int64_t c = std::max<int64_t>(0, left);
             c < std::min(width, left + sq.size); ++c)
          for (int64_t ch = 0; ch < 3; ++ch)
            clip[((t * height + r) * width + c) * 3 + ch] =
                detail::to_signed(sq.color[size_t(ch)]);
    }
  }
  return clip;
}

inline SceneSpec sample_scene(const SynthSpec& spec, int64_t index) {
  Rng rng(Rng::mix(spec.seed, uint64_t(index)));
  SceneSpec scene;
  const auto& pal = spec.palette;
  auto pick = [&]() { return pal[size_t(rng.next_u64() % pal.size())]; };

  bool panning = spec.preset == SynthPreset::MovingSquaresPanningBg;
  scene.gradient = panning || (rng.next_u64() & 1);
  Color dark{0.05f, 0.08f, 0.12f};
  scene.bg_a = (rng.next_u64() & 1) ? dark : Color{0.15f, 0.12f, 0.08f};
  scene.bg_b = pick();
  if (panning) {
    // pan along a strict gradient so every background pixel moves
    scene.bg_vy = 1 + int64_t(rng.next_u64() % uint64_t(spec.max_speed));
    if (rng.next_u64() & 1) scene.bg_vy = -scene.bg_vy;
  }

  int64_t span = spec.max_objects - spec.min_objects + 1;
  int64_t count = spec.min_objects + int64_t(rng.next_u64() % uint64_t(span));
  for (int64_t i = 0; i < count; ++i) {
    MovingSquare sq;
    int64_t max_size = std::max<int64_t>(2, spec.height / 3);
    sq.size = 2 + int64_t(rng.next_u64() % uint64_t(max_size - 1));
    sq.row = int64_t(rng.next_u64() % uint64_t(spec.height - sq.size + 1));
    sq.col = int64_t(rng.next_u64() % uint64_t(spec.width - sq.size + 1));
    int64_t vspan = 2 * spec.max_speed + 1;
    sq.vy = int64_t(rng.next_u64() % uint64_t(vspan)) - spec.max_speed;
    sq.vx = int64_t(rng.next_u64() % uint64_t(vspan)) - spec.max_speed;
    sq.color = pick();
    scene.squares.push_back(sq);
  }
  return scene;
}

inline Clip synth_clip(const SynthSpec& spec, int64_t index) {
  return render_scene(sample_scene(spec, index), spec.frames, spec.height,
                      spec.width);
}

// ---------------------------------------------------------------------------
// dataset + batcher
// ---------------------------------------------------------------------------

class ClipDataset {
 public:
  static ClipDataset synthetic(const SynthSpec& spec, int64_t count) {
    ClipDataset ds;
    ds.clips_.reserve(size_t(count));
    for (int64_t i = 0; i < count; ++i) ds.clips_.push_back(synth_clip(spec, i));
    return ds;
  }

  static ClipDataset from_clips(std::vector<Clip> clips) {
    if (clips.empty())
      throw std::invalid_argument("ClipDataset: no clips");
    for (const auto& c : clips) check_clip(c, "ClipDataset");
    ClipDataset ds;
    ds.clips_ = std::move(clips);
    return ds;
  }

  int64_t size() const { return int64_t(clips_.size()); }
  const Clip& clip(int64_t i) const { return clips_[size_t(i)]; }

 private:
  std::vector<Clip> clips_;
};

// Stack clips into a (N, T, H, W, C) batch tensor.
inline Tensor<float> stack_clips(const std::vector<const Clip*>& clips) {
  const Shape& cs = clips.front()->shape();
  Shape bs{int64_t(clips.size()), cs[0], cs[1], cs[2], cs[3]};
  Tensor<float> batch(bs);
  int64_t per = clips.front()->numel();
  for (size_t i = 0; i < clips.size(); ++i) {
    if (clips[i]->shape() != cs)
      throw std::invalid_argument("stack_clips: inconsistent clip shapes");
    std::copy(clips[i]->data(), clips[i]->data() + per,
              batch.data() + int64_t(i) * per);
  }
  return batch;
}

// Shuffled, seeded, epoch-aware batch stream. Every clip appears exactly
// once per epoch; a trailing partial batch is emitted as-is.
class Batcher {
 public:
  Batcher(const ClipDataset& ds, int64_t batch_size, uint64_t seed)
      : ds_(&ds), batch_(batch_size), rng_(seed) {
    if (batch_size < 2)
      throw std::invalid_argument("Batcher: batch_size must be >= 2");
    order_.resize(size_t(ds.size()));
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = int64_t(i);
    shuffle();
  }

  Tensor<float> next() {
    if (pos_ >= int64_t(order_.size())) {
      ++epoch_;
      pos_ = 0;
      shuffle();
    }
    int64_t n = std::min(batch_, int64_t(order_.size()) - pos_);
    std::vector<const Clip*> clips;
    clips.reserve(size_t(n));
    for (int64_t i = 0; i < n; ++i)
      clips.push_back(&ds_->clip(order_[size_t(pos_ + i)]));
    pos_ += n;
    return stack_clips(clips);
  }

  int64_t epoch() const { return epoch_; }

 private:
  void shuffle() {
    for (size_t i = order_.size(); i > 1; --i) {
      size_t j = size_t(rng_.next_u64() % i);
      std::swap(order_[i - 1], order_[j]);
    }
  }

  const ClipDataset* ds_;
  int64_t batch_;
  Rng rng_;
  std::vector<int64_t> order_;
  int64_t pos_ = 0;
  int64_t epoch_ = 0;
};

}  // namespace ivgan

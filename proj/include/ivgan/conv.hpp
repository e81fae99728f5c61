#pragma once

#include <array>
#include <cstring>

#include "ivgan/tensor.hpp"

namespace ivgan {

// Spatio-temporal convolution parameters. Paper defaults: 4x4x4 kernel,
// stride 2x2x2, bias. Padding 1x1x1 so strided convs halve and transposed
// convs double every extent.
struct ConvSpec {
  std::array<int64_t, 3> kernel{4, 4, 4};
  std::array<int64_t, 3> stride{2, 2, 2};
  std::array<int64_t, 3> padding{1, 1, 1};
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  bool transposed = false;
  bool bias = true;

  int64_t patch_size() const {
    return kernel[0] * kernel[1] * kernel[2] * in_channels;
  }

  // forward (strided) output extent
  int64_t out_extent(int axis, int64_t in) const {
    int64_t k = kernel[size_t(axis)], s = stride[size_t(axis)],
            p = padding[size_t(axis)];
    if (in + 2 * p < k)
      throw std::invalid_argument("conv3d: input extent " + std::to_string(in) +
                                  " too small for kernel " + std::to_string(k));
    return (in + 2 * p - k) / s + 1;
  }

  // transposed output extent: (in - 1) * stride - 2 * pad + kernel
  int64_t transposed_out_extent(int axis, int64_t in) const {
    int64_t e = (in - 1) * stride[size_t(axis)] - 2 * padding[size_t(axis)] +
                kernel[size_t(axis)];
    if (e < 1)
      throw std::invalid_argument("conv3d_transposed: degenerate output extent");
    return e;
  }
};

namespace detail {

// Patches are laid out ((kt*kh + khh)*kw + kww)*Ci + ci so a patch row times
// the [K, Co]-reshaped weight tensor is the convolution output directly.
template <typename T>
void fill_patch_rows(const Tensor<T>& x, const ConvSpec& spec, int64_t row0,
                     int64_t rows, const Shape& out_sp, T* cols) {
  const int64_t Ti = x.extent(1), Hi = x.extent(2), Wi = x.extent(3),
                Ci = x.extent(4);
  const int64_t To = out_sp[0], Ho = out_sp[1], Wo = out_sp[2];
  const int64_t K = spec.patch_size();
  const auto& k = spec.kernel;
  const auto& s = spec.stride;
  const auto& p = spec.padding;
  const T* px = x.data();
  for (int64_t r = 0; r < rows; ++r) {
    int64_t g = row0 + r;
    const int64_t wo = g % Wo; g /= Wo;
    const int64_t ho = g % Ho; g /= Ho;
    const int64_t to = g % To; g /= To;
    const int64_t n = g;
    T* prow = cols + r * K;
    int64_t col = 0;
    for (int64_t kt = 0; kt < k[0]; ++kt) {
      const int64_t ti = to * s[0] - p[0] + kt;
      for (int64_t kh = 0; kh < k[1]; ++kh) {
        const int64_t hi = ho * s[1] - p[1] + kh;
        for (int64_t kw = 0; kw < k[2]; ++kw, col += Ci) {
          const int64_t wi = wo * s[2] - p[2] + kw;
          if (ti < 0 || ti >= Ti || hi < 0 || hi >= Hi || wi < 0 || wi >= Wi) {
            std::memset(prow + col, 0, size_t(Ci) * sizeof(T));
          } else {
            const T* src = px + (((n * Ti + ti) * Hi + hi) * Wi + wi) * Ci;
            std::memcpy(prow + col, src, size_t(Ci) * sizeof(T));
          }
        }
      }
    }
  }
}

// Adjoint of fill_patch_rows: scatter-add patch rows back into x. Rows are
// processed in order, so accumulation is reproducible.
template <typename T>
void scatter_patch_rows(Tensor<T>& x, const ConvSpec& spec, int64_t row0,
                        int64_t rows, const Shape& out_sp, const T* cols) {
  const int64_t Ti = x.extent(1), Hi = x.extent(2), Wi = x.extent(3),
                Ci = x.extent(4);
  const int64_t To = out_sp[0], Ho = out_sp[1], Wo = out_sp[2];
  const int64_t K = spec.patch_size();
  const auto& k = spec.kernel;
  const auto& s = spec.stride;
  const auto& p = spec.padding;
  T* px = x.data();
  for (int64_t r = 0; r < rows; ++r) {
    int64_t g = row0 + r;
    const int64_t wo = g % Wo; g /= Wo;
    const int64_t ho = g % Ho; g /= Ho;
    const int64_t to = g % To; g /= To;
    const int64_t n = g;
    const T* prow = cols + r * K;
    int64_t col = 0;
    for (int64_t kt = 0; kt < k[0]; ++kt) {
      const int64_t ti = to * s[0] - p[0] + kt;
      for (int64_t kh = 0; kh < k[1]; ++kh) {
        const int64_t hi = ho * s[1] - p[1] + kh;
        for (int64_t kw = 0; kw < k[2]; ++kw, col += Ci) {
          const int64_t wi = wo * s[2] - p[2] + kw;
          if (ti < 0 || ti >= Ti || hi < 0 || hi >= Hi || wi < 0 || wi >= Wi)
            continue;
          T* dst = px + (((n * Ti + ti) * Hi + hi) * Wi + wi) * Ci;
          for (int64_t c = 0; c < Ci; ++c) dst[c] += prow[col + c];
        }
      }
    }
  }
}

inline int64_t conv_block_rows(int64_t total_rows, int64_t patch) {
  // cap the im2col scratch at ~64 MB of f32
  int64_t cap = std::max<int64_t>(1, (16 << 20) / std::max<int64_t>(1, patch));
  return std::min(total_rows, cap);
}

template <typename T>
void check_conv_input(const Tensor<T>& x, const ConvSpec& spec,
                      const char* op) {
  if (x.ndim() != 5)
    throw std::invalid_argument(std::string(op) +
                                ": expects (N,T,H,W,C) input, got " +
                                shape_str(x.shape()));
  if (x.extent(4) != spec.in_channels &&
      !(spec.transposed && x.extent(4) == spec.out_channels))
    throw std::invalid_argument(std::string(op) + ": channel mismatch, input " +
                                shape_str(x.shape()) + " vs spec in=" +
                                std::to_string(spec.in_channels));
}

template <typename T>
void check_conv_weights(const Tensor<T>& w, const ConvSpec& spec,
                        const char* op) {
  Shape want{spec.kernel[0], spec.kernel[1], spec.kernel[2], spec.in_channels,
             spec.out_channels};
  if (w.shape() != want)
    throw std::invalid_argument(std::string(op) + ": weight shape " +
                                shape_str(w.shape()) + " does not match spec " +
                                shape_str(want));
}

}  // namespace detail

// Cross-correlation convention (no kernel flip).
// x: [N,T,H,W,Ci], w: [kt,kh,kw,Ci,Co] -> [N,To,Ho,Wo,Co]
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& spec) {
  detail::check_conv_input(x, spec, "conv3d");
  detail::check_conv_weights(w, spec, "conv3d");
  if (x.extent(4) != spec.in_channels)
    throw std::invalid_argument("conv3d: channel mismatch");
  const int64_t N = x.extent(0);
  Shape out_sp{spec.out_extent(0, x.extent(1)), spec.out_extent(1, x.extent(2)),
               spec.out_extent(2, x.extent(3))};
  const int64_t Co = spec.out_channels;
  const int64_t K = spec.patch_size();
  const int64_t rows = N * out_sp[0] * out_sp[1] * out_sp[2];
  Tensor<T> y({N, out_sp[0], out_sp[1], out_sp[2], Co});

  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const Mat> wm(w.data(), K, Co);
  const int64_t block = detail::conv_block_rows(rows, K);
  std::vector<T> cols(size_t(block * K));
  for (int64_t r0 = 0; r0 < rows; r0 += block) {
    const int64_t rb = std::min(block, rows - r0);
    detail::fill_patch_rows(x, spec, r0, rb, out_sp, cols.data());
    Eigen::Map<const Mat> cm(cols.data(), rb, K);
    Eigen::Map<Mat> ym(y.data() + r0 * Co, rb, Co);
    ym.noalias() = cm * wm;
  }
  return y;
}

// Exact adjoint of conv3d in its first argument: for shared weights,
// <conv3d(x, w), g> == <x, conv3d_transposed(g, w)>.
// g: [N,To,Ho,Wo,Co], w: [kt,kh,kw,Ci,Co] -> [N,Ti,Hi,Wi,Ci]
template <typename T>
Tensor<T> conv3d_transposed(const Tensor<T>& g, const Tensor<T>& w,
                            const ConvSpec& spec) {
  detail::check_conv_weights(w, spec, "conv3d_transposed");
  if (g.ndim() != 5 || g.extent(4) != spec.out_channels)
    throw std::invalid_argument("conv3d_transposed: channel mismatch, input " +
                                shape_str(g.shape()));
  const int64_t N = g.extent(0);
  Shape out_sp{g.extent(1), g.extent(2), g.extent(3)};
  Shape in_sp{spec.transposed_out_extent(0, g.extent(1)),
              spec.transposed_out_extent(1, g.extent(2)),
              spec.transposed_out_extent(2, g.extent(3))};
  const int64_t Co = spec.out_channels;
  const int64_t K = spec.patch_size();
  const int64_t rows = N * out_sp[0] * out_sp[1] * out_sp[2];
  Tensor<T> x({N, in_sp[0], in_sp[1], in_sp[2], spec.in_channels}, T(0));

  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const Mat> wm(w.data(), K, Co);
  const int64_t block = detail::conv_block_rows(rows, K);
  std::vector<T> cols(size_t(block * K));
  for (int64_t r0 = 0; r0 < rows; r0 += block) {
    const int64_t rb = std::min(block, rows - r0);
    Eigen::Map<const Mat> gm(g.data() + r0 * Co, rb, Co);
    Eigen::Map<Mat> cm(cols.data(), rb, K);
    cm.noalias() = gm * wm.transpose();
    detail::scatter_patch_rows(x, spec, r0, rb, out_sp, cols.data());
  }
  return x;
}

// Gradient of conv3d wrt the weights:
// <conv3d_wgrad(x, gy), W> == <conv3d(x, W), gy> for every W.
// x: [N,Ti,Hi,Wi,Ci], gy: [N,To,Ho,Wo,Co] -> [kt,kh,kw,Ci,Co]
template <typename T>
Tensor<T> conv3d_wgrad(const Tensor<T>& x, const Tensor<T>& gy,
                       const ConvSpec& spec) {
  detail::check_conv_input(x, spec, "conv3d_wgrad");
  Shape out_sp{spec.out_extent(0, x.extent(1)), spec.out_extent(1, x.extent(2)),
               spec.out_extent(2, x.extent(3))};
  Shape want{x.extent(0), out_sp[0], out_sp[1], out_sp[2], spec.out_channels};
  if (gy.shape() != want)
    throw std::invalid_argument("conv3d_wgrad: gy shape " +
                                shape_str(gy.shape()) + " expected " +
                                shape_str(want));
  const int64_t Co = spec.out_channels;
  const int64_t K = spec.patch_size();
  const int64_t rows = numel(want) / Co;
  Tensor<T> dw({spec.kernel[0], spec.kernel[1], spec.kernel[2],
                spec.in_channels, Co},
               T(0));

  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<Mat> dwm(dw.data(), K, Co);
  const int64_t block = detail::conv_block_rows(rows, K);
  std::vector<T> cols(size_t(block * K));
  for (int64_t r0 = 0; r0 < rows; r0 += block) {
    const int64_t rb = std::min(block, rows - r0);
    detail::fill_patch_rows(x, spec, r0, rb, out_sp, cols.data());
    Eigen::Map<const Mat> cm(cols.data(), rb, K);
    Eigen::Map<const Mat> gm(gy.data() + r0 * Co, rb, Co);
    dwm.noalias() += cm.transpose() * gm;
  }
  return dw;
}

}  // namespace ivgan

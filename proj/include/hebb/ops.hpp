#pragma once
// Forward/backward numeric kernels: convolution, pooling, activation, linear,
// dropout, loss, init. Templated on the scalar type so checks can run at
// 64-bit; the training path uses float storage. Matrix products go through
// Eigen; scalar reductions (losses, sums, norms) accumulate in double.

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <vector>

#include "hebb/tensor.hpp"

namespace hebb {

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapM = Eigen::Map<MatRM<T>>;
template <class T>
using CMapM = Eigen::Map<const MatRM<T>>;

inline std::int64_t conv_out_dim(std::int64_t in, std::int64_t k, int stride, int padding) {
  return (in + 2 * padding - k) / stride + 1;
}

/// Rearranges [N,C,H,W] into a patch matrix [N*Ho*Wo, C*kh*kw]; row p holds
/// the flattened receptive field of output position p (zero padding).
template <class T>
TensorT<T> im2col(const TensorT<T>& input, std::int64_t kh, std::int64_t kw, int stride, int padding) {
  if (input.rank() != 4) throw ShapeError("im2col: expected 4-d input, got " + shape_str(input.shape));
  if (stride < 1) throw ShapeError("im2col: stride must be >= 1");
  if (padding < 0) throw ShapeError("im2col: padding must be >= 0");
  const std::int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (kh > H + 2 * padding || kw > W + 2 * padding)
    throw ShapeError("im2col: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " larger than padded input " + shape_str(input.shape));
  const std::int64_t Ho = conv_out_dim(H, kh, stride, padding);
  const std::int64_t Wo = conv_out_dim(W, kw, stride, padding);
  const std::int64_t D = C * kh * kw;
  TensorT<T> cols({N * Ho * Wo, D});
  const T* in = input.ptr();
  T* out = cols.ptr();
#pragma omp parallel for schedule(static) if (N * Ho * Wo > 1024)
  for (std::int64_t p = 0; p < N * Ho * Wo; ++p) {
    const std::int64_t n = p / (Ho * Wo);
    const std::int64_t i = (p / Wo) % Ho;
    const std::int64_t j = p % Wo;
    T* row = out + p * D;
    for (std::int64_t c = 0; c < C; ++c) {
      const T* plane = in + (n * C + c) * H * W;
      for (std::int64_t a = 0; a < kh; ++a) {
        const std::int64_t ih = i * stride + a - padding;
        for (std::int64_t b = 0; b < kw; ++b) {
          const std::int64_t iw = j * stride + b - padding;
          row[(c * kh + a) * kw + b] =
              (ih >= 0 && ih < H && iw >= 0 && iw < W) ? plane[ih * W + iw] : T{0};
        }
      }
    }
  }
  return cols;
}

/// Adjoint of im2col: scatter-adds patch rows back into an [N,C,H,W] tensor.
template <class T>
TensorT<T> col2im(const TensorT<T>& cols, const Shape& input_shape, std::int64_t kh, std::int64_t kw,
                  int stride, int padding) {
  if (input_shape.size() != 4) throw ShapeError("col2im: expected 4-d target shape");
  const std::int64_t N = input_shape[0], C = input_shape[1], H = input_shape[2], W = input_shape[3];
  const std::int64_t Ho = conv_out_dim(H, kh, stride, padding);
  const std::int64_t Wo = conv_out_dim(W, kw, stride, padding);
  const std::int64_t D = C * kh * kw;
  if (cols.rank() != 2 || cols.dim(0) != N * Ho * Wo || cols.dim(1) != D)
    throw ShapeError("col2im: patch matrix " + shape_str(cols.shape) + " inconsistent with target " +
                     shape_str(input_shape));
  TensorT<T> out(input_shape);
  T* dst = out.ptr();
  const T* src = cols.ptr();
  for (std::int64_t p = 0; p < N * Ho * Wo; ++p) {
    const std::int64_t n = p / (Ho * Wo);
    const std::int64_t i = (p / Wo) % Ho;
    const std::int64_t j = p % Wo;
    const T* row = src + p * D;
    for (std::int64_t c = 0; c < C; ++c) {
      T* plane = dst + (n * C + c) * H * W;
      for (std::int64_t a = 0; a < kh; ++a) {
        const std::int64_t ih = i * stride + a - padding;
        if (ih < 0 || ih >= H) continue;
        for (std::int64_t b = 0; b < kw; ++b) {
          const std::int64_t iw = j * stride + b - padding;
          if (iw < 0 || iw >= W) continue;
          plane[ih * W + iw] += row[(c * kh + a) * kw + b];
        }
      }
    }
  }
  return out;
}

template <class T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const TensorT<T>& weights, const TensorT<T>& bias,
                          int stride, int padding) {
  if (input.rank() != 4 || weights.rank() != 4)
    throw ShapeError("conv2d_forward: input " + shape_str(input.shape) + " / weights " +
                     shape_str(weights.shape) + " must be 4-d");
  const std::int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::int64_t K = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
  if (weights.dim(1) != C)
    throw ShapeError("conv2d_forward: weight channels " + std::to_string(weights.dim(1)) +
                     " != input channels " + std::to_string(C));
  if (bias.rank() != 1 || bias.dim(0) != K)
    throw ShapeError("conv2d_forward: bias must have shape [" + std::to_string(K) + "]");
  TensorT<T> cols = im2col(input, kh, kw, stride, padding);
  const std::int64_t Ho = conv_out_dim(H, kh, stride, padding);
  const std::int64_t Wo = conv_out_dim(W, kw, stride, padding);
  const std::int64_t D = C * kh * kw;
  const std::int64_t P = N * Ho * Wo;

  CMapM<T> colmap(cols.ptr(), P, D);
  CMapM<T> wmap(weights.ptr(), K, D);
  MatRM<T> prod = wmap * colmap.transpose();  // K x P

  TensorT<T> out({N, K, Ho, Wo});
  const std::int64_t hw = Ho * Wo;
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t k = 0; k < K; ++k) {
      const T b = bias[k];
      const T* src = prod.data() + k * P + n * hw;
      T* dst = out.ptr() + (n * K + k) * hw;
      for (std::int64_t q = 0; q < hw; ++q) dst[q] = src[q] + b;
    }
  check_finite(out, "conv2d_forward");
  return out;
}

template <class T>
struct ConvGrads {
  TensorT<T> input, weights, bias;
};

template <class T>
ConvGrads<T> conv2d_backward(const TensorT<T>& grad_out, const TensorT<T>& cached_input,
                             const TensorT<T>& weights, int stride, int padding) {
  const std::int64_t N = cached_input.dim(0), C = cached_input.dim(1), H = cached_input.dim(2),
                     W = cached_input.dim(3);
  const std::int64_t K = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
  const std::int64_t Ho = conv_out_dim(H, kh, stride, padding);
  const std::int64_t Wo = conv_out_dim(W, kw, stride, padding);
  if (grad_out.shape != Shape{N, K, Ho, Wo})
    throw ShapeError("conv2d_backward: grad_out " + shape_str(grad_out.shape) + " != expected " +
                     shape_str({N, K, Ho, Wo}));
  const std::int64_t D = C * kh * kw;
  const std::int64_t P = N * Ho * Wo;
  const std::int64_t hw = Ho * Wo;

  // Regroup grad_out [N,K,Ho,Wo] as a patch-major matrix G [P,K].
  TensorT<T> g({P, K});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t k = 0; k < K; ++k) {
      const T* src = grad_out.ptr() + (n * K + k) * hw;
      T* dst = g.ptr() + n * hw * K + k;
      for (std::int64_t q = 0; q < hw; ++q) dst[q * K] = src[q];
    }

  TensorT<T> cols = im2col(cached_input, kh, kw, stride, padding);
  CMapM<T> gmap(g.ptr(), P, K);
  CMapM<T> colmap(cols.ptr(), P, D);
  CMapM<T> wmap(weights.ptr(), K, D);

  ConvGrads<T> grads;
  grads.weights = TensorT<T>({K, C, kh, kw});
  MapM<T>(grads.weights.ptr(), K, D) = gmap.transpose() * colmap;

  grads.bias = TensorT<T>({K});
  for (std::int64_t k = 0; k < K; ++k) {
    double acc = 0.0;
    for (std::int64_t n = 0; n < N; ++n) {
      const T* src = grad_out.ptr() + (n * K + k) * hw;
      for (std::int64_t q = 0; q < hw; ++q) acc += static_cast<double>(src[q]);
    }
    grads.bias[k] = static_cast<T>(acc);
  }

  TensorT<T> grad_cols({P, D});
  MapM<T>(grad_cols.ptr(), P, D) = gmap * wmap;
  grads.input = col2im(grad_cols, cached_input.shape, kh, kw, stride, padding);

  check_finite(grads.input, "conv2d_backward");
  check_finite(grads.weights, "conv2d_backward");
  check_finite(grads.bias, "conv2d_backward");
  return grads;
}

template <class T>
struct PoolOut {
  TensorT<T> output;
  std::vector<std::int64_t> argmax;  // flat index into the pooled input, first occurrence on ties
};

template <class T>
PoolOut<T> maxpool2d_forward(const TensorT<T>& input, int k, int stride) {
  if (input.rank() != 4) throw ShapeError("maxpool2d_forward: expected 4-d input");
  const std::int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (k > H || k > W)
    throw ShapeError("maxpool2d_forward: window " + std::to_string(k) + " larger than input " +
                     shape_str(input.shape));
  if (stride < 1) throw ShapeError("maxpool2d_forward: stride must be >= 1");
  const std::int64_t Ho = (H - k) / stride + 1;
  const std::int64_t Wo = (W - k) / stride + 1;
  PoolOut<T> res;
  res.output = TensorT<T>({N, C, Ho, Wo});
  res.argmax.resize(static_cast<std::size_t>(N * C * Ho * Wo));
  const T* in = input.ptr();
  std::int64_t o = 0;
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c) {
      const std::int64_t base = (n * C + c) * H * W;
      for (std::int64_t i = 0; i < Ho; ++i)
        for (std::int64_t j = 0; j < Wo; ++j, ++o) {
          T best{};
          std::int64_t best_idx = -1;
          for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) {
              const std::int64_t idx = base + (i * stride + a) * W + (j * stride + b);
              if (best_idx < 0 || in[idx] > best) {
                best = in[idx];
                best_idx = idx;
              }
            }
          res.output[o] = best;
          res.argmax[static_cast<std::size_t>(o)] = best_idx;
        }
    }
  check_finite(res.output, "maxpool2d_forward");
  return res;
}

template <class T>
TensorT<T> maxpool2d_backward(const TensorT<T>& grad_out, const std::vector<std::int64_t>& argmax,
                              const Shape& input_shape) {
  if (grad_out.numel() != static_cast<std::int64_t>(argmax.size()))
    throw ShapeError("maxpool2d_backward: grad_out and argmax size mismatch");
  TensorT<T> grad_in(input_shape);
  const std::int64_t n = grad_in.numel();
  for (std::size_t o = 0; o < argmax.size(); ++o) {
    const std::int64_t idx = argmax[o];
    if (idx < 0 || idx >= n) throw ShapeError("maxpool2d_backward: argmax index out of bounds");
    grad_in[idx] += grad_out[static_cast<std::int64_t>(o)];
  }
  return grad_in;
}

template <class T>
TensorT<T> relu_forward(const TensorT<T>& x) {
  TensorT<T> y = x;
  for (T& v : y.data) v = v > T{0} ? v : T{0};
  check_finite(y, "relu_forward");
  return y;
}

template <class T>
TensorT<T> relu_backward(const TensorT<T>& grad_out, const TensorT<T>& cached_x) {
  if (grad_out.shape != cached_x.shape) throw ShapeError("relu_backward: shape mismatch");
  TensorT<T> g = grad_out;
  for (std::size_t i = 0; i < g.data.size(); ++i)
    if (!(cached_x.data[i] > T{0})) g.data[i] = T{0};  // subgradient 0 at x == 0
  return g;
}

template <class T>
TensorT<T> linear_forward(const TensorT<T>& input, const TensorT<T>& weights, const TensorT<T>& bias) {
  if (input.rank() != 2 || weights.rank() != 2)
    throw ShapeError("linear_forward: input " + shape_str(input.shape) + " / weights " +
                     shape_str(weights.shape) + " must be 2-d");
  const std::int64_t N = input.dim(0), D = input.dim(1), M = weights.dim(0);
  if (weights.dim(1) != D)
    throw ShapeError("linear_forward: weights expect " + std::to_string(weights.dim(1)) +
                     " inputs, got " + std::to_string(D));
  if (bias.rank() != 1 || bias.dim(0) != M)
    throw ShapeError("linear_forward: bias must have shape [" + std::to_string(M) + "]");
  TensorT<T> out({N, M});
  MapM<T> omap(out.ptr(), N, M);
  omap = CMapM<T>(input.ptr(), N, D) * CMapM<T>(weights.ptr(), M, D).transpose();
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t m = 0; m < M; ++m) out.at2(n, m) += bias[m];
  check_finite(out, "linear_forward");
  return out;
}

template <class T>
struct LinearGrads {
  TensorT<T> input, weights, bias;
};

template <class T>
LinearGrads<T> linear_backward(const TensorT<T>& grad_out, const TensorT<T>& cached_input,
                               const TensorT<T>& weights) {
  const std::int64_t N = cached_input.dim(0), D = cached_input.dim(1), M = weights.dim(0);
  if (grad_out.shape != Shape{N, M})
    throw ShapeError("linear_backward: grad_out " + shape_str(grad_out.shape) + " != expected " +
                     shape_str({N, M}));
  LinearGrads<T> g;
  g.input = TensorT<T>({N, D});
  MapM<T>(g.input.ptr(), N, D) = CMapM<T>(grad_out.ptr(), N, M) * CMapM<T>(weights.ptr(), M, D);
  g.weights = TensorT<T>({M, D});
  MapM<T>(g.weights.ptr(), M, D) =
      CMapM<T>(grad_out.ptr(), N, M).transpose() * CMapM<T>(cached_input.ptr(), N, D);
  g.bias = TensorT<T>({M});
  for (std::int64_t m = 0; m < M; ++m) {
    double acc = 0.0;
    for (std::int64_t n = 0; n < N; ++n) acc += static_cast<double>(grad_out.at2(n, m));
    g.bias[m] = static_cast<T>(acc);
  }
  check_finite(g.input, "linear_backward");
  check_finite(g.weights, "linear_backward");
  return g;
}

template <class T>
struct DropoutOut {
  TensorT<T> output;
  TensorT<T> mask;  // 0 for dropped entries, 1/(1-rate) for survivors
};

/// Inverted dropout: scaling happens at train time so eval is the identity.
template <class T>
DropoutOut<T> dropout_forward(const TensorT<T>& x, double rate, Rng& rng, bool train_mode) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
  DropoutOut<T> res;
  if (!train_mode || rate == 0.0) {
    res.output = x;
    res.mask = TensorT<T>::full(x.shape, T{1});
    return res;
  }
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  res.output = TensorT<T>(x.shape);
  res.mask = TensorT<T>(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    if (rng.uniform() < rate) {
      res.mask.data[i] = T{0};
      res.output.data[i] = T{0};
    } else {
      res.mask.data[i] = scale;
      res.output.data[i] = x.data[i] * scale;
    }
  }
  check_finite(res.output, "dropout_forward");
  return res;
}

template <class T>
TensorT<T> dropout_backward(const TensorT<T>& grad_out, const TensorT<T>& mask) {
  if (grad_out.shape != mask.shape) throw ShapeError("dropout_backward: shape mismatch");
  TensorT<T> g = grad_out;
  for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] *= mask.data[i];
  return g;
}

template <class T>
struct XentOut {
  double loss;
  TensorT<T> grad_logits;
};

/// Mean cross-entropy over the batch with max-subtraction stabilization.
/// grad_logits = (softmax - onehot) / N.
template <class T>
XentOut<T> softmax_cross_entropy(const TensorT<T>& logits, const std::vector<std::int32_t>& labels) {
  if (logits.rank() != 2) throw ShapeError("softmax_cross_entropy: logits must be 2-d");
  const std::int64_t N = logits.dim(0), C = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != N)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(N) + " rows");
  XentOut<T> res;
  res.grad_logits = TensorT<T>({N, C});
  double loss = 0.0;
  for (std::int64_t n = 0; n < N; ++n) {
    const std::int32_t y = labels[static_cast<std::size_t>(n)];
    if (y < 0 || y >= C)
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(y) + " out of range [0, " +
                       std::to_string(C) + ")");
    const T* row = logits.ptr() + n * C;
    double mx = static_cast<double>(row[0]);
    for (std::int64_t c = 1; c < C; ++c) mx = std::max(mx, static_cast<double>(row[c]));
    double se = 0.0;
    for (std::int64_t c = 0; c < C; ++c) se += std::exp(static_cast<double>(row[c]) - mx);
    loss += -(static_cast<double>(row[y]) - mx - std::log(se));
    for (std::int64_t c = 0; c < C; ++c) {
      double p = std::exp(static_cast<double>(row[c]) - mx) / se;
      if (c == y) p -= 1.0;
      res.grad_logits.at2(n, c) = static_cast<T>(p / static_cast<double>(N));
    }
  }
  res.loss = loss / static_cast<double>(N);
  if (!std::isfinite(res.loss)) throw NumericError("softmax_cross_entropy produced a non-finite loss");
  return res;
}

/// Uniform Xavier/Glorot init on [-sqrt(6/(fan_in+fan_out)), +...].
/// Fans: dense [M,D] -> fan_in=D, fan_out=M; conv [K,C,kh,kw] ->
/// fan_in=C*kh*kw, fan_out=K*kh*kw.
template <class T>
TensorT<T> xavier_init(const Shape& shape, Rng& rng) {
  std::int64_t fan_in, fan_out;
  if (shape.size() == 2) {
    fan_in = shape[1];
    fan_out = shape[0];
  } else if (shape.size() == 4) {
    fan_in = shape[1] * shape[2] * shape[3];
    fan_out = shape[0] * shape[2] * shape[3];
  } else {
    throw ShapeError("xavier_init: expected 2-d or 4-d shape, got " + shape_str(shape));
  }
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  TensorT<T> t(shape);
  for (T& v : t.data) v = static_cast<T>(rng.uniform(-a, a));
  return t;
}

}  // namespace hebb

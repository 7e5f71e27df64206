#pragma once
// Nonlinear Hebbian-PCA: the local update rule for dense and convolutional
// layers, the representation-error objective it descends, and the
// unsupervised pre-training driver. With a linear activation the rule reduces
// to Oja's rule (one neuron) and Sanger's rule (many neurons).

#include <cstdio>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hebb/network.hpp"
#include "hebb/ops.hpp"
#include "hebb/tensor.hpp"

namespace hebb {

enum class Activation { linear, relu };

template <class T>
inline T activate(Activation a, T y) {
  return a == Activation::relu ? (y > T{0} ? y : T{0}) : y;
}

struct HpcaConfig {
  double eta = 1e-3;
  Activation activation = Activation::relu;
  enum class Aggregation { mean };
  Aggregation batch_aggregation = Aggregation::mean;
  int epochs = 20;
  bool train_biases = false;  // the rule has no bias term; true is rejected
  int batch_size = 64;
  bool include_dense = true;  // pre-train internal dense layers, not only conv
  // The discrete iteration is stable only while eta * E[f(y_i)^2] stays well
  // below 1 (the rule's decay term overshoots past it). Rows whose step
  // exceeds this cap are scaled down, direction unchanged; <= 0 disables.
  double max_step = 0.5;
};

struct HpcaLayerStats {
  std::vector<double> representation_error;       // one entry per epoch
  std::vector<std::vector<double>> weight_norms;  // per epoch, per neuron L2
};

/// Unscaled update for one input vector: row i is
///   f(y_i) * (x - sum_{j<=i} f(y_j) w_j),      y_i = w_i . x
/// computed with a running sum so the cost is O(M*D). The inner sum includes
/// neuron i itself; rows therefore depend only on rows with index <= i.
template <class T>
TensorT<T> hpca_delta(const TensorT<T>& weights, const TensorT<T>& x, Activation act) {
  if (weights.rank() != 2) throw ShapeError("hpca_delta: weights must be 2-d");
  const std::int64_t M = weights.dim(0), D = weights.dim(1);
  if (x.rank() != 1 || x.dim(0) != D)
    throw ShapeError("hpca_delta: input " + shape_str(x.shape) + " incompatible with weights " +
                     shape_str(weights.shape));
  TensorT<T> delta({M, D});
  std::vector<T> cum(static_cast<std::size_t>(D), T{0});
  for (std::int64_t i = 0; i < M; ++i) {
    const T* w = weights.ptr() + i * D;
    double y = 0.0;
    for (std::int64_t d = 0; d < D; ++d) y += static_cast<double>(w[d]) * static_cast<double>(x[d]);
    const T fy = activate(act, static_cast<T>(y));
    T* out = delta.ptr() + i * D;
    for (std::int64_t d = 0; d < D; ++d) {
      cum[static_cast<std::size_t>(d)] += fy * w[d];
      out[d] = fy * (x[d] - cum[static_cast<std::size_t>(d)]);
    }
  }
  check_finite(delta, "hpca_delta");
  return delta;
}

template <class T>
struct HpcaBatchOut {
  TensorT<T> mean_delta;  // [M,D], mean of per-sample deltas at the incoming weights
  double rep_error;       // batch mean of 0.5 * ||x - sum_j f(y_j) w_j||^2
  std::vector<double> mean_sq_activation;  // per neuron, mean of f(y_i)^2
};

/// Batch form of the rule. With F = f(X W^T) the mean delta is
///   (F^T X)/P - lowertri(F^T F)/P * W
/// which equals the arithmetic mean of hpca_delta over the P rows of X, and
/// reuses the same products for the full-layer representation error.
template <class T>
HpcaBatchOut<T> hpca_batch(const TensorT<T>& weights, const TensorT<T>& batch, Activation act) {
  if (weights.rank() != 2 || batch.rank() != 2 || batch.dim(1) != weights.dim(1))
    throw ShapeError("hpca_batch: batch " + shape_str(batch.shape) + " incompatible with weights " +
                     shape_str(weights.shape));
  const std::int64_t M = weights.dim(0), D = weights.dim(1), P = batch.dim(0);
  if (P == 0) throw ShapeError("hpca_batch: empty batch");

  CMapM<T> X(batch.ptr(), P, D);
  CMapM<T> W(weights.ptr(), M, D);
  MatRM<T> F = X * W.transpose();  // P x M
  for (std::int64_t i = 0; i < F.size(); ++i) F.data()[i] = activate(act, F.data()[i]);

  MatRM<T> FtX = F.transpose() * X;  // M x D
  MatRM<T> C = F.transpose() * F;    // M x M

  HpcaBatchOut<T> out;
  out.mean_delta = TensorT<T>({M, D});
  const T inv_p = static_cast<T>(1.0 / static_cast<double>(P));
  MatRM<T> lower = C.template triangularView<Eigen::Lower>();
  MapM<T> delta(out.mean_delta.ptr(), M, D);
  delta = (FtX - lower * W) * inv_p;
  check_finite(out.mean_delta, "hpca_batch");

  // ||x - W^T f||^2 summed over rows = sum||x||^2 - 2<W, F^T X> + <W W^T, F^T F>
  double xx = 0.0;
  for (std::int64_t i = 0; i < X.size(); ++i)
    xx += static_cast<double>(X.data()[i]) * static_cast<double>(X.data()[i]);
  double wfx = 0.0;
  for (std::int64_t i = 0; i < FtX.size(); ++i)
    wfx += static_cast<double>(FtX.data()[i]) * static_cast<double>(W.data()[i]);
  MatRM<T> G = W * W.transpose();  // M x M
  double gc = 0.0;
  for (std::int64_t i = 0; i < G.size(); ++i)
    gc += static_cast<double>(G.data()[i]) * static_cast<double>(C.data()[i]);
  out.rep_error = (xx - 2.0 * wfx + gc) / (2.0 * static_cast<double>(P));

  out.mean_sq_activation.resize(static_cast<std::size_t>(M));
  for (std::int64_t i = 0; i < M; ++i)
    out.mean_sq_activation[static_cast<std::size_t>(i)] =
        static_cast<double>(C(i, i)) / static_cast<double>(P);
  return out;
}

/// Applies weights += eta * delta row-wise, scaling any row whose discrete
/// step eta * E[f(y_i)^2] exceeds cfg.max_step back into the stable region.
template <class T>
void hpca_apply_update(TensorT<T>& weights, const HpcaBatchOut<T>& batch, const HpcaConfig& cfg) {
  const std::int64_t M = weights.dim(0);
  const std::int64_t D = weights.numel() / M;
  for (std::int64_t i = 0; i < M; ++i) {
    double eta = cfg.eta;
    const double step = cfg.eta * batch.mean_sq_activation[static_cast<std::size_t>(i)];
    if (cfg.max_step > 0.0 && step > cfg.max_step) eta *= cfg.max_step / step;
    const T feta = static_cast<T>(eta);
    for (std::int64_t d = 0; d < D; ++d)
      weights.ptr()[i * D + d] += feta * batch.mean_delta.ptr()[i * D + d];
  }
}

/// Batch mean of 0.5 * ||x - sum_{j=1..M} f(y_j) w_j||^2, the full-layer
/// reconstruction objective. Direct evaluation, independent of hpca_batch's
/// expanded form.
template <class T>
double representation_error(const TensorT<T>& weights, const TensorT<T>& batch, Activation act) {
  if (weights.rank() != 2 || batch.rank() != 2 || batch.dim(1) != weights.dim(1))
    throw ShapeError("representation_error: batch " + shape_str(batch.shape) +
                     " incompatible with weights " + shape_str(weights.shape));
  const std::int64_t M = weights.dim(0), D = weights.dim(1), P = batch.dim(0);
  if (P == 0) return 0.0;
  CMapM<T> X(batch.ptr(), P, D);
  CMapM<T> W(weights.ptr(), M, D);
  MatRM<T> F = X * W.transpose();
  for (std::int64_t i = 0; i < F.size(); ++i) F.data()[i] = activate(act, F.data()[i]);
  MatRM<T> R = X - F * W;
  double acc = 0.0;
  for (std::int64_t i = 0; i < R.size(); ++i)
    acc += static_cast<double>(R.data()[i]) * static_cast<double>(R.data()[i]);
  return acc / (2.0 * static_cast<double>(P));
}

inline void hpca_check_trainable(const HpcaConfig& cfg) {
  if (cfg.eta <= 0.0) throw ConfigError("hpca: eta must be positive");
  if (cfg.train_biases)
    throw ConfigError("hpca: the update rule defines no bias term; train_biases must be false");
}

/// weights += eta * mean over rows of hpca_delta. Biases untouched.
/// Returns the batch representation error at the incoming weights.
template <class T>
double hpca_update_dense(LayerStateT<T>& layer, const TensorT<T>& batch, const HpcaConfig& cfg) {
  hpca_check_trainable(cfg);
  if (layer.spec.kind != LayerKind::dense)
    throw ConfigError("hpca_update_dense: layer is not dense");
  auto res = hpca_batch(layer.weights, batch, cfg.activation);
  hpca_apply_update(layer.weights, res, cfg);
  check_finite(layer.weights, "hpca_update_dense");
  return res.rep_error;
}

/// Patch-wise rule for conv layers: every im2col receptive-field patch is one
/// input vector, flattened kernels are the neuron weights, and the update is
/// the mean over all N*H'*W' patches in the batch.
template <class T>
double hpca_update_conv(LayerStateT<T>& layer, const TensorT<T>& input_batch, const HpcaConfig& cfg) {
  hpca_check_trainable(cfg);
  if (layer.spec.kind != LayerKind::conv)
    throw ConfigError("hpca_update_conv: layer is not convolutional");
  const std::int64_t K = layer.weights.dim(0);
  const std::int64_t D = layer.weights.dim(1) * layer.weights.dim(2) * layer.weights.dim(3);
  TensorT<T> patches = im2col(input_batch, layer.weights.dim(2), layer.weights.dim(3),
                              layer.spec.stride, layer.spec.padding);
  TensorT<T> flat = layer.weights.reshaped({K, D});
  auto res = hpca_batch(flat, patches, cfg.activation);
  hpca_apply_update(layer.weights, res, cfg);
  check_finite(layer.weights, "hpca_update_conv");
  return res.rep_error;
}

/// Layers the pre-training phase updates: every conv layer and, when enabled,
/// every dense layer except the final classifier.
template <class T>
std::vector<std::size_t> hpca_trainable_layers(const NetworkT<T>& net, bool include_dense) {
  std::size_t last_dense = net.layers.size();
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    if (net.layers[i].spec.kind == LayerKind::dense) last_dense = i;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (net.layers[i].spec.kind == LayerKind::conv) out.push_back(i);
    if (net.layers[i].spec.kind == LayerKind::dense && i != last_dense && include_dense)
      out.push_back(i);
  }
  return out;
}

using HpcaEpochHook =
    std::function<void(int epoch, std::size_t layer_idx, double rep_error)>;

/// Unsupervised pre-training. Labels never enter this routine and no backward
/// pass runs: each epoch shuffles the images, propagates every mini-batch
/// forward (dropout inactive), and gives each trainable internal layer its
/// HPCA update from its own cached input, all from the same pass. Per-layer
/// epoch representation errors are patch/sample means over the whole epoch.
/// Warns on stderr if a layer's error trend over the run is increasing.
template <class T>
std::vector<HpcaLayerStats> pretrain(NetworkT<T>& net, const TensorT<T>& images,
                                     const HpcaConfig& cfg, Rng& rng,
                                     const HpcaEpochHook& hook = nullptr) {
  hpca_check_trainable(cfg);
  if (images.rank() != 4) throw ShapeError("pretrain: images must be [N,C,H,W]");
  const std::int64_t n = images.dim(0);
  if (n == 0) throw ConfigError("pretrain: empty dataset");
  if (cfg.epochs < 0) throw ConfigError("pretrain: negative epoch count");
  if (cfg.batch_size < 1) throw ConfigError("pretrain: batch_size must be >= 1");

  const auto trainable = hpca_trainable_layers(net, cfg.include_dense);
  std::vector<HpcaLayerStats> stats(net.layers.size());
  const std::int64_t sample = images.numel() / n;

  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);
    std::vector<double> err_sum(net.layers.size(), 0.0);
    std::vector<double> err_count(net.layers.size(), 0.0);
    for (std::int64_t start = 0; start < n; start += cfg.batch_size) {
      const std::int64_t bn = std::min<std::int64_t>(cfg.batch_size, n - start);
      TensorT<T> batch({bn, images.dim(1), images.dim(2), images.dim(3)});
      for (std::int64_t b = 0; b < bn; ++b)
        std::copy_n(images.ptr() + order[static_cast<std::size_t>(start + b)] * sample, sample,
                    batch.ptr() + b * sample);
      auto trace = forward(net, batch, /*train_mode=*/false);
      for (std::size_t li : trainable) {
        const TensorT<T>& in = trace.acts[li];
        double patches;
        double err;
        if (net.layers[li].spec.kind == LayerKind::conv) {
          const auto& s = net.layers[li].spec;
          patches = static_cast<double>(bn * conv_out_dim(in.dim(2), s.kernel, s.stride, s.padding) *
                                        conv_out_dim(in.dim(3), s.kernel, s.stride, s.padding));
          err = hpca_update_conv(net.layers[li], in, cfg);
        } else {
          patches = static_cast<double>(bn);
          err = hpca_update_dense(net.layers[li], in, cfg);
        }
        err_sum[li] += err * patches;
        err_count[li] += patches;
      }
    }
    for (std::size_t li : trainable) {
      const double epoch_err = err_sum[li] / err_count[li];
      stats[li].representation_error.push_back(epoch_err);
      const auto& w = net.layers[li].weights;
      const std::int64_t M = w.dim(0), D = w.numel() / M;
      std::vector<double> norms(static_cast<std::size_t>(M));
      for (std::int64_t i = 0; i < M; ++i) {
        double acc = 0.0;
        for (std::int64_t d = 0; d < D; ++d) {
          const double v = static_cast<double>(w.ptr()[i * D + d]);
          acc += v * v;
        }
        norms[static_cast<std::size_t>(i)] = std::sqrt(acc);
      }
      stats[li].weight_norms.push_back(std::move(norms));
      if (hook) hook(epoch, li, epoch_err);
    }
  }

  for (std::size_t li : trainable) {
    const auto& e = stats[li].representation_error;
    if (e.size() >= 2 && e.back() > e.front() + 1e-12)
      std::fprintf(stderr,
                   "warning: hpca representation error increased over the run for layer %zu "
                   "(%g -> %g)\n",
                   li, e.front(), e.back());
  }
  return stats;
}

}  // namespace hebb

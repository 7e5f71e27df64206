#pragma once
// Layer specs, network assembly, forward/backward over the whole stack, and
// the layer-cut machinery used for layerwise evaluation and feature
// extraction.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hebb/ops.hpp"
#include "hebb/tensor.hpp"

namespace hebb {

enum class LayerKind { conv, maxpool, relu, flatten, dense, dropout };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::dropout: return "dropout";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int units = 0;    // conv: output channels; dense: output units
  int kernel = 0;   // conv/maxpool window
  int stride = 1;
  int padding = 0;  // conv only (zero padding)
  double rate = 0.0;  // dropout only

  static LayerSpec conv(int out_channels, int kernel, int stride = 1, int padding = 0) {
    return {LayerKind::conv, out_channels, kernel, stride, padding, 0.0};
  }
  static LayerSpec maxpool(int kernel, int stride) {
    return {LayerKind::maxpool, 0, kernel, stride, 0, 0.0};
  }
  static LayerSpec relu() { return {LayerKind::relu, 0, 0, 1, 0, 0.0}; }
  static LayerSpec flatten() { return {LayerKind::flatten, 0, 0, 1, 0, 0.0}; }
  static LayerSpec dense(int units) { return {LayerKind::dense, units, 0, 1, 0, 0.0}; }
  static LayerSpec dropout(double rate) { return {LayerKind::dropout, 0, 0, 1, 0, rate}; }

  bool has_params() const { return kind == LayerKind::conv || kind == LayerKind::dense; }
  bool operator==(const LayerSpec&) const = default;
};

/// Declarative architecture: an ordered layer list plus the indices of the
/// layers whose outputs are the "deep layer" boundaries (cut points).
struct NetworkConfig {
  std::vector<LayerSpec> layers;
  std::array<int, 3> input_shape{3, 32, 32};
  int num_classes = 10;
  std::vector<int> cut_points;

  bool operator==(const NetworkConfig&) const = default;
};

/// Per-sample output shape of one layer given its input shape.
inline Shape layer_output_shape(const LayerSpec& s, const Shape& in) {
  switch (s.kind) {
    case LayerKind::conv: {
      if (in.size() != 3) throw ConfigError("conv layer requires a CxHxW input");
      if (s.kernel > in[1] + 2 * s.padding || s.kernel > in[2] + 2 * s.padding)
        throw ConfigError("conv kernel larger than padded input " + shape_str(in));
      return {s.units, conv_out_dim(in[1], s.kernel, s.stride, s.padding),
              conv_out_dim(in[2], s.kernel, s.stride, s.padding)};
    }
    case LayerKind::maxpool: {
      if (in.size() != 3) throw ConfigError("maxpool layer requires a CxHxW input");
      if (s.kernel > in[1] || s.kernel > in[2])
        throw ConfigError("maxpool window larger than input " + shape_str(in));
      return {in[0], (in[1] - s.kernel) / s.stride + 1, (in[2] - s.kernel) / s.stride + 1};
    }
    case LayerKind::relu:
    case LayerKind::dropout:
      return in;
    case LayerKind::flatten: {
      if (in.size() < 2) throw ConfigError("flatten requires a multi-axis input");
      return {shape_numel(in)};
    }
    case LayerKind::dense: {
      if (in.size() != 1) throw ConfigError("dense layer requires a flat input, got " + shape_str(in));
      return {static_cast<std::int64_t>(s.units)};
    }
  }
  throw ConfigError("unknown layer kind");
}

/// Per-sample shapes after each layer; index 0 is the input shape.
/// Throws ConfigError if the chain is inconsistent.
inline std::vector<Shape> propagate_shapes(const NetworkConfig& cfg) {
  std::vector<Shape> shapes;
  shapes.push_back({cfg.input_shape[0], cfg.input_shape[1], cfg.input_shape[2]});
  for (const auto& l : cfg.layers) shapes.push_back(layer_output_shape(l, shapes.back()));
  return shapes;
}

inline void validate_config(const NetworkConfig& cfg) {
  if (cfg.layers.empty()) throw ConfigError("network has no layers");
  auto shapes = propagate_shapes(cfg);
  if (cfg.layers.back().kind != LayerKind::dense)
    throw ConfigError("final layer must be a dense classifier");
  if (cfg.layers.back().units != cfg.num_classes)
    throw ConfigError("classifier units " + std::to_string(cfg.layers.back().units) +
                      " != num_classes " + std::to_string(cfg.num_classes));
  if (cfg.cut_points.empty()) throw ConfigError("network needs at least one cut point");
  int prev = -1;
  for (int cp : cfg.cut_points) {
    if (cp <= prev) throw ConfigError("cut points must be strictly increasing");
    if (cp < 0 || cp + 1 >= static_cast<int>(cfg.layers.size()))
      throw ConfigError("cut point " + std::to_string(cp) + " out of range");
    prev = cp;
  }
}

/// Flattened feature width at cut point k (1-based).
inline std::int64_t feature_dim(const NetworkConfig& cfg, int layer_k) {
  if (layer_k < 1 || layer_k > static_cast<int>(cfg.cut_points.size()))
    throw ConfigError("layer index " + std::to_string(layer_k) + " outside 1.." +
                      std::to_string(cfg.cut_points.size()));
  auto shapes = propagate_shapes(cfg);
  return shape_numel(shapes[static_cast<std::size_t>(cfg.cut_points[layer_k - 1]) + 1]);
}

template <class T>
struct LayerStateT {
  LayerSpec spec;
  TensorT<T> weights;  // conv: [K,C,kh,kw]; dense: [M,D]; empty otherwise
  TensorT<T> bias;     // conv/dense: [K]/[M]
};

template <class T>
struct NetworkT {
  NetworkConfig config;
  std::vector<LayerStateT<T>> layers;
};

using LayerState = LayerStateT<float>;
using Network = NetworkT<float>;

/// Xavier weights, zero biases. The rng is consumed by parameterized layers
/// in layer order, so a fixed seed yields identical parameters.
template <class T>
NetworkT<T> build_network(const NetworkConfig& cfg, Rng& rng) {
  validate_config(cfg);
  NetworkT<T> net;
  net.config = cfg;
  auto shapes = propagate_shapes(cfg);
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    LayerStateT<T> st;
    st.spec = cfg.layers[i];
    const Shape& in = shapes[i];
    if (st.spec.kind == LayerKind::conv) {
      st.weights = xavier_init<T>({st.spec.units, in[0], st.spec.kernel, st.spec.kernel}, rng);
      st.bias = TensorT<T>({st.spec.units});
    } else if (st.spec.kind == LayerKind::dense) {
      st.weights = xavier_init<T>({st.spec.units, in[0]}, rng);
      st.bias = TensorT<T>({st.spec.units});
    }
    net.layers.push_back(std::move(st));
  }
  return net;
}

template <class T>
struct ForwardTraceT {
  // acts[i] is the input of layer i; acts.back() is the logits.
  std::vector<TensorT<T>> acts;
  std::vector<TensorT<T>> dropout_mask;           // empty where unused
  std::vector<std::vector<std::int64_t>> argmax;  // empty where unused
  const TensorT<T>& logits() const { return acts.back(); }
};

using ForwardTrace = ForwardTraceT<float>;

template <class T>
TensorT<T> apply_layer(const LayerStateT<T>& st, const TensorT<T>& x, bool train_mode, Rng* rng,
                       TensorT<T>* mask_out, std::vector<std::int64_t>* argmax_out) {
  switch (st.spec.kind) {
    case LayerKind::conv:
      return conv2d_forward(x, st.weights, st.bias, st.spec.stride, st.spec.padding);
    case LayerKind::maxpool: {
      auto res = maxpool2d_forward(x, st.spec.kernel, st.spec.stride);
      if (argmax_out) *argmax_out = std::move(res.argmax);
      return std::move(res.output);
    }
    case LayerKind::relu:
      return relu_forward(x);
    case LayerKind::flatten:
      return x.reshaped({x.dim(0), x.numel() / x.dim(0)});
    case LayerKind::dense:
      return linear_forward(x, st.weights, st.bias);
    case LayerKind::dropout: {
      if (train_mode && st.spec.rate > 0.0 && !rng)
        throw ConfigError("dropout in train mode requires an rng");
      if (!train_mode || st.spec.rate == 0.0) return x;
      auto res = dropout_forward(x, st.spec.rate, *rng, true);
      if (mask_out) *mask_out = std::move(res.mask);
      return std::move(res.output);
    }
  }
  throw ConfigError("unknown layer kind");
}

/// Runs the whole stack; deterministic in eval mode (dropout inactive).
template <class T>
ForwardTraceT<T> forward(const NetworkT<T>& net, const TensorT<T>& batch, bool train_mode,
                         Rng* rng = nullptr) {
  if (batch.rank() != 4 || batch.dim(1) != net.config.input_shape[0] ||
      batch.dim(2) != net.config.input_shape[1] || batch.dim(3) != net.config.input_shape[2])
    throw ShapeError("forward: batch " + shape_str(batch.shape) + " does not match input shape [N," +
                     std::to_string(net.config.input_shape[0]) + "," +
                     std::to_string(net.config.input_shape[1]) + "," +
                     std::to_string(net.config.input_shape[2]) + "]");
  ForwardTraceT<T> trace;
  trace.acts.reserve(net.layers.size() + 1);
  trace.dropout_mask.resize(net.layers.size());
  trace.argmax.resize(net.layers.size());
  trace.acts.push_back(batch);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    trace.acts.push_back(apply_layer(net.layers[i], trace.acts.back(), train_mode, rng,
                                     &trace.dropout_mask[i], &trace.argmax[i]));
  }
  return trace;
}

template <class T>
struct GradientsT {
  std::vector<TensorT<T>> weights, bias;  // aligned with layers; empty where no params
};

using Gradients = GradientsT<float>;

template <class T>
GradientsT<T> backward(const NetworkT<T>& net, const ForwardTraceT<T>& trace,
                       const TensorT<T>& grad_logits) {
  if (trace.acts.size() != net.layers.size() + 1)
    throw ShapeError("backward: trace does not match network depth");
  GradientsT<T> grads;
  grads.weights.resize(net.layers.size());
  grads.bias.resize(net.layers.size());
  TensorT<T> g = grad_logits;
  for (std::size_t ii = net.layers.size(); ii-- > 0;) {
    const auto& st = net.layers[ii];
    const auto& x = trace.acts[ii];
    switch (st.spec.kind) {
      case LayerKind::conv: {
        auto cg = conv2d_backward(g, x, st.weights, st.spec.stride, st.spec.padding);
        grads.weights[ii] = std::move(cg.weights);
        grads.bias[ii] = std::move(cg.bias);
        g = std::move(cg.input);
        break;
      }
      case LayerKind::maxpool:
        g = maxpool2d_backward(g, trace.argmax[ii], x.shape);
        break;
      case LayerKind::relu:
        g = relu_backward(g, x);
        break;
      case LayerKind::flatten:
        g = g.reshaped(x.shape);
        break;
      case LayerKind::dense: {
        auto lg = linear_backward(g, x, st.weights);
        grads.weights[ii] = std::move(lg.weights);
        grads.bias[ii] = std::move(lg.bias);
        g = std::move(lg.input);
        break;
      }
      case LayerKind::dropout:
        if (!trace.dropout_mask[ii].empty()) g = dropout_backward(g, trace.dropout_mask[ii]);
        break;
    }
  }
  return grads;
}

/// Deep layers 1..k of `src` (parameters copied) plus a fresh Xavier dense
/// classifier on the flattened cut output. When the source applies dropout
/// before its dense layers, the new head gets the same rate. Does not mutate
/// the source.
template <class T>
NetworkT<T> cut_at(const NetworkT<T>& src, int layer_k, int num_classes, Rng& rng) {
  const int n_cuts = static_cast<int>(src.config.cut_points.size());
  if (layer_k < 1 || layer_k > n_cuts)
    throw ConfigError("cut layer " + std::to_string(layer_k) + " outside 1.." + std::to_string(n_cuts));
  const int last = src.config.cut_points[static_cast<std::size_t>(layer_k - 1)];

  double head_dropout = 0.0;
  for (const auto& l : src.config.layers)
    if (l.kind == LayerKind::dropout) head_dropout = l.rate;

  NetworkConfig cfg;
  cfg.input_shape = src.config.input_shape;
  cfg.num_classes = num_classes;
  cfg.layers.assign(src.config.layers.begin(), src.config.layers.begin() + last + 1);
  cfg.cut_points.assign(src.config.cut_points.begin(),
                        src.config.cut_points.begin() + layer_k);
  auto shapes = propagate_shapes(cfg);
  if (shapes.back().size() > 1) cfg.layers.push_back(LayerSpec::flatten());
  if (head_dropout > 0.0) cfg.layers.push_back(LayerSpec::dropout(head_dropout));
  cfg.layers.push_back(LayerSpec::dense(num_classes));

  NetworkT<T> net;
  net.config = cfg;
  validate_config(cfg);
  shapes = propagate_shapes(cfg);
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    LayerStateT<T> st;
    st.spec = cfg.layers[i];
    if (i <= static_cast<std::size_t>(last)) {
      st.weights = src.layers[i].weights;
      st.bias = src.layers[i].bias;
    } else if (st.spec.kind == LayerKind::dense) {
      st.weights = xavier_init<T>({st.spec.units, shapes[i][0]}, rng);
      st.bias = TensorT<T>({st.spec.units});
    }
    net.layers.push_back(std::move(st));
  }
  return net;
}

/// Flattened activations at cut point k, eval mode (dropout-free),
/// post-nonlinearity/post-pooling. Each sample runs through the stack on its
/// own so a feature vector never depends on what else shared its batch.
template <class T>
TensorT<T> extract_features(const NetworkT<T>& net, const TensorT<T>& batch, int layer_k) {
  const int n_cuts = static_cast<int>(net.config.cut_points.size());
  if (layer_k < 1 || layer_k > n_cuts)
    throw ConfigError("feature layer " + std::to_string(layer_k) + " outside 1.." +
                      std::to_string(n_cuts));
  const int last = net.config.cut_points[static_cast<std::size_t>(layer_k - 1)];
  const std::int64_t n = batch.dim(0);
  const std::int64_t chw = batch.numel() / n;
  TensorT<T> out;
  for (std::int64_t s = 0; s < n; ++s) {
    TensorT<T> x({1, batch.dim(1), batch.dim(2), batch.dim(3)});
    std::copy_n(batch.ptr() + s * chw, chw, x.ptr());
    for (int i = 0; i <= last; ++i)
      x = apply_layer<T>(net.layers[static_cast<std::size_t>(i)], x, /*train_mode=*/false, nullptr,
                         nullptr, nullptr);
    if (out.empty()) out = TensorT<T>({n, x.numel()});
    if (x.numel() != out.dim(1)) throw ShapeError("extract_features: inconsistent feature width");
    std::copy_n(x.ptr(), x.numel(), out.ptr() + s * out.dim(1));
  }
  return out;
}

/// The six-layer default: four conv blocks plus a 300-unit dense block
/// ("deep layers" 1-5) and a final linear classifier, for 3x32x32 inputs.
inline NetworkConfig default_network_config(int num_classes, double dropout_rate) {
  NetworkConfig cfg;
  cfg.input_shape = {3, 32, 32};
  cfg.num_classes = num_classes;
  cfg.layers = {
      LayerSpec::conv(96, 5, 1, 2),  LayerSpec::relu(), LayerSpec::maxpool(2, 2),   // deep layer 1
      LayerSpec::conv(128, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool(2, 2),   // deep layer 2
      LayerSpec::conv(192, 3, 1, 1), LayerSpec::relu(),                             // deep layer 3
      LayerSpec::conv(256, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool(2, 2),   // deep layer 4
      LayerSpec::flatten(),          LayerSpec::dropout(dropout_rate),
      LayerSpec::dense(300),         LayerSpec::relu(),                             // deep layer 5
      LayerSpec::dropout(dropout_rate), LayerSpec::dense(num_classes),
  };
  cfg.cut_points = {2, 5, 7, 10, 14};
  return cfg;
}

/// Same topology at a fraction of the width, for smoke runs and CI.
inline NetworkConfig smoke_network_config(int num_classes, double dropout_rate) {
  NetworkConfig cfg;
  cfg.input_shape = {3, 32, 32};
  cfg.num_classes = num_classes;
  cfg.layers = {
      LayerSpec::conv(8, 5, 1, 2),  LayerSpec::relu(), LayerSpec::maxpool(2, 2),
      LayerSpec::conv(12, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool(2, 2),
      LayerSpec::conv(16, 3, 1, 1), LayerSpec::relu(),
      LayerSpec::conv(16, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool(2, 2),
      LayerSpec::flatten(),         LayerSpec::dropout(dropout_rate),
      LayerSpec::dense(48),         LayerSpec::relu(),
      LayerSpec::dropout(dropout_rate), LayerSpec::dense(num_classes),
  };
  cfg.cut_points = {2, 5, 7, 10, 14};
  return cfg;
}

}  // namespace hebb

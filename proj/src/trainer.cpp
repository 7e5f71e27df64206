#include "hebb/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hebb {

double lr_at(const SgdConfig& cfg, int epoch) {
  if (epoch < 1) throw ConfigError("lr_at: epochs are 1-based");
  if (epoch <= 10) return cfg.lr0;
  return cfg.lr0 * std::pow(2.0, -std::floor(static_cast<double>(epoch - 10) / 2.0));
}

void sgd_step(Tensor& params, const Tensor& grads, Tensor& velocity, double lr,
              const SgdConfig& cfg, bool apply_decay) {
  if (params.shape != grads.shape || params.shape != velocity.shape)
    throw ShapeError("sgd_step: params/grads/velocity shape mismatch");
  const float m = static_cast<float>(cfg.momentum);
  const float flr = static_cast<float>(lr);
  const float wd = apply_decay ? static_cast<float>(cfg.weight_decay) : 0.0f;
  for (std::size_t i = 0; i < params.data.size(); ++i) {
    const float g = grads.data[i] + wd * params.data[i];
    velocity.data[i] = m * velocity.data[i] - flr * g;
    params.data[i] += cfg.nesterov ? m * velocity.data[i] - flr * g : velocity.data[i];
  }
  check_finite(params, "sgd_step");
}

DatasetView::DatasetView(const Dataset& ds) : ds_(&ds) {
  indices_.resize(static_cast<std::size_t>(ds.size()));
  std::iota(indices_.begin(), indices_.end(), 0);
}

Shape DatasetView::sample_shape() const {
  return {ds_->images.dim(1), ds_->images.dim(2), ds_->images.dim(3)};
}

void DatasetView::fill(std::int64_t i, float* image_out, std::int32_t& label_out) const {
  const std::int64_t src = indices_.at(static_cast<std::size_t>(i));
  const std::int64_t chw = ds_->images.numel() / ds_->images.dim(0);
  std::copy_n(ds_->images.ptr() + src * chw, chw, image_out);
  label_out = ds_->labels.at(static_cast<std::size_t>(src));
}

namespace {

struct Batch {
  Tensor images;
  std::vector<std::int32_t> labels;
};

Batch gather_batch(const BatchSource& src, const std::vector<std::int64_t>& order,
                   std::int64_t start, std::int64_t count) {
  const Shape s = src.sample_shape();
  Batch b;
  b.images = Tensor({count, s[0], s[1], s[2]});
  b.labels.resize(static_cast<std::size_t>(count));
  const std::int64_t chw = s[0] * s[1] * s[2];
  for (std::int64_t i = 0; i < count; ++i)
    src.fill(order[static_cast<std::size_t>(start + i)], b.images.ptr() + i * chw,
             b.labels[static_cast<std::size_t>(i)]);
  return b;
}

}  // namespace

TrainState init_train_state(const Network& net, std::uint64_t seed) {
  TrainState st;
  st.net = net;
  st.rng = Rng(seed);
  st.vel_w.resize(net.layers.size());
  st.vel_b.resize(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (net.layers[i].spec.has_params()) {
      st.vel_w[i] = Tensor::zeros(net.layers[i].weights.shape);
      st.vel_b[i] = Tensor::zeros(net.layers[i].bias.shape);
    }
  }
  return st;
}

void train_epochs(TrainState& state, const BatchSource& labeled, const BatchSource& validation,
                  const SgdConfig& cfg, int until_epoch, const EpochHook& hook) {
  const std::int64_t n = labeled.size();
  if (n == 0) throw ConfigError("train_epochs: empty labeled split");
  if (cfg.batch_size < 1) throw ConfigError("train_epochs: batch_size must be >= 1");

  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  for (int epoch = state.epoch + 1; epoch <= until_epoch; ++epoch) {
    const double lr = lr_at(cfg, epoch);
    std::iota(order.begin(), order.end(), 0);
    state.rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::int64_t start = 0; start < n; start += cfg.batch_size) {
      const std::int64_t bn = std::min<std::int64_t>(cfg.batch_size, n - start);
      Batch batch = gather_batch(labeled, order, start, bn);
      auto trace = forward(state.net, batch.images, /*train_mode=*/true, &state.rng);
      auto xent = softmax_cross_entropy(trace.logits(), batch.labels);
      loss_sum += xent.loss * static_cast<double>(bn);
      auto grads = backward(state.net, trace, xent.grad_logits);
      for (std::size_t i = 0; i < state.net.layers.size(); ++i) {
        if (!state.net.layers[i].spec.has_params()) continue;
        sgd_step(state.net.layers[i].weights, grads.weights[i], state.vel_w[i], lr, cfg,
                 /*apply_decay=*/true);
        sgd_step(state.net.layers[i].bias, grads.bias[i], state.vel_b[i], lr, cfg,
                 /*apply_decay=*/false);
      }
    }

    const double acc = classify_accuracy(state.net, validation, cfg.batch_size);
    state.report.train_loss.push_back(loss_sum / static_cast<double>(n));
    state.report.val_accuracy.push_back(acc);
    state.report.lr.push_back(lr);
    state.epoch = epoch;
    if (acc > state.best_acc) {
      state.best_acc = acc;
      state.best_epoch = epoch;
      state.best = state.net;
    }
    state.report.best_epoch = state.best_epoch;
    state.report.best_checkpoint_id = "epoch-" + std::to_string(state.best_epoch);
    if (hook) hook(state);
  }
}

FinetuneResult finetune(const Network& start, const BatchSource& labeled,
                        const BatchSource& validation, const SgdConfig& cfg, std::uint64_t seed,
                        const EpochHook& hook) {
  if (labeled.size() == 0) throw ConfigError("finetune: empty labeled split");
  TrainState st = init_train_state(start, seed);
  if (cfg.epochs == 0) return {start, st.report};
  train_epochs(st, labeled, validation, cfg, cfg.epochs, hook);
  return {std::move(st.best), std::move(st.report)};
}

double classify_accuracy(const Network& net, const BatchSource& split, int batch_size) {
  const std::int64_t n = split.size();
  if (n == 0) throw ConfigError("classify_accuracy: empty split");
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::int64_t correct = 0;
  for (std::int64_t start = 0; start < n; start += batch_size) {
    const std::int64_t bn = std::min<std::int64_t>(batch_size, n - start);
    Batch batch = gather_batch(split, order, start, bn);
    auto trace = forward(net, batch.images, /*train_mode=*/false);
    const Tensor& logits = trace.logits();
    const std::int64_t c = logits.dim(1);
    for (std::int64_t i = 0; i < bn; ++i) {
      std::int64_t arg = 0;
      for (std::int64_t j = 1; j < c; ++j)
        if (logits.at2(i, j) > logits.at2(i, arg)) arg = j;
      if (arg == batch.labels[static_cast<std::size_t>(i)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

ProtocolResult run_protocol(const Dataset& train, const Dataset& validation,
                            const SplitIndex& regime, PretrainMode mode, int layer_k,
                            const RunSettings& settings, std::uint64_t seed,
                            const HpcaEpochHook& hpca_hook, const EpochHook& train_hook) {
  const ProtocolSeeds seeds(seed);
  Rng init_rng(seeds.init);
  Network net = build_network<float>(settings.netcfg, init_rng);

  ProtocolResult result;
  if (mode == PretrainMode::hpca) {
    Rng pre_rng(seeds.pretrain);
    const Dataset* pool = &train;
    Dataset limited;
    if (settings.hpca_pool_limit > 0 && settings.hpca_pool_limit < train.size()) {
      limited = limit_dataset(train, settings.hpca_pool_limit);
      pool = &limited;
    }
    result.hpca_stats = pretrain(net, pool->images, settings.hpca, pre_rng, hpca_hook);
  }

  Rng head_rng(seeds.head(layer_k));
  Network cut = cut_at(net, layer_k, settings.netcfg.num_classes, head_rng);

  DatasetView labeled(train, regime.labeled);
  DatasetView val(validation);
  auto ft = finetune(cut, labeled, val, settings.sgd, seeds.finetune(layer_k), train_hook);
  result.net = std::move(ft.best);
  result.report = std::move(ft.report);
  return result;
}

}  // namespace hebb

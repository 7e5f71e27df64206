#pragma once
// Supervised SGD fine-tuning: Nesterov momentum with weight decay, the
// 20-epoch learning-rate schedule, early stopping on validation accuracy, and
// the two-phase semi-supervised protocol driver.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hebb/data.hpp"
#include "hebb/hpca.hpp"
#include "hebb/network.hpp"
#include "hebb/tensor.hpp"

namespace hebb {

struct SgdConfig {
  double lr0 = 1e-3;
  double momentum = 0.9;
  bool nesterov = true;
  double dropout_rate = 0.5;   // consumed when building network configs
  double weight_decay = 5e-2;  // 5e-2 cifar10, 1e-2 cifar100
  int epochs = 20;
  int batch_size = 64;
};

/// lr(e) = lr0 for e <= 10, lr0 * 2^-floor((e-10)/2) for 10 < e <= 20, and the
/// same law continued past epoch 20.
double lr_at(const SgdConfig& cfg, int epoch);

/// One step: g = grads (+ weight_decay * params when apply_decay);
/// v = momentum * v - lr * g; params += nesterov ? momentum * v - lr * g : v.
void sgd_step(Tensor& params, const Tensor& grads, Tensor& velocity, double lr,
              const SgdConfig& cfg, bool apply_decay);

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_accuracy;
  std::vector<double> lr;
  int best_epoch = 0;  // 1-based; first occurrence on ties
  std::string best_checkpoint_id;
};

/// Minimal sample access used by the trainer; lets tests interpose counting
/// wrappers and keeps fine-tuning structurally unable to read anything else.
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual std::int64_t size() const = 0;
  virtual int num_classes() const = 0;
  virtual Shape sample_shape() const = 0;  // e.g. {3,32,32}
  virtual void fill(std::int64_t i, float* image_out, std::int32_t& label_out) const = 0;
};

/// View over a dataset restricted to an index list.
class DatasetView : public BatchSource {
 public:
  DatasetView(const Dataset& ds, std::vector<std::int64_t> indices)
      : ds_(&ds), indices_(std::move(indices)) {}
  explicit DatasetView(const Dataset& ds);  // all indices

  std::int64_t size() const override { return static_cast<std::int64_t>(indices_.size()); }
  int num_classes() const override { return ds_->num_classes; }
  Shape sample_shape() const override;
  void fill(std::int64_t i, float* image_out, std::int32_t& label_out) const override;

 private:
  const Dataset* ds_;
  std::vector<std::int64_t> indices_;
};

/// Everything a resumable training run carries between epochs.
struct TrainState {
  Network net;  // current parameters
  std::vector<Tensor> vel_w, vel_b;
  Rng rng{0};
  int epoch = 0;  // completed epochs
  Network best;
  double best_acc = -1.0;
  int best_epoch = 0;
  TrainReport report;
};

using EpochHook = std::function<void(const TrainState&)>;

TrainState init_train_state(const Network& net, std::uint64_t seed);

/// Runs epochs state.epoch+1 .. until_epoch. RNG is consumed per epoch by the
/// shuffle first and the dropout masks second, so resuming from a saved state
/// at an epoch boundary reproduces an uninterrupted run exactly.
void train_epochs(TrainState& state, const BatchSource& labeled, const BatchSource& validation,
                  const SgdConfig& cfg, int until_epoch, const EpochHook& hook = nullptr);

struct FinetuneResult {
  Network best;
  TrainReport report;
};

/// Full fine-tuning run with early stopping: returns the parameters from the
/// epoch with the highest validation accuracy.
FinetuneResult finetune(const Network& start, const BatchSource& labeled,
                        const BatchSource& validation, const SgdConfig& cfg, std::uint64_t seed,
                        const EpochHook& hook = nullptr);

/// Fraction of argmax(logits) == label, eval mode, ties to the lowest index.
double classify_accuracy(const Network& net, const BatchSource& split, int batch_size = 256);

enum class PretrainMode { none, hpca };

inline const char* pretrain_mode_name(PretrainMode m) {
  return m == PretrainMode::hpca ? "hpca" : "none";
}

struct RunSettings {
  NetworkConfig netcfg;
  HpcaConfig hpca;
  SgdConfig sgd;
  std::int64_t hpca_pool_limit = 0;  // pre-train on the first n train images (0 = all)
  bool db_includes_validation = true;
  int eval_batch = 256;
};

struct ProtocolResult {
  Network net;  // fine-tuned cut network
  TrainReport report;
  std::vector<HpcaLayerStats> hpca_stats;
};

/// Seed derivation shared by run_protocol and the layer sweep, so a sweep
/// that pre-trains once reproduces per-layer protocol runs bit-exactly.
struct ProtocolSeeds {
  std::uint64_t init, pretrain;
  std::uint64_t head(int k) const { return derive_seed(base, "head", k); }
  std::uint64_t finetune(int k) const { return derive_seed(base, "finetune", k); }
  std::uint64_t base;
  explicit ProtocolSeeds(std::uint64_t seed)
      : init(derive_seed(seed, "net-init")), pretrain(derive_seed(seed, "pretrain")), base(seed) {}
};

/// Builds the full network, optionally HPCA-pretrains it on all training
/// images (labels unused), then cuts at layer_k and fine-tunes on the
/// regime's labeled subset only.
ProtocolResult run_protocol(const Dataset& train, const Dataset& validation,
                            const SplitIndex& regime, PretrainMode mode, int layer_k,
                            const RunSettings& settings, std::uint64_t seed,
                            const HpcaEpochHook& hpca_hook = nullptr,
                            const EpochHook& train_hook = nullptr);

}  // namespace hebb

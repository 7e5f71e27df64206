#pragma once
// On-disk formats with exact round-trip guarantees: .ckpt checkpoints,
// .feat feature stores, .metrics.csv append-only logs, and .run configs.
// Containers are an ASCII magic+version line, a text key=value header that
// declares every tensor shape, an "end" line, then raw little-endian 32-bit
// payloads in header order.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hebb/data.hpp"
#include "hebb/network.hpp"
#include "hebb/retrieval.hpp"
#include "hebb/trainer.hpp"

namespace hebb {

struct Provenance {
  std::string phase = "pretrained";  // pretrained | finetuned
  std::string dataset_id;
  int regime = 100;
  int epoch = 0;
};

struct Checkpoint {
  int format_version = 1;
  Network net;
  Provenance prov;
  std::uint64_t seed = 0;
  std::string rng_state;  // empty when not resumable
  ChannelStats norm;      // standardization stats of the training data
  bool has_velocity = false;
  std::vector<Tensor> vel_w, vel_b;
  bool has_best = false;  // best-so-far parameters for early stopping
  Network best;
  double best_acc = 0.0;
  int best_epoch = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint checkpoint_from_state(const TrainState& state, Provenance prov, std::uint64_t seed,
                                 const ChannelStats& norm);
TrainState state_from_checkpoint(const Checkpoint& ckpt);

void save_features(const std::string& path, const FeatureStore& store);
FeatureStore load_features(const std::string& path);

std::string layer_spec_to_string(const LayerSpec& spec);
LayerSpec layer_spec_from_string(const std::string& s);

/// Append-only CSV: run_id,phase,step,metric,value. Header written on
/// creation; no timestamps, so identical runs produce identical bytes.
class MetricsLog {
 public:
  explicit MetricsLog(std::string path) : path_(std::move(path)) {}
  const std::string& path() const { return path_; }
  void append(const std::string& run_id, const std::string& phase, std::int64_t step,
              const std::string& metric, double value) const;

 private:
  std::string path_;
};

struct MetricsRow {
  std::string run_id, phase, metric;
  std::int64_t step = 0;
  double value = 0.0;
};
std::vector<MetricsRow> parse_metrics(const std::string& path);

/// Flat key=value run description; every CLI flag maps 1:1 to a key, so a run
/// is reproducible from this file alone (given the dataset files).
struct RunConfig {
  std::string command;
  std::string dataset = "cifar10";  // cifar10 | cifar100 | synthetic
  std::string data_dir;
  std::uint64_t seed = 0;
  int seeds = 1;
  int regime = 100;
  int layer = 0;  // 0 = sweep over all cut points
  std::string from = "none";  // none | hpca | <checkpoint path>
  std::string resume;
  std::string out;
  std::string metrics;
  std::string run_id;
  std::string net = "default";  // default | smoke
  // hpca
  int hpca_epochs = 20;
  double hpca_eta = 1e-3;
  bool hpca_include_dense = true;
  std::int64_t hpca_pool = 0;
  // sgd
  int epochs = 20;
  double lr0 = 1e-3;
  int batch_size = 64;
  double momentum = 0.9;
  bool nesterov = true;
  double dropout = 0.5;
  double weight_decay = -1.0;  // <0: dataset default (5e-2 cifar10, 1e-2 cifar100)
  // dataset shaping
  std::int64_t limit_train = 0, limit_val = 0, limit_test = 0;
  std::int64_t synth_train = 2000, synth_val = 400, synth_test = 400;
  int synth_classes = 10;
  // retrieval
  std::string db = "train+val";  // train+val | train
  std::string split = "test";
  // command-specific paths
  std::string ckpt, feat, query_feat, image, state_out, table = "cifar10", scale = "smoke";
  int topk = 10;

  std::map<std::string, std::string> to_kv() const;
  static RunConfig from_kv(const std::map<std::string, std::string>& kv);
  void save(const std::string& path) const;
  static RunConfig load(const std::string& path);
};

}  // namespace hebb

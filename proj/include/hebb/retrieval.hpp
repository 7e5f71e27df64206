#pragma once
// Feature stores, exact euclidean ranking, average precision / mAP, and the
// layerwise cut-and-retrain sweep that selects the best feature layer on
// validation mAP.

#include <cstdint>
#include <string>
#include <vector>

#include "hebb/data.hpp"
#include "hebb/network.hpp"
#include "hebb/trainer.hpp"

namespace hebb {

struct FeatureStore {
  Tensor features;  // [N,F]
  std::vector<std::int32_t> labels;
  int layer_k = 0;
  std::string split_tag;

  std::int64_t count() const { return features.empty() ? 0 : features.dim(0); }
  std::int64_t dim() const { return features.empty() ? 0 : features.dim(1); }
};

/// Rows are extract_features outputs in dataset order.
FeatureStore build_store(const Network& net, const Dataset& split, int layer_k, int batch_size);

/// Database indices by ascending euclidean distance to the query; exact ties
/// break to the lower index. Distances accumulate in double.
std::vector<std::int64_t> rank(const FeatureStore& store, const float* query, std::int64_t dim);
std::vector<std::int64_t> rank(const FeatureStore& store, const std::vector<float>& query);

/// APS = sum_i P_i (R_i - R_{i-1}) over the ranked list, which reduces to the
/// mean of P_i at the relevant positions divided by total_relevant.
double average_precision(const std::vector<std::uint8_t>& relevance, std::int64_t total_relevant);

struct RetrievalReport {
  std::vector<double> per_query_aps;  // queries with at least one relevant item
  double map = 0.0;
  int layer_k = 0;
  std::int64_t num_queries = 0;      // queries contributing to the mean
  std::int64_t skipped_queries = 0;  // queries with no relevant database item
  std::int64_t K = 0;                // ranking depth = database size
};

/// Ranks every query row against the database store; K is the full database
/// size, an item is relevant iff its label equals the query label.
RetrievalReport evaluate_map_stores(const FeatureStore& db, const FeatureStore& queries);

/// Streaming variant: extracts db features in chunks so large databases never
/// materialize a full store.
RetrievalReport evaluate_map(const Network& net, const std::vector<const Dataset*>& db_parts,
                             const Dataset& queries, int layer_k, int batch_size = 256);
RetrievalReport evaluate_map(const Network& net, const Dataset& db, const Dataset& queries,
                             int layer_k, int batch_size = 256);

struct SweepResult {
  int best_layer = 0;
  std::vector<double> val_map;  // index k-1
  RetrievalReport test_report;  // for best_layer only
  TrainReport best_train_report;
};

/// For each cut point k runs the run_protocol composition (pre-training is
/// shared across k, bit-identical to per-k runs), scores validation mAP with
/// validation images as queries against the training-image store, selects the
/// argmax layer (smallest on ties), and evaluates that layer on the test set.
SweepResult layer_sweep(const Dataset& train, const Dataset& validation, const Dataset& test,
                        const SplitIndex& regime, PretrainMode mode, const RunSettings& settings,
                        std::uint64_t seed, const HpcaEpochHook& hpca_hook = nullptr,
                        const std::function<void(int layer_k, double val_map)>& layer_hook = nullptr);

/// Sweep starting from an existing (e.g. loaded) full network; per-layer cut,
/// fine-tune, and evaluation seeds follow ProtocolSeeds(seed).
SweepResult layer_sweep_from(const Network& base, const Dataset& train, const Dataset& validation,
                             const Dataset& test, const SplitIndex& regime,
                             const RunSettings& settings, std::uint64_t seed,
                             const std::function<void(int layer_k, double val_map)>& layer_hook = nullptr);

/// Half-width of the 95% confidence interval over n repetitions
/// (t-distribution, n-1 dof); 0 when n < 2.
double ci95_half_width(const std::vector<double>& values);

double t_quantile_975(int dof);

}  // namespace hebb

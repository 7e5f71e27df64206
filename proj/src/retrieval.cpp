#include "hebb/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hebb {

FeatureStore build_store(const Network& net, const Dataset& split, int layer_k, int batch_size) {
  const std::int64_t n = split.size();
  if (n == 0) throw ConfigError("build_store: empty split");
  if (batch_size < 1) throw ConfigError("build_store: batch_size must be >= 1");
  FeatureStore store;
  store.layer_k = layer_k;
  store.split_tag = split.split_tag;
  store.labels = split.labels;
  const std::int64_t chw = split.images.numel() / n;
  const std::int64_t f = feature_dim(net.config, layer_k);
  store.features = Tensor({n, f});
  for (std::int64_t start = 0; start < n; start += batch_size) {
    const std::int64_t bn = std::min<std::int64_t>(batch_size, n - start);
    Tensor batch({bn, split.images.dim(1), split.images.dim(2), split.images.dim(3)});
    std::copy_n(split.images.ptr() + start * chw, bn * chw, batch.ptr());
    Tensor feats = extract_features(net, batch, layer_k);
    std::copy_n(feats.ptr(), bn * f, store.features.ptr() + start * f);
  }
  return store;
}

std::vector<std::int64_t> rank(const FeatureStore& store, const float* query, std::int64_t dim) {
  if (dim != store.dim())
    throw ShapeError("rank: query dimension " + std::to_string(dim) + " != store dimension " +
                     std::to_string(store.dim()));
  const std::int64_t n = store.count();
  std::vector<double> dist(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static) if (n > 256)
  for (std::int64_t i = 0; i < n; ++i) {
    const float* row = store.features.ptr() + i * dim;
    double acc = 0.0;
    for (std::int64_t d = 0; d < dim; ++d) {
      const double diff = static_cast<double>(query[d]) - static_cast<double>(row[d]);
      acc += diff * diff;
    }
    dist[static_cast<std::size_t>(i)] = acc;
  }
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    const double da = dist[static_cast<std::size_t>(a)], db = dist[static_cast<std::size_t>(b)];
    return da != db ? da < db : a < b;
  });
  return order;
}

std::vector<std::int64_t> rank(const FeatureStore& store, const std::vector<float>& query) {
  return rank(store, query.data(), static_cast<std::int64_t>(query.size()));
}

double average_precision(const std::vector<std::uint8_t>& relevance, std::int64_t total_relevant) {
  if (total_relevant < 1) throw ConfigError("average_precision: total_relevant must be >= 1");
  double aps = 0.0;
  double prev_recall = 0.0;
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < relevance.size(); ++i) {
    if (relevance[i]) ++hits;
    const double precision = static_cast<double>(hits) / static_cast<double>(i + 1);
    const double recall = static_cast<double>(hits) / static_cast<double>(total_relevant);
    aps += precision * (recall - prev_recall);
    prev_recall = recall;
  }
  return aps;
}

namespace {

/// AP for one query from its squared distances to the full database.
double ap_from_distances(const std::vector<double>& dist, const std::vector<std::int32_t>& db_labels,
                         std::int32_t query_label, std::int64_t total_relevant) {
  const std::int64_t n = static_cast<std::int64_t>(dist.size());
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    const double da = dist[static_cast<std::size_t>(a)], db = dist[static_cast<std::size_t>(b)];
    return da != db ? da < db : a < b;
  });
  double aps = 0.0;
  double prev_recall = 0.0;
  std::int64_t hits = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (db_labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] == query_label) ++hits;
    const double precision = static_cast<double>(hits) / static_cast<double>(i + 1);
    const double recall = static_cast<double>(hits) / static_cast<double>(total_relevant);
    aps += precision * (recall - prev_recall);
    prev_recall = recall;
  }
  return aps;
}

/// Builds the num_queries x total_db squared-distance matrix one database
/// chunk at a time: ||q - d||^2 = ||q||^2 + ||d||^2 - 2 q.d, in double.
struct MapAccumulator {
  MatRM<double> q;  // num_queries x F
  std::vector<double> query_norm;
  std::vector<double> dist;
  std::vector<std::int32_t> db_labels;
  std::int64_t total_db = 0;
  std::int64_t filled = 0;

  MapAccumulator(const Tensor& query_features, std::int64_t db_size)
      : q(query_features.dim(0), query_features.dim(1)),
        query_norm(static_cast<std::size_t>(query_features.dim(0))),
        dist(static_cast<std::size_t>(query_features.dim(0) * db_size)),
        total_db(db_size) {
    for (std::int64_t i = 0; i < query_features.numel(); ++i)
      q.data()[i] = static_cast<double>(query_features.data[static_cast<std::size_t>(i)]);
    for (std::int64_t i = 0; i < q.rows(); ++i) {
      double acc = 0.0;
      for (std::int64_t k = 0; k < q.cols(); ++k) acc += q(i, k) * q(i, k);
      query_norm[static_cast<std::size_t>(i)] = acc;
    }
  }

  void add_chunk(const float* feats, const std::int32_t* labels, std::int64_t count) {
    const std::int64_t f = q.cols();
    const std::int64_t nq = q.rows();
    MatRM<double> d(count, f);
    for (std::int64_t i = 0; i < count * f; ++i) d.data()[i] = static_cast<double>(feats[i]);
    MatRM<double> cross = q * d.transpose();  // nq x count
    for (std::int64_t j = 0; j < count; ++j) {
      double nn = 0.0;
      for (std::int64_t k = 0; k < f; ++k) nn += d(j, k) * d(j, k);
      for (std::int64_t i = 0; i < nq; ++i)
        dist[static_cast<std::size_t>(i * total_db + filled + j)] =
            query_norm[static_cast<std::size_t>(i)] + nn - 2.0 * cross(i, j);
    }
    db_labels.insert(db_labels.end(), labels, labels + count);
    filled += count;
  }

  RetrievalReport finalize(const std::vector<std::int32_t>& query_labels, int layer_k) const {
    RetrievalReport rep;
    rep.layer_k = layer_k;
    rep.K = total_db;
    std::vector<std::int64_t> per_label_count;
    for (std::int32_t l : db_labels) {
      if (l >= static_cast<std::int64_t>(per_label_count.size()))
        per_label_count.resize(static_cast<std::size_t>(l) + 1, 0);
      ++per_label_count[static_cast<std::size_t>(l)];
    }
    const std::int64_t nq = q.rows();
    std::vector<double> aps(static_cast<std::size_t>(nq), -1.0);
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < nq; ++i) {
      const std::int32_t label = query_labels[static_cast<std::size_t>(i)];
      const std::int64_t total_rel = label >= 0 && label < static_cast<std::int64_t>(per_label_count.size())
                                         ? per_label_count[static_cast<std::size_t>(label)]
                                         : 0;
      if (total_rel == 0) continue;
      std::vector<double> row(dist.begin() + i * total_db, dist.begin() + (i + 1) * total_db);
      aps[static_cast<std::size_t>(i)] = ap_from_distances(row, db_labels, label, total_rel);
    }
    double sum = 0.0;
    for (double v : aps) {
      if (v < 0.0) {
        ++rep.skipped_queries;
      } else {
        rep.per_query_aps.push_back(v);
        sum += v;
      }
    }
    rep.num_queries = static_cast<std::int64_t>(rep.per_query_aps.size());
    rep.map = rep.num_queries > 0 ? sum / static_cast<double>(rep.num_queries) : 0.0;
    return rep;
  }
};

}  // namespace

RetrievalReport evaluate_map_stores(const FeatureStore& db, const FeatureStore& queries) {
  if (db.count() == 0 || queries.count() == 0)
    throw ConfigError("evaluate_map: empty database or query store");
  if (db.dim() != queries.dim())
    throw ShapeError("evaluate_map: db dim " + std::to_string(db.dim()) + " != query dim " +
                     std::to_string(queries.dim()));
  MapAccumulator acc(queries.features, db.count());
  const std::int64_t chunk = 2048;
  const std::int64_t f = db.dim();
  for (std::int64_t lo = 0; lo < db.count(); lo += chunk) {
    const std::int64_t count = std::min(chunk, db.count() - lo);
    acc.add_chunk(db.features.ptr() + lo * f, db.labels.data() + lo, count);
  }
  return acc.finalize(queries.labels, db.layer_k);
}

RetrievalReport evaluate_map(const Network& net, const std::vector<const Dataset*>& db_parts,
                             const Dataset& queries, int layer_k, int batch_size) {
  std::int64_t total_db = 0;
  for (const Dataset* d : db_parts) total_db += d->size();
  if (total_db == 0 || queries.size() == 0)
    throw ConfigError("evaluate_map: empty database or query split");

  FeatureStore qstore = build_store(net, queries, layer_k, batch_size);
  MapAccumulator acc(qstore.features, total_db);
  for (const Dataset* part : db_parts) {
    const std::int64_t n = part->size();
    const std::int64_t chw = part->images.numel() / n;
    for (std::int64_t start = 0; start < n; start += batch_size) {
      const std::int64_t bn = std::min<std::int64_t>(batch_size, n - start);
      Tensor batch({bn, part->images.dim(1), part->images.dim(2), part->images.dim(3)});
      std::copy_n(part->images.ptr() + start * chw, bn * chw, batch.ptr());
      Tensor feats = extract_features(net, batch, layer_k);
      acc.add_chunk(feats.ptr(), part->labels.data() + start, bn);
    }
  }
  return acc.finalize(qstore.labels, layer_k);
}

RetrievalReport evaluate_map(const Network& net, const Dataset& db, const Dataset& queries,
                             int layer_k, int batch_size) {
  return evaluate_map(net, std::vector<const Dataset*>{&db}, queries, layer_k, batch_size);
}

SweepResult layer_sweep_from(const Network& base, const Dataset& train, const Dataset& validation,
                             const Dataset& test, const SplitIndex& regime,
                             const RunSettings& settings, std::uint64_t seed,
                             const std::function<void(int, double)>& layer_hook) {
  const ProtocolSeeds seeds(seed);
  const int n_cuts = static_cast<int>(base.config.cut_points.size());
  SweepResult result;
  result.val_map.resize(static_cast<std::size_t>(n_cuts), 0.0);
  Network best_net;
  TrainReport best_report;

  DatasetView labeled(train, regime.labeled);
  DatasetView val_view(validation);
  for (int k = 1; k <= n_cuts; ++k) {
    Rng head_rng(seeds.head(k));
    Network cut = cut_at(base, k, base.config.num_classes, head_rng);
    auto ft = finetune(cut, labeled, val_view, settings.sgd, seeds.finetune(k));
    auto rep = evaluate_map(ft.best, train, validation, k, settings.eval_batch);
    result.val_map[static_cast<std::size_t>(k - 1)] = rep.map;
    if (layer_hook) layer_hook(k, rep.map);
    if (result.best_layer == 0 ||
        rep.map > result.val_map[static_cast<std::size_t>(result.best_layer - 1)]) {
      result.best_layer = k;
      best_net = std::move(ft.best);
      best_report = std::move(ft.report);
    }
  }

  std::vector<const Dataset*> db_parts{&train};
  if (settings.db_includes_validation) db_parts.push_back(&validation);
  result.test_report = evaluate_map(best_net, db_parts, test, result.best_layer, settings.eval_batch);
  result.best_train_report = std::move(best_report);
  return result;
}

SweepResult layer_sweep(const Dataset& train, const Dataset& validation, const Dataset& test,
                        const SplitIndex& regime, PretrainMode mode, const RunSettings& settings,
                        std::uint64_t seed, const HpcaEpochHook& hpca_hook,
                        const std::function<void(int, double)>& layer_hook) {
  const ProtocolSeeds seeds(seed);
  Rng init_rng(seeds.init);
  Network net = build_network<float>(settings.netcfg, init_rng);
  if (mode == PretrainMode::hpca) {
    Rng pre_rng(seeds.pretrain);
    const Dataset* pool = &train;
    Dataset limited;
    if (settings.hpca_pool_limit > 0 && settings.hpca_pool_limit < train.size()) {
      limited = limit_dataset(train, settings.hpca_pool_limit);
      pool = &limited;
    }
    pretrain(net, pool->images, settings.hpca, pre_rng, hpca_hook);
  }
  return layer_sweep_from(net, train, validation, test, regime, settings, seed, layer_hook);
}

double t_quantile_975(int dof) {
  static const double table[] = {
      12.706205, 4.302653, 3.182446, 2.776445, 2.570582, 2.446912, 2.364624, 2.306004,
      2.262157,  2.228139, 2.200985, 2.178813, 2.160369, 2.144787, 2.131450, 2.119905,
      2.109816,  2.100922, 2.093024, 2.085963, 2.079614, 2.073873, 2.068658, 2.063899,
      2.059539,  2.055529, 2.051831, 2.048407, 2.045230, 2.042272};
  if (dof < 1) throw ConfigError("t_quantile_975: dof must be >= 1");
  if (dof <= 30) return table[dof - 1];
  return 1.959964;
}

double ci95_half_width(const std::vector<double>& values) {
  const std::int64_t n = static_cast<std::int64_t>(values.size());
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return t_quantile_975(static_cast<int>(n - 1)) * sd / std::sqrt(static_cast<double>(n));
}

}  // namespace hebb

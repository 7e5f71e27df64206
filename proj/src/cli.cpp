#include "hebb/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>

#include "hebb/data.hpp"
#include "hebb/hpca.hpp"
#include "hebb/network.hpp"
#include "hebb/persistence.hpp"
#include "hebb/retrieval.hpp"
#include "hebb/trainer.hpp"

namespace fs = std::filesystem;

namespace hebb {
namespace {

std::string default_run_id(const RunConfig& rc) {
  std::string id = rc.command + "-" + rc.dataset;
  if (rc.command == "reproduce") id = rc.command + "-" + rc.table + "-" + rc.scale;
  if (rc.command == "finetune" || rc.command == "sweep")
    id += "-s" + std::to_string(rc.regime);
  id += "-seed" + std::to_string(rc.seed);
  return id;
}

std::string resolve_data_dir(const RunConfig& rc) {
  std::string dir = rc.data_dir;
  if (dir.empty()) {
    const char* env = std::getenv("HEBB_CBIR_DATA");
    if (env) dir = env;
  }
  if (dir.empty())
    throw ConfigError("no data directory: pass --data-dir or set HEBB_CBIR_DATA");
  if (!fs::is_directory(dir)) throw ConfigError("missing data directory: " + dir);
  return dir;
}

int dataset_classes(const RunConfig& rc) {
  if (rc.dataset == "cifar100") return 100;
  if (rc.dataset == "synthetic") return rc.synth_classes;
  return 10;
}

double resolve_weight_decay(const RunConfig& rc) {
  if (rc.weight_decay >= 0.0) return rc.weight_decay;
  return rc.dataset == "cifar100" ? 1e-2 : 5e-2;
}

PreparedData load_data(const RunConfig& rc) {
  if (rc.dataset == "synthetic")
    return prepare_synthetic(rc.synth_train, rc.synth_val, rc.synth_test, rc.synth_classes, rc.seed);
  if (rc.dataset != "cifar10" && rc.dataset != "cifar100")
    throw ConfigError("unknown dataset: " + rc.dataset);
  return prepare_cifar(rc.dataset, resolve_data_dir(rc), rc.seed, rc.limit_train, rc.limit_val,
                       rc.limit_test);
}

RunSettings settings_from(const RunConfig& rc) {
  const int nc = dataset_classes(rc);
  RunSettings s;
  if (rc.net == "smoke") {
    s.netcfg = smoke_network_config(nc, rc.dropout);
  } else if (rc.net == "default") {
    s.netcfg = default_network_config(nc, rc.dropout);
  } else {
    throw ConfigError("unknown network preset: " + rc.net);
  }
  s.hpca.eta = rc.hpca_eta;
  s.hpca.epochs = rc.hpca_epochs;
  s.hpca.include_dense = rc.hpca_include_dense;
  s.hpca.batch_size = rc.batch_size;
  s.hpca.activation = Activation::relu;
  s.hpca_pool_limit = rc.hpca_pool;
  s.sgd.lr0 = rc.lr0;
  s.sgd.epochs = rc.epochs;
  s.sgd.batch_size = rc.batch_size;
  s.sgd.momentum = rc.momentum;
  s.sgd.nesterov = rc.nesterov;
  s.sgd.dropout_rate = rc.dropout;
  s.sgd.weight_decay = resolve_weight_decay(rc);
  s.db_includes_validation = rc.db == "train+val";
  if (rc.db != "train+val" && rc.db != "train")
    throw ConfigError("--db must be train+val or train");
  return s;
}

void require_regime(int s) {
  const auto& allowed = allowed_regimes();
  if (std::find(allowed.begin(), allowed.end(), s) == allowed.end())
    throw ConfigError("regime " + std::to_string(s) + " not in {1,2,3,4,5,10,25,100}");
}

void write_run_file(const RunConfig& rc) {
  if (!rc.out.empty()) rc.save(rc.out + ".run");
}

MetricsLog open_metrics(RunConfig& rc) {
  if (rc.metrics.empty())
    rc.metrics = rc.out.empty() ? "hebbcbir.metrics.csv" : rc.out + ".metrics.csv";
  return MetricsLog(rc.metrics);
}

HpcaEpochHook hpca_metrics_hook(const MetricsLog& log, const std::string& run_id) {
  return [&log, run_id](int epoch, std::size_t layer_idx, double err) {
    log.append(run_id, "pretrain", epoch, "repr_error.layer" + std::to_string(layer_idx), err);
  };
}

EpochHook train_metrics_hook(const MetricsLog& log, const std::string& run_id,
                             const std::string& phase) {
  return [&log, run_id, phase](const TrainState& st) {
    log.append(run_id, phase, st.epoch, "train_loss", st.report.train_loss.back());
    log.append(run_id, phase, st.epoch, "val_accuracy", st.report.val_accuracy.back());
    log.append(run_id, phase, st.epoch, "lr", st.report.lr.back());
  };
}

int cmd_pretrain(RunConfig rc) {
  if (rc.out.empty()) throw ConfigError("pretrain requires --out");
  rc.command = "pretrain";
  if (rc.run_id.empty()) rc.run_id = default_run_id(rc);
  PreparedData data = load_data(rc);
  RunSettings s = settings_from(rc);
  MetricsLog log = open_metrics(rc);
  write_run_file(rc);

  const ProtocolSeeds seeds(rc.seed);
  Rng init_rng(seeds.init);
  Network net = build_network<float>(s.netcfg, init_rng);
  const Dataset* pool = &data.train;
  Dataset limited;
  if (rc.hpca_pool > 0 && rc.hpca_pool < data.train.size()) {
    limited = limit_dataset(data.train, rc.hpca_pool);
    pool = &limited;
  }
  Rng pre_rng(seeds.pretrain);
  pretrain(net, pool->images, s.hpca, pre_rng, hpca_metrics_hook(log, rc.run_id));

  Checkpoint ckpt;
  ckpt.net = std::move(net);
  ckpt.prov = {"pretrained", rc.dataset, 100, s.hpca.epochs};
  ckpt.seed = rc.seed;
  ckpt.norm = data.stats;
  save_checkpoint(rc.out, ckpt);
  std::printf("pretrained %d epochs on %lld images -> %s\n", s.hpca.epochs,
              static_cast<long long>(pool->size()), rc.out.c_str());
  return 0;
}

/// Base network for fine-tuning/sweeps: fresh, or loaded from a checkpoint.
Network base_network(const RunConfig& rc, const RunSettings& s, std::uint64_t seed,
                     PretrainMode* mode_out) {
  const ProtocolSeeds seeds(seed);
  if (rc.from == "none" || rc.from == "hpca") {
    if (mode_out) *mode_out = rc.from == "hpca" ? PretrainMode::hpca : PretrainMode::none;
    Rng init_rng(seeds.init);
    return build_network<float>(s.netcfg, init_rng);
  }
  if (mode_out) *mode_out = PretrainMode::none;  // already pretrained on disk
  return load_checkpoint(rc.from).net;
}

int cmd_finetune(RunConfig rc) {
  if (rc.out.empty()) throw ConfigError("finetune requires --out");
  require_regime(rc.regime);
  rc.command = "finetune";
  if (rc.run_id.empty()) rc.run_id = default_run_id(rc);
  PreparedData data = load_data(rc);
  RunSettings s = settings_from(rc);
  MetricsLog log = open_metrics(rc);
  write_run_file(rc);

  SplitIndex regime = make_regime(data.train, {rc.regime, derive_seed(rc.seed, "regime")});
  DatasetView labeled(data.train, regime.labeled);
  DatasetView val(data.validation);

  TrainState st;
  int layer_k = rc.layer;
  const ProtocolSeeds seeds(rc.seed);
  if (!rc.resume.empty()) {
    st = state_from_checkpoint(load_checkpoint(rc.resume));
    if (layer_k == 0) layer_k = static_cast<int>(st.net.config.cut_points.size());
  } else {
    if (rc.from == "hpca")
      throw ConfigError("finetune --from takes 'none' or a checkpoint path; run 'pretrain' first");
    PretrainMode mode;
    Network base = base_network(rc, s, rc.seed, &mode);
    if (layer_k == 0) layer_k = static_cast<int>(base.config.cut_points.size());
    Rng head_rng(seeds.head(layer_k));
    Network cut = cut_at(base, layer_k, dataset_classes(rc), head_rng);
    st = init_train_state(cut, seeds.finetune(layer_k));
  }
  train_epochs(st, labeled, val, s.sgd, rc.epochs, train_metrics_hook(log, rc.run_id, "finetune"));
  log.append(rc.run_id, "finetune", st.report.best_epoch, "best_epoch",
             static_cast<double>(st.report.best_epoch));

  Checkpoint best;
  best.net = st.best_epoch > 0 ? st.best : st.net;
  best.prov = {"finetuned", rc.dataset, rc.regime, st.best_epoch};
  best.seed = rc.seed;
  best.norm = data.stats;
  save_checkpoint(rc.out, best);

  if (!rc.state_out.empty()) {
    Checkpoint full = checkpoint_from_state(st, {"finetuned", rc.dataset, rc.regime, st.epoch},
                                            rc.seed, data.stats);
    save_checkpoint(rc.state_out, full);
  }
  std::printf("finetuned layer %d, best epoch %d (val acc %.4f) -> %s\n", layer_k,
              st.report.best_epoch, st.best_acc, rc.out.c_str());
  return 0;
}

void print_table_header(std::FILE* f) {
  std::fprintf(f, "%-8s %-10s %-16s %s\n", "Regime", "Pre-train", "mAP (%)", "Layer");
}

void print_table_row(std::FILE* f, int regime, const std::string& mode,
                     const std::vector<double>& maps, const std::vector<int>& layers) {
  double mean = 0.0;
  for (double v : maps) mean += v;
  mean /= static_cast<double>(maps.size());
  const double hw = ci95_half_width(maps);
  std::map<int, int> layer_votes;
  for (int l : layers) ++layer_votes[l];
  int layer = layers.front();
  for (const auto& [l, n] : layer_votes)
    if (n > layer_votes[layer]) layer = l;
  char map_col[64];
  if (maps.size() > 1) {
    std::snprintf(map_col, sizeof(map_col), "%.2f \xc2\xb1 %.2f", 100.0 * mean, 100.0 * hw);
  } else {
    std::snprintf(map_col, sizeof(map_col), "%.2f", 100.0 * mean);
  }
  std::fprintf(f, "%-8s %-10s %-16s %d\n", (std::to_string(regime) + "%").c_str(), mode.c_str(),
               map_col, layer);
}

int cmd_sweep(RunConfig rc) {
  require_regime(rc.regime);
  if (rc.seeds < 1) throw ConfigError("--seeds must be >= 1");
  rc.command = "sweep";
  if (rc.run_id.empty()) rc.run_id = default_run_id(rc);
  PreparedData data = load_data(rc);
  RunSettings s = settings_from(rc);
  MetricsLog log = open_metrics(rc);
  write_run_file(rc);

  const bool from_ckpt = rc.from != "none" && rc.from != "hpca";
  Checkpoint loaded;
  if (from_ckpt) loaded = load_checkpoint(rc.from);
  const std::string mode_name = from_ckpt ? "ckpt" : rc.from;

  std::vector<double> maps;
  std::vector<int> layers;
  for (int i = 0; i < rc.seeds; ++i) {
    const std::uint64_t seed_i = derive_seed(rc.seed, "iter", i);
    SplitIndex regime = make_regime(data.train, {rc.regime, derive_seed(seed_i, "regime")});
    const std::string tag = "seed" + std::to_string(i);
    auto layer_hook = [&](int k, double val_map) {
      log.append(rc.run_id, "sweep", k, tag + ".val_map", val_map);
    };
    SweepResult res;
    if (from_ckpt) {
      res = layer_sweep_from(loaded.net, data.train, data.validation, data.test, regime, s, seed_i,
                             layer_hook);
    } else {
      const PretrainMode mode = rc.from == "hpca" ? PretrainMode::hpca : PretrainMode::none;
      res = layer_sweep(data.train, data.validation, data.test, regime, mode, s, seed_i,
                        hpca_metrics_hook(log, rc.run_id), layer_hook);
    }
    log.append(rc.run_id, "sweep", res.best_layer, tag + ".best_layer",
               static_cast<double>(res.best_layer));
    log.append(rc.run_id, "sweep", res.best_layer, tag + ".test_map", res.test_report.map);
    maps.push_back(res.test_report.map);
    layers.push_back(res.best_layer);
    std::printf("iteration %d: best layer %d, test mAP %.4f\n", i, res.best_layer,
                res.test_report.map);
  }

  double mean = 0.0;
  for (double v : maps) mean += v;
  mean /= static_cast<double>(maps.size());
  log.append(rc.run_id, "sweep", 0, "mean_map", mean);
  if (rc.seeds > 1) log.append(rc.run_id, "sweep", 0, "ci95_map", ci95_half_width(maps));

  print_table_header(stdout);
  print_table_row(stdout, rc.regime, mode_name, maps, layers);
  if (!rc.out.empty()) {
    std::FILE* f = std::fopen(rc.out.c_str(), "w");
    if (!f) throw IoError("cannot write report: " + rc.out);
    print_table_header(f);
    print_table_row(f, rc.regime, mode_name, maps, layers);
    std::fclose(f);
  }
  return 0;
}

const Dataset& pick_split(const PreparedData& data, const std::string& split) {
  if (split == "train") return data.train;
  if (split == "validation") return data.validation;
  if (split == "test") return data.test;
  throw ConfigError("--split must be train, validation, or test");
}

int cmd_extract(RunConfig rc) {
  if (rc.ckpt.empty() || rc.out.empty()) throw ConfigError("extract requires --ckpt and --out");
  rc.command = "extract";
  Checkpoint ckpt = load_checkpoint(rc.ckpt);
  PreparedData data = load_data(rc);
  const int layer_k =
      rc.layer == 0 ? static_cast<int>(ckpt.net.config.cut_points.size()) : rc.layer;
  FeatureStore store = build_store(ckpt.net, pick_split(data, rc.split), layer_k, 256);
  save_features(rc.out, store);
  write_run_file(rc);
  std::printf("extracted %lld features of dim %lld at layer %d -> %s\n",
              static_cast<long long>(store.count()), static_cast<long long>(store.dim()), layer_k,
              rc.out.c_str());
  return 0;
}

int cmd_eval_map(RunConfig rc) {
  rc.command = "eval-map";
  if (rc.run_id.empty()) rc.run_id = default_run_id(rc);
  RetrievalReport rep;
  if (!rc.feat.empty()) {
    if (rc.query_feat.empty())
      throw ConfigError("eval-map with --feat also needs --query-feat");
    FeatureStore db = load_features(rc.feat);
    FeatureStore queries = load_features(rc.query_feat);
    rep = evaluate_map_stores(db, queries);
  } else {
    if (rc.ckpt.empty()) throw ConfigError("eval-map requires --ckpt or --feat");
    Checkpoint ckpt = load_checkpoint(rc.ckpt);
    PreparedData data = load_data(rc);
    const int layer_k =
        rc.layer == 0 ? static_cast<int>(ckpt.net.config.cut_points.size()) : rc.layer;
    std::vector<const Dataset*> db_parts{&data.train};
    if (rc.db == "train+val") db_parts.push_back(&data.validation);
    rep = evaluate_map(ckpt.net, db_parts, data.test, layer_k);
  }
  MetricsLog log = open_metrics(rc);
  log.append(rc.run_id, "eval-map", rep.layer_k, "map", rep.map);
  std::printf("mAP %.17g over %lld queries (%lld skipped), layer %d, K=%lld\n", rep.map,
              static_cast<long long>(rep.num_queries), static_cast<long long>(rep.skipped_queries),
              rep.layer_k, static_cast<long long>(rep.K));
  return 0;
}

int cmd_query(RunConfig rc) {
  if (rc.feat.empty() || rc.ckpt.empty() || rc.image.empty())
    throw ConfigError("query requires --feat, --ckpt, and --image");
  rc.command = "query";
  FeatureStore store = load_features(rc.feat);
  Checkpoint ckpt = load_checkpoint(rc.ckpt);

  std::ifstream in(rc.image, std::ios::binary);
  if (!in) throw ConfigError("missing image file: " + rc.image);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::int64_t chw = 3 * 32 * 32;
  const unsigned char* px;
  if (static_cast<std::int64_t>(bytes.size()) == chw) {
    px = bytes.data();
  } else if (static_cast<std::int64_t>(bytes.size()) == chw + 1) {
    px = bytes.data() + 1;  // record with a leading label byte
  } else {
    throw ConfigError("image file must be 3072 raw plane bytes or a 3073-byte record, got " +
                      std::to_string(bytes.size()));
  }
  Tensor img({1, 3, 32, 32});
  for (std::int64_t i = 0; i < chw; ++i) img[i] = static_cast<float>(px[i]) / 255.0f;
  standardize_image(img.ptr(), chw, ckpt.norm);

  Tensor feat = extract_features(ckpt.net, img, store.layer_k);
  if (feat.dim(1) != store.dim())
    throw ConfigError("checkpoint features (dim " + std::to_string(feat.dim(1)) +
                      ") do not match store (dim " + std::to_string(store.dim()) + ")");
  auto order = rank(store, feat.ptr(), feat.dim(1));

  std::int64_t m = rc.topk;
  if (m > store.count()) {
    std::fprintf(stderr, "warning: topk %lld clamped to store size %lld\n",
                 static_cast<long long>(m), static_cast<long long>(store.count()));
    m = store.count();
  }
  std::printf("%-6s %-8s %-6s %s\n", "rank", "index", "label", "distance");
  for (std::int64_t r = 0; r < m; ++r) {
    const std::int64_t idx = order[static_cast<std::size_t>(r)];
    double acc = 0.0;
    for (std::int64_t d = 0; d < store.dim(); ++d) {
      const double diff = static_cast<double>(feat[d]) -
                          static_cast<double>(store.features.at2(idx, d));
      acc += diff * diff;
    }
    std::printf("%-6lld %-8lld %-6d %.6g\n", static_cast<long long>(r + 1),
                static_cast<long long>(idx), store.labels[static_cast<std::size_t>(idx)],
                std::sqrt(acc));
  }
  return 0;
}

int cmd_reproduce(RunConfig rc) {
  rc.command = "reproduce";
  if (rc.table != "cifar10" && rc.table != "cifar100")
    throw ConfigError("--table must be cifar10 or cifar100");
  if (rc.scale != "smoke" && rc.scale != "full")
    throw ConfigError("--scale must be smoke or full");
  rc.dataset = rc.table;
  if (rc.run_id.empty()) rc.run_id = default_run_id(rc);

  if (rc.scale == "smoke") {
    rc.net = "smoke";
    rc.limit_train = 1500;
    rc.limit_val = 400;
    rc.limit_test = 400;
    rc.hpca_epochs = 2;
    rc.epochs = 4;
    rc.batch_size = 32;
  } else {
    std::fprintf(stderr,
                 "warning: full-scale reproduction runs the whole regime grid with %d seeds on "
                 "50k images; expect multiple days of CPU time\n",
                 rc.seeds);
  }

  PreparedData data = load_data(rc);
  RunSettings s = settings_from(rc);
  MetricsLog log = open_metrics(rc);
  write_run_file(rc);

  std::FILE* report = nullptr;
  if (!rc.out.empty()) {
    report = std::fopen(rc.out.c_str(), "w");
    if (!report) throw IoError("cannot write report: " + rc.out);
    print_table_header(report);
  }
  print_table_header(stdout);
  for (int regime_s : allowed_regimes()) {
    for (PretrainMode mode : {PretrainMode::none, PretrainMode::hpca}) {
      std::vector<double> maps;
      std::vector<int> layers;
      for (int i = 0; i < rc.seeds; ++i) {
        const std::uint64_t seed_i = derive_seed(rc.seed, "iter", i);
        SplitIndex regime = make_regime(data.train, {regime_s, derive_seed(seed_i, "regime")});
        SweepResult res =
            layer_sweep(data.train, data.validation, data.test, regime, mode, s, seed_i);
        maps.push_back(res.test_report.map);
        layers.push_back(res.best_layer);
      }
      double mean = 0.0;
      for (double v : maps) mean += v;
      mean /= static_cast<double>(maps.size());
      const std::string mode_name = pretrain_mode_name(mode);
      log.append(rc.run_id, "reproduce", regime_s, mode_name + ".map.mean", mean);
      if (rc.seeds > 1)
        log.append(rc.run_id, "reproduce", regime_s, mode_name + ".map.ci95",
                   ci95_half_width(maps));
      log.append(rc.run_id, "reproduce", regime_s, mode_name + ".layer",
                 static_cast<double>(layers.front()));
      print_table_row(stdout, regime_s, mode_name, maps, layers);
      if (report) {
        print_table_row(report, regime_s, mode_name, maps, layers);
        std::fflush(report);
      }
      std::fflush(stdout);
    }
  }
  if (report) std::fclose(report);
  return 0;
}

int cmd_make_fixture(RunConfig rc) {
  if (rc.out.empty()) throw ConfigError("make-fixture requires --out");
  write_synthetic_cifar10_dir(rc.out, rc.seed);
  std::printf("wrote synthetic cifar10-format archive to %s\n", rc.out.c_str());
  return 0;
}

void bind_common(CLI::App* cmd, RunConfig& rc, std::string& config_sink) {
  cmd->add_option("--config", config_sink, "run config file (loaded before flag parsing)");
  cmd->add_option("--dataset", rc.dataset, "cifar10 | cifar100 | synthetic");
  cmd->add_option("--data-dir", rc.data_dir, "directory with the CIFAR binary archives");
  cmd->add_option("--seed", rc.seed, "master seed");
  cmd->add_option("--metrics", rc.metrics, "metrics log path (.metrics.csv)");
  cmd->add_option("--run-id", rc.run_id, "row id used in the metrics log");
  cmd->add_option("--net", rc.net, "network preset: default | smoke");
  cmd->add_option("--batch-size", rc.batch_size, "mini-batch size");
  cmd->add_option("--limit-train", rc.limit_train, "keep first n train images (0 = all)");
  cmd->add_option("--limit-val", rc.limit_val, "keep first n validation images");
  cmd->add_option("--limit-test", rc.limit_test, "keep first n test images");
  cmd->add_option("--synth-train", rc.synth_train, "synthetic train size");
  cmd->add_option("--synth-val", rc.synth_val, "synthetic validation size");
  cmd->add_option("--synth-test", rc.synth_test, "synthetic test size");
  cmd->add_option("--synth-classes", rc.synth_classes, "synthetic class count");
}

void bind_sgd(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--epochs", rc.epochs, "fine-tuning epochs");
  cmd->add_option("--lr0", rc.lr0, "initial learning rate");
  cmd->add_option("--momentum", rc.momentum, "momentum coefficient");
  cmd->add_flag("--nesterov,!--no-nesterov", rc.nesterov, "Nesterov correction");
  cmd->add_option("--dropout", rc.dropout, "dropout rate before dense layers");
  cmd->add_option("--weight-decay", rc.weight_decay, "L2 penalty (default per dataset)");
}

void bind_hpca(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--hpca-epochs", rc.hpca_epochs, "pre-training epochs");
  cmd->add_option("--hpca-eta", rc.hpca_eta, "pre-training learning rate");
  cmd->add_flag("--hpca-include-dense,!--hpca-conv-only", rc.hpca_include_dense,
                "pre-train internal dense layers too");
  cmd->add_option("--hpca-pool", rc.hpca_pool, "pre-train on the first n train images (0 = all)");
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  RunConfig rc;
  std::string config_sink;
  // --config seeds the defaults; explicit flags override it.
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    std::string path;
    if (arg == "--config" && i + 1 < argc) {
      path = argv[i + 1];
    } else if (arg.rfind("--config=", 0) == 0) {
      path = arg.substr(9);
    } else {
      continue;
    }
    try {
      rc = RunConfig::load(path);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return 2;
    }
  }

  CLI::App app{"Semi-supervised Hebbian pre-training and CBIR evaluation"};
  app.require_subcommand(1);

  auto* p_pre = app.add_subcommand("pretrain", "unsupervised HPCA pre-training");
  bind_common(p_pre, rc, config_sink);
  bind_hpca(p_pre, rc);
  p_pre->add_option("--out", rc.out, "output checkpoint (.ckpt)");

  auto* p_ft = app.add_subcommand("finetune", "supervised SGD fine-tuning");
  bind_common(p_ft, rc, config_sink);
  bind_sgd(p_ft, rc);
  p_ft->add_option("--from", rc.from, "none | pretrained checkpoint path");
  p_ft->add_option("--regime", rc.regime, "labeled percentage (1,2,3,4,5,10,25,100)");
  p_ft->add_option("--layer", rc.layer, "cut layer 1..5 (0 = deepest)");
  p_ft->add_option("--out", rc.out, "output checkpoint with the best-epoch parameters");
  p_ft->add_option("--resume", rc.resume, "resumable state checkpoint to continue from");
  p_ft->add_option("--state-out", rc.state_out, "also write a resumable state checkpoint here");

  auto* p_sw = app.add_subcommand("sweep", "layerwise sweep with confidence intervals");
  bind_common(p_sw, rc, config_sink);
  bind_sgd(p_sw, rc);
  bind_hpca(p_sw, rc);
  p_sw->add_option("--from", rc.from, "none | hpca | pretrained checkpoint path");
  p_sw->add_option("--regime", rc.regime, "labeled percentage");
  p_sw->add_option("--seeds", rc.seeds, "independent iterations");
  p_sw->add_option("--out", rc.out, "report file");

  auto* p_ex = app.add_subcommand("extract", "extract a feature store from a checkpoint");
  bind_common(p_ex, rc, config_sink);
  p_ex->add_option("--ckpt", rc.ckpt, "checkpoint path")->required();
  p_ex->add_option("--layer", rc.layer, "feature layer (0 = deepest)");
  p_ex->add_option("--split", rc.split, "train | validation | test");
  p_ex->add_option("--out", rc.out, "output feature store (.feat)");

  auto* p_ev = app.add_subcommand("eval-map", "mAP of a checkpoint or stored features");
  bind_common(p_ev, rc, config_sink);
  p_ev->add_option("--ckpt", rc.ckpt, "checkpoint path");
  p_ev->add_option("--layer", rc.layer, "feature layer (0 = deepest)");
  p_ev->add_option("--feat", rc.feat, "database feature store");
  p_ev->add_option("--query-feat", rc.query_feat, "query feature store");
  p_ev->add_option("--db", rc.db, "retrieval database: train+val | train");

  auto* p_q = app.add_subcommand("query", "top-k retrieval for one image");
  bind_common(p_q, rc, config_sink);
  p_q->add_option("--feat", rc.feat, "database feature store");
  p_q->add_option("--ckpt", rc.ckpt, "checkpoint that produced the store");
  p_q->add_option("--image", rc.image, "raw 3072-byte image or 3073-byte record");
  p_q->add_option("--topk", rc.topk, "results to print");

  auto* p_rep = app.add_subcommand("reproduce", "regime x pre-training grid");
  bind_common(p_rep, rc, config_sink);
  bind_sgd(p_rep, rc);
  bind_hpca(p_rep, rc);
  p_rep->add_option("--table", rc.table, "cifar10 | cifar100");
  p_rep->add_option("--scale", rc.scale, "smoke | full");
  p_rep->add_option("--seeds", rc.seeds, "iterations per configuration (5 for confidence intervals)");
  p_rep->add_option("--out", rc.out, "report file");

  auto* p_fix = app.add_subcommand("make-fixture", "synthetic cifar10-format archive");
  p_fix->add_option("--out", rc.out, "output directory")->required();
  p_fix->add_option("--seed", rc.seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (p_pre->parsed()) return cmd_pretrain(rc);
    if (p_ft->parsed()) return cmd_finetune(rc);
    if (p_sw->parsed()) return cmd_sweep(rc);
    if (p_ex->parsed()) return cmd_extract(rc);
    if (p_ev->parsed()) return cmd_eval_map(rc);
    if (p_q->parsed()) return cmd_query(rc);
    if (p_rep->parsed()) return cmd_reproduce(rc);
    if (p_fix->parsed()) return cmd_make_fixture(rc);
    throw ConfigError("no command given");
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace hebb

#include "hebb/persistence.hpp"

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace hebb {
namespace {

constexpr const char* kCkptMagic = "HEBBCBIR-CKPT v1";
constexpr const char* kFeatMagic = "HEBBCBIR-FEAT v1";

static_assert(sizeof(float) == 4 && sizeof(std::int32_t) == 4);

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <class T>
void write_le(std::ostream& out, const T* values, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values), static_cast<std::streamsize>(count * sizeof(T)));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      char b[sizeof(T)];
      std::memcpy(b, &values[i], sizeof(T));
      std::reverse(b, b + sizeof(T));
      out.write(b, sizeof(T));
    }
  }
}

template <class T>
void read_le(std::istream& in, T* values, std::size_t count, const std::string& path) {
  in.read(reinterpret_cast<char*>(values), static_cast<std::streamsize>(count * sizeof(T)));
  if (in.gcount() != static_cast<std::streamsize>(count * sizeof(T)))
    throw IoError("truncated payload in " + path);
  if constexpr (std::endian::native != std::endian::little) {
    for (std::size_t i = 0; i < count; ++i) {
      char b[sizeof(T)];
      std::memcpy(b, &values[i], sizeof(T));
      std::reverse(b, b + sizeof(T));
      std::memcpy(&values[i], b, sizeof(T));
    }
  }
}

struct Header {
  std::map<std::string, std::string> kv;
  std::vector<std::pair<std::string, Shape>> tensors;  // name, shape in payload order

  const std::string& get(const std::string& key, const std::string& path) const {
    auto it = kv.find(key);
    if (it == kv.end()) throw IoError("missing header key '" + key + "' in " + path);
    return it->second;
  }
  std::string get_or(const std::string& key, const std::string& fallback) const {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
  }
};

Shape parse_shape(const std::string& s, const std::string& path) {
  Shape out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoll(item));
    if (out.back() <= 0) throw IoError("invalid tensor shape '" + s + "' in " + path);
  }
  if (out.empty()) throw IoError("invalid tensor shape '" + s + "' in " + path);
  return out;
}

std::string shape_kv(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out;
}

/// Reads magic line + header up to "end"; leaves the stream at the payload.
Header read_header(std::istream& in, const char* magic, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty file: " + path);
  if (line != magic) {
    const std::string prefix(magic, std::strlen(magic) - 1);  // up to version digit
    if (line.rfind(prefix, 0) == 0)
      throw IoError("unsupported format version in " + path + ": '" + line + "'");
    throw IoError("bad magic in " + path + ": expected '" + std::string(magic) + "'");
  }
  Header h;
  while (std::getline(in, line)) {
    if (line == "end") return h;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("malformed header line in " + path + ": '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key.rfind("tensor.", 0) == 0 && key.ends_with(".name")) {
      h.tensors.emplace_back(value, Shape{});
    } else if (key.rfind("tensor.", 0) == 0 && key.ends_with(".shape")) {
      if (h.tensors.empty() || !h.tensors.back().second.empty())
        throw IoError("tensor shape without matching name in " + path);
      h.tensors.back().second = parse_shape(value, path);
    } else {
      h.kv[key] = value;
    }
  }
  throw IoError("missing 'end' marker in " + path);
}

void expect_eof(std::istream& in, const std::string& path) {
  char c;
  if (in.read(&c, 1).gcount() != 0)
    throw IoError("trailing bytes after declared payload in " + path);
}

std::string net_config_header(const NetworkConfig& cfg) {
  std::string out;
  out += "input_shape=" + std::to_string(cfg.input_shape[0]) + "," +
         std::to_string(cfg.input_shape[1]) + "," + std::to_string(cfg.input_shape[2]) + "\n";
  out += "num_classes=" + std::to_string(cfg.num_classes) + "\n";
  std::string cps;
  for (std::size_t i = 0; i < cfg.cut_points.size(); ++i)
    cps += (i ? "," : "") + std::to_string(cfg.cut_points[i]);
  out += "cut_points=" + cps + "\n";
  out += "layer_count=" + std::to_string(cfg.layers.size()) + "\n";
  for (std::size_t i = 0; i < cfg.layers.size(); ++i)
    out += "layer." + std::to_string(i) + "=" + layer_spec_to_string(cfg.layers[i]) + "\n";
  return out;
}

NetworkConfig net_config_from_header(const Header& h, const std::string& path) {
  NetworkConfig cfg;
  {
    Shape in = parse_shape(h.get("input_shape", path), path);
    if (in.size() != 3) throw IoError("input_shape must have 3 entries in " + path);
    cfg.input_shape = {static_cast<int>(in[0]), static_cast<int>(in[1]), static_cast<int>(in[2])};
  }
  cfg.num_classes = std::stoi(h.get("num_classes", path));
  for (auto v : parse_shape(h.get("cut_points", path), path))
    cfg.cut_points.push_back(static_cast<int>(v));
  const int n = std::stoi(h.get("layer_count", path));
  for (int i = 0; i < n; ++i)
    cfg.layers.push_back(layer_spec_from_string(h.get("layer." + std::to_string(i), path)));
  return cfg;
}

void append_net_tensors(std::vector<std::pair<std::string, const Tensor*>>& list,
                        const Network& net, const std::string& prefix) {
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (!net.layers[i].spec.has_params()) continue;
    list.emplace_back(prefix + "." + std::to_string(i) + ".weight", &net.layers[i].weights);
    list.emplace_back(prefix + "." + std::to_string(i) + ".bias", &net.layers[i].bias);
  }
}

}  // namespace

std::string layer_spec_to_string(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::conv:
      return "conv:out=" + std::to_string(spec.units) + ",k=" + std::to_string(spec.kernel) +
             ",s=" + std::to_string(spec.stride) + ",p=" + std::to_string(spec.padding);
    case LayerKind::maxpool:
      return "maxpool:k=" + std::to_string(spec.kernel) + ",s=" + std::to_string(spec.stride);
    case LayerKind::relu:
      return "relu";
    case LayerKind::flatten:
      return "flatten";
    case LayerKind::dense:
      return "dense:units=" + std::to_string(spec.units);
    case LayerKind::dropout:
      return "dropout:rate=" + fmt_double(spec.rate);
  }
  throw ConfigError("unknown layer kind");
}

LayerSpec layer_spec_from_string(const std::string& s) {
  const auto colon = s.find(':');
  const std::string kind = s.substr(0, colon);
  std::map<std::string, std::string> args;
  if (colon != std::string::npos) {
    std::stringstream ss(s.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw IoError("malformed layer spec: '" + s + "'");
      args[item.substr(0, eq)] = item.substr(eq + 1);
    }
  }
  auto geti = [&](const std::string& k) {
    auto it = args.find(k);
    if (it == args.end()) throw IoError("layer spec '" + s + "' missing '" + k + "'");
    return std::stoi(it->second);
  };
  if (kind == "conv") return LayerSpec::conv(geti("out"), geti("k"), geti("s"), geti("p"));
  if (kind == "maxpool") return LayerSpec::maxpool(geti("k"), geti("s"));
  if (kind == "relu") return LayerSpec::relu();
  if (kind == "flatten") return LayerSpec::flatten();
  if (kind == "dense") return LayerSpec::dense(geti("units"));
  if (kind == "dropout") {
    auto it = args.find("rate");
    if (it == args.end()) throw IoError("layer spec '" + s + "' missing 'rate'");
    return LayerSpec::dropout(std::stod(it->second));
  }
  throw IoError("unknown layer kind in spec: '" + s + "'");
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path);

  std::vector<std::pair<std::string, const Tensor*>> tensors;
  append_net_tensors(tensors, ckpt.net, "param");
  if (ckpt.has_velocity) {
    for (std::size_t i = 0; i < ckpt.net.layers.size(); ++i) {
      if (!ckpt.net.layers[i].spec.has_params()) continue;
      tensors.emplace_back("vel." + std::to_string(i) + ".weight", &ckpt.vel_w[i]);
      tensors.emplace_back("vel." + std::to_string(i) + ".bias", &ckpt.vel_b[i]);
    }
  }
  if (ckpt.has_best) append_net_tensors(tensors, ckpt.best, "best");

  std::string header;
  header += std::string(kCkptMagic) + "\n";
  header += "phase=" + ckpt.prov.phase + "\n";
  header += "dataset=" + ckpt.prov.dataset_id + "\n";
  header += "regime=" + std::to_string(ckpt.prov.regime) + "\n";
  header += "epoch=" + std::to_string(ckpt.prov.epoch) + "\n";
  header += "seed=" + std::to_string(ckpt.seed) + "\n";
  header += "rng_state=" + ckpt.rng_state + "\n";
  header += "norm_mean=" + fmt_double(ckpt.norm.mean[0]) + "," + fmt_double(ckpt.norm.mean[1]) +
            "," + fmt_double(ckpt.norm.mean[2]) + "\n";
  header += "norm_std=" + fmt_double(ckpt.norm.stdev[0]) + "," + fmt_double(ckpt.norm.stdev[1]) +
            "," + fmt_double(ckpt.norm.stdev[2]) + "\n";
  header += net_config_header(ckpt.net.config);
  header += "has_velocity=" + std::to_string(ckpt.has_velocity ? 1 : 0) + "\n";
  header += "has_best=" + std::to_string(ckpt.has_best ? 1 : 0) + "\n";
  header += "best_epoch=" + std::to_string(ckpt.best_epoch) + "\n";
  header += "best_acc=" + fmt_double(ckpt.best_acc) + "\n";
  header += "tensor_count=" + std::to_string(tensors.size()) + "\n";
  for (std::size_t j = 0; j < tensors.size(); ++j) {
    header += "tensor." + std::to_string(j) + ".name=" + tensors[j].first + "\n";
    header += "tensor." + std::to_string(j) + ".shape=" + shape_kv(tensors[j].second->shape) + "\n";
  }
  header += "end\n";
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [name, t] : tensors) write_le(out, t->ptr(), t->data.size());
  if (!out) throw IoError("short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing file: " + path);
  Header h = read_header(in, kCkptMagic, path);

  Checkpoint ckpt;
  ckpt.prov.phase = h.get_or("phase", "");
  ckpt.prov.dataset_id = h.get_or("dataset", "");
  ckpt.prov.regime = std::stoi(h.get_or("regime", "100"));
  ckpt.prov.epoch = std::stoi(h.get_or("epoch", "0"));
  ckpt.seed = std::stoull(h.get_or("seed", "0"));
  ckpt.rng_state = h.get_or("rng_state", "");
  {
    std::stringstream ms(h.get("norm_mean", path)), ss(h.get("norm_std", path));
    std::string item;
    for (int c = 0; c < 3; ++c) {
      std::getline(ms, item, ',');
      ckpt.norm.mean[static_cast<std::size_t>(c)] = std::stod(item);
      std::getline(ss, item, ',');
      ckpt.norm.stdev[static_cast<std::size_t>(c)] = std::stod(item);
    }
  }
  ckpt.has_velocity = h.get_or("has_velocity", "0") == "1";
  ckpt.has_best = h.get_or("has_best", "0") == "1";
  ckpt.best_epoch = std::stoi(h.get_or("best_epoch", "0"));
  ckpt.best_acc = std::stod(h.get_or("best_acc", "0"));

  NetworkConfig cfg = net_config_from_header(h, path);
  validate_config(cfg);
  ckpt.net.config = cfg;
  for (const auto& l : cfg.layers) ckpt.net.layers.push_back({l, {}, {}});
  if (ckpt.has_best) {
    ckpt.best.config = cfg;
    for (const auto& l : cfg.layers) ckpt.best.layers.push_back({l, {}, {}});
  }
  if (ckpt.has_velocity) {
    ckpt.vel_w.resize(cfg.layers.size());
    ckpt.vel_b.resize(cfg.layers.size());
  }

  const std::size_t declared = static_cast<std::size_t>(std::stoi(h.get("tensor_count", path)));
  if (declared != h.tensors.size())
    throw IoError("tensor_count mismatch in " + path + ": declared " + std::to_string(declared) +
                  ", listed " + std::to_string(h.tensors.size()));

  auto expected_shape = [&](const std::string& name) -> Shape {
    const auto dot1 = name.find('.');
    const auto dot2 = name.find('.', dot1 + 1);
    if (dot1 == std::string::npos || dot2 == std::string::npos)
      throw IoError("unknown tensor '" + name + "' in " + path);
    const std::string group = name.substr(0, dot1);
    const std::size_t idx = static_cast<std::size_t>(std::stoul(name.substr(dot1 + 1, dot2 - dot1 - 1)));
    const std::string field = name.substr(dot2 + 1);
    if (idx >= cfg.layers.size() || !cfg.layers[idx].has_params() ||
        (field != "weight" && field != "bias") ||
        (group != "param" && group != "vel" && group != "best"))
      throw IoError("unknown tensor '" + name + "' in " + path);
    auto shapes = propagate_shapes(cfg);
    const auto& spec = cfg.layers[idx];
    Shape wshape = spec.kind == LayerKind::conv
                       ? Shape{spec.units, shapes[idx][0], spec.kernel, spec.kernel}
                       : Shape{spec.units, shapes[idx][0]};
    return field == "weight" ? wshape : Shape{spec.units};
  };

  for (const auto& [name, shape] : h.tensors) {
    const Shape want = expected_shape(name);
    if (shape != want)
      throw IoError("integrity error in " + path + ": tensor '" + name + "' declared " +
                    shape_str(shape) + ", expected " + shape_str(want));
    Tensor t(shape);
    read_le(in, t.ptr(), t.data.size(), path);
    const auto dot1 = name.find('.');
    const auto dot2 = name.find('.', dot1 + 1);
    const std::string group = name.substr(0, dot1);
    const std::size_t idx = static_cast<std::size_t>(std::stoul(name.substr(dot1 + 1, dot2 - dot1 - 1)));
    const bool is_weight = name.substr(dot2 + 1) == "weight";
    if (group == "param") {
      (is_weight ? ckpt.net.layers[idx].weights : ckpt.net.layers[idx].bias) = std::move(t);
    } else if (group == "vel") {
      if (!ckpt.has_velocity) throw IoError("unexpected velocity tensor in " + path);
      (is_weight ? ckpt.vel_w[idx] : ckpt.vel_b[idx]) = std::move(t);
    } else {
      if (!ckpt.has_best) throw IoError("unexpected best tensor in " + path);
      (is_weight ? ckpt.best.layers[idx].weights : ckpt.best.layers[idx].bias) = std::move(t);
    }
  }
  expect_eof(in, path);

  for (std::size_t i = 0; i < ckpt.net.layers.size(); ++i) {
    if (ckpt.net.layers[i].spec.has_params() && ckpt.net.layers[i].weights.empty())
      throw IoError("missing parameters for layer " + std::to_string(i) + " in " + path);
    check_finite(ckpt.net.layers[i].weights, "load_checkpoint");
    check_finite(ckpt.net.layers[i].bias, "load_checkpoint");
  }
  return ckpt;
}

Checkpoint checkpoint_from_state(const TrainState& state, Provenance prov, std::uint64_t seed,
                                 const ChannelStats& norm) {
  Checkpoint ckpt;
  ckpt.net = state.net;
  ckpt.prov = std::move(prov);
  ckpt.prov.epoch = state.epoch;
  ckpt.seed = seed;
  ckpt.rng_state = state.rng.state();
  ckpt.norm = norm;
  ckpt.has_velocity = true;
  ckpt.vel_w = state.vel_w;
  ckpt.vel_b = state.vel_b;
  if (state.best_epoch > 0) {
    ckpt.has_best = true;
    ckpt.best = state.best;
    ckpt.best_acc = state.best_acc;
    ckpt.best_epoch = state.best_epoch;
  }
  return ckpt;
}

TrainState state_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.has_velocity || ckpt.rng_state.empty())
    throw ConfigError("checkpoint is not resumable (no optimizer state)");
  TrainState st = init_train_state(ckpt.net, 0);
  st.rng.set_state(ckpt.rng_state);
  st.epoch = ckpt.prov.epoch;
  st.vel_w = ckpt.vel_w;
  st.vel_b = ckpt.vel_b;
  // Empty velocity slots for non-param layers are already shaped by init.
  for (std::size_t i = 0; i < st.net.layers.size(); ++i) {
    if (st.net.layers[i].spec.has_params() && st.vel_w[i].empty())
      throw ConfigError("checkpoint velocity missing for layer " + std::to_string(i));
  }
  if (ckpt.has_best) {
    st.best = ckpt.best;
    st.best_acc = ckpt.best_acc;
    st.best_epoch = ckpt.best_epoch;
  }
  return st;
}

void save_features(const std::string& path, const FeatureStore& store) {
  if (store.count() == 0) throw ConfigError("refusing to save an empty feature store");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write feature store: " + path);
  std::string header;
  header += std::string(kFeatMagic) + "\n";
  header += "count=" + std::to_string(store.count()) + "\n";
  header += "dim=" + std::to_string(store.dim()) + "\n";
  header += "layer=" + std::to_string(store.layer_k) + "\n";
  header += "split=" + store.split_tag + "\n";
  header += "end\n";
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  write_le(out, store.labels.data(), store.labels.size());
  write_le(out, store.features.ptr(), store.features.data.size());
  if (!out) throw IoError("short write to " + path);
}

FeatureStore load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing file: " + path);
  Header h = read_header(in, kFeatMagic, path);
  const std::int64_t n = std::stoll(h.get("count", path));
  const std::int64_t f = std::stoll(h.get("dim", path));
  if (n <= 0 || f <= 0) throw IoError("invalid feature store dimensions in " + path);
  FeatureStore store;
  store.layer_k = std::stoi(h.get("layer", path));
  store.split_tag = h.get_or("split", "");
  store.labels.resize(static_cast<std::size_t>(n));
  read_le(in, store.labels.data(), store.labels.size(), path);
  store.features = Tensor({n, f});
  read_le(in, store.features.ptr(), store.features.data.size(), path);
  expect_eof(in, path);
  check_finite(store.features, "load_features");
  return store;
}

void MetricsLog::append(const std::string& run_id, const std::string& phase, std::int64_t step,
                        const std::string& metric, double value) const {
  const bool fresh = !fs::exists(path_) || fs::file_size(path_) == 0;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw IoError("cannot append to metrics log: " + path_);
  if (fresh) out << "run_id,phase,step,metric,value\n";
  out << run_id << ',' << phase << ',' << step << ',' << metric << ',' << fmt_double(value) << '\n';
  if (!out) throw IoError("short write to " + path_);
}

std::vector<MetricsRow> parse_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing file: " + path);
  std::vector<MetricsRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      if (line != "run_id,phase,step,metric,value")
        throw IoError("unexpected metrics header in " + path + ": '" + line + "'");
      continue;
    }
    if (line.empty()) continue;
    std::stringstream ss(line);
    MetricsRow row;
    std::string step, value;
    if (!std::getline(ss, row.run_id, ',') || !std::getline(ss, row.phase, ',') ||
        !std::getline(ss, step, ',') || !std::getline(ss, row.metric, ',') ||
        !std::getline(ss, value))
      throw IoError("malformed metrics row in " + path + ": '" + line + "'");
    row.step = std::stoll(step);
    row.value = std::stod(value);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::map<std::string, std::string> RunConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["command"] = command;
  kv["dataset"] = dataset;
  kv["data-dir"] = data_dir;
  kv["seed"] = std::to_string(seed);
  kv["seeds"] = std::to_string(seeds);
  kv["regime"] = std::to_string(regime);
  kv["layer"] = std::to_string(layer);
  kv["from"] = from;
  kv["resume"] = resume;
  kv["out"] = out;
  kv["metrics"] = metrics;
  kv["run-id"] = run_id;
  kv["net"] = net;
  kv["hpca-epochs"] = std::to_string(hpca_epochs);
  kv["hpca-eta"] = fmt_double(hpca_eta);
  kv["hpca-include-dense"] = hpca_include_dense ? "1" : "0";
  kv["hpca-pool"] = std::to_string(hpca_pool);
  kv["epochs"] = std::to_string(epochs);
  kv["lr0"] = fmt_double(lr0);
  kv["batch-size"] = std::to_string(batch_size);
  kv["momentum"] = fmt_double(momentum);
  kv["nesterov"] = nesterov ? "1" : "0";
  kv["dropout"] = fmt_double(dropout);
  kv["weight-decay"] = fmt_double(weight_decay);
  kv["limit-train"] = std::to_string(limit_train);
  kv["limit-val"] = std::to_string(limit_val);
  kv["limit-test"] = std::to_string(limit_test);
  kv["synth-train"] = std::to_string(synth_train);
  kv["synth-val"] = std::to_string(synth_val);
  kv["synth-test"] = std::to_string(synth_test);
  kv["synth-classes"] = std::to_string(synth_classes);
  kv["db"] = db;
  kv["split"] = split;
  kv["ckpt"] = ckpt;
  kv["state-out"] = state_out;
  kv["feat"] = feat;
  kv["query-feat"] = query_feat;
  kv["image"] = image;
  kv["table"] = table;
  kv["scale"] = scale;
  kv["topk"] = std::to_string(topk);
  return kv;
}

RunConfig RunConfig::from_kv(const std::map<std::string, std::string>& kv) {
  RunConfig rc;
  auto gets = [&](const char* k, std::string& v) {
    auto it = kv.find(k);
    if (it != kv.end()) v = it->second;
  };
  auto geti = [&](const char* k, auto& v) {
    auto it = kv.find(k);
    if (it != kv.end()) v = static_cast<std::decay_t<decltype(v)>>(std::stoll(it->second));
  };
  auto getd = [&](const char* k, double& v) {
    auto it = kv.find(k);
    if (it != kv.end()) v = std::stod(it->second);
  };
  auto getb = [&](const char* k, bool& v) {
    auto it = kv.find(k);
    if (it != kv.end()) v = it->second == "1" || it->second == "true";
  };
  gets("command", rc.command);
  gets("dataset", rc.dataset);
  gets("data-dir", rc.data_dir);
  geti("seed", rc.seed);
  geti("seeds", rc.seeds);
  geti("regime", rc.regime);
  geti("layer", rc.layer);
  gets("from", rc.from);
  gets("resume", rc.resume);
  gets("out", rc.out);
  gets("metrics", rc.metrics);
  gets("run-id", rc.run_id);
  gets("net", rc.net);
  geti("hpca-epochs", rc.hpca_epochs);
  getd("hpca-eta", rc.hpca_eta);
  getb("hpca-include-dense", rc.hpca_include_dense);
  geti("hpca-pool", rc.hpca_pool);
  geti("epochs", rc.epochs);
  getd("lr0", rc.lr0);
  geti("batch-size", rc.batch_size);
  getd("momentum", rc.momentum);
  getb("nesterov", rc.nesterov);
  getd("dropout", rc.dropout);
  getd("weight-decay", rc.weight_decay);
  geti("limit-train", rc.limit_train);
  geti("limit-val", rc.limit_val);
  geti("limit-test", rc.limit_test);
  geti("synth-train", rc.synth_train);
  geti("synth-val", rc.synth_val);
  geti("synth-test", rc.synth_test);
  geti("synth-classes", rc.synth_classes);
  gets("db", rc.db);
  gets("split", rc.split);
  gets("ckpt", rc.ckpt);
  gets("state-out", rc.state_out);
  gets("feat", rc.feat);
  gets("query-feat", rc.query_feat);
  gets("image", rc.image);
  gets("table", rc.table);
  gets("scale", rc.scale);
  geti("topk", rc.topk);
  return rc;
}

void RunConfig::save(const std::string& path) const {
  std::ofstream outf(path, std::ios::trunc);
  if (!outf) throw IoError("cannot write run config: " + path);
  for (const auto& [k, v] : to_kv()) outf << k << '=' << v << '\n';
  if (!outf) throw IoError("short write to " + path);
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("malformed run config line: '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return from_kv(kv);
}

}  // namespace hebb

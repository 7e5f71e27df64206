#include "hebb/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace fs = std::filesystem;

namespace hebb {
namespace {

constexpr std::int64_t kPixelsPerImage = 3 * 32 * 32;

std::vector<std::uint8_t> read_all_bytes(const std::string& path) {
  if (!fs::exists(path)) throw IoError("missing file: " + path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

RawRecords parse_records(const std::string& path, std::int64_t record_size, int label_offset,
                         int max_label) {
  const auto bytes = read_all_bytes(path);
  const std::int64_t size = static_cast<std::int64_t>(bytes.size());
  if (size % record_size != 0) {
    const std::int64_t whole = (size / record_size) * record_size;
    throw IoError("truncated record in " + path + ": " + std::to_string(size - whole) +
                  " trailing bytes after offset " + std::to_string(whole));
  }
  const std::int64_t n = size / record_size;
  RawRecords out;
  out.pixels.resize(static_cast<std::size_t>(n * kPixelsPerImage));
  out.labels.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + i * record_size;
    const int label = rec[label_offset];
    if (label > max_label)
      throw IoError("corrupt record " + std::to_string(i) + " in " + path + ": label " +
                    std::to_string(label) + " > " + std::to_string(max_label));
    out.labels[static_cast<std::size_t>(i)] = label;
    std::copy_n(rec + label_offset + 1, kPixelsPerImage,
                out.pixels.data() + i * kPixelsPerImage);
  }
  return out;
}

void require_record_count(const std::string& path, std::int64_t record_size,
                          std::int64_t expected_records) {
  if (!fs::exists(path)) throw IoError("missing file: " + path);
  const std::int64_t size = static_cast<std::int64_t>(fs::file_size(path));
  if (size % record_size != 0) {
    const std::int64_t whole = (size / record_size) * record_size;
    throw IoError("truncated record in " + path + ": " + std::to_string(size - whole) +
                  " trailing bytes after offset " + std::to_string(whole));
  }
  if (size / record_size != expected_records)
    throw IoError("wrong file size for " + path + ": expected " + std::to_string(expected_records) +
                  " records, found " + std::to_string(size / record_size));
}

Dataset to_dataset(RawRecords&& raw, int num_classes, std::string tag) {
  Dataset ds;
  const std::int64_t n = static_cast<std::int64_t>(raw.labels.size());
  ds.images = Tensor({n, 3, 32, 32});
  for (std::size_t i = 0; i < raw.pixels.size(); ++i)
    ds.images.data[i] = static_cast<float>(raw.pixels[i]) / 255.0f;
  ds.labels = std::move(raw.labels);
  ds.num_classes = num_classes;
  ds.split_tag = std::move(tag);
  return ds;
}

}  // namespace

RawRecords parse_cifar10_records(const std::string& path) {
  return parse_records(path, 3073, 0, 9);
}

RawRecords parse_cifar100_records(const std::string& path) {
  return parse_records(path, 3074, 1, 99);  // coarse byte skipped, fine label used
}

void write_cifar10_file(const std::string& path, const std::vector<std::uint8_t>& pixels,
                        const std::vector<std::int32_t>& labels) {
  const std::int64_t n = static_cast<std::int64_t>(labels.size());
  if (static_cast<std::int64_t>(pixels.size()) != n * kPixelsPerImage)
    throw ShapeError("write_cifar10_file: pixel buffer does not match label count");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path);
  for (std::int64_t i = 0; i < n; ++i) {
    const auto label = static_cast<char>(labels[static_cast<std::size_t>(i)]);
    out.put(label);
    out.write(reinterpret_cast<const char*>(pixels.data() + i * kPixelsPerImage), kPixelsPerImage);
  }
  if (!out) throw IoError("short write to " + path);
}

LoadedData load_cifar10(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("missing data directory: " + dir);
  LoadedData out;
  RawRecords train;
  for (int i = 1; i <= 5; ++i) {
    const std::string path = (fs::path(dir) / ("data_batch_" + std::to_string(i) + ".bin")).string();
    require_record_count(path, 3073, 10000);
    auto part = parse_cifar10_records(path);
    train.pixels.insert(train.pixels.end(), part.pixels.begin(), part.pixels.end());
    train.labels.insert(train.labels.end(), part.labels.begin(), part.labels.end());
  }
  const std::string test_path = (fs::path(dir) / "test_batch.bin").string();
  require_record_count(test_path, 3073, 10000);
  out.train_all = to_dataset(std::move(train), 10, "train");
  out.test = to_dataset(parse_cifar10_records(test_path), 10, "test");
  return out;
}

LoadedData load_cifar100(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("missing data directory: " + dir);
  const std::string train_path = (fs::path(dir) / "train.bin").string();
  const std::string test_path = (fs::path(dir) / "test.bin").string();
  require_record_count(train_path, 3074, 50000);
  require_record_count(test_path, 3074, 10000);
  LoadedData out;
  out.train_all = to_dataset(parse_cifar100_records(train_path), 100, "train");
  out.test = to_dataset(parse_cifar100_records(test_path), 100, "test");
  return out;
}

std::pair<Dataset, Dataset> split_train_validation(const Dataset& ds, std::uint64_t seed) {
  const std::int64_t n = ds.size();
  if (n < 5) throw ConfigError("split_train_validation: dataset too small");
  const std::int64_t n_val = n / 5;
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "train-val-split"));
  rng.shuffle(order);

  auto gather = [&](std::int64_t begin, std::int64_t count, std::string tag) {
    Dataset out;
    out.images = Tensor({count, 3, 32, 32});
    out.labels.resize(static_cast<std::size_t>(count));
    out.num_classes = ds.num_classes;
    out.split_tag = std::move(tag);
    for (std::int64_t i = 0; i < count; ++i) {
      const std::int64_t src = order[static_cast<std::size_t>(begin + i)];
      std::copy_n(ds.images.ptr() + src * kPixelsPerImage, kPixelsPerImage,
                  out.images.ptr() + i * kPixelsPerImage);
      out.labels[static_cast<std::size_t>(i)] = ds.labels[static_cast<std::size_t>(src)];
    }
    return out;
  };
  return {gather(0, n - n_val, "train"), gather(n - n_val, n_val, "validation")};
}

ChannelStats compute_channel_stats(const Dataset& ds) {
  ChannelStats st;
  const std::int64_t n = ds.size();
  if (n == 0) throw ConfigError("compute_channel_stats: empty dataset");
  const std::int64_t plane = 32 * 32;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0, sq = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const float* p = ds.images.ptr() + (i * 3 + c) * plane;
      for (std::int64_t k = 0; k < plane; ++k) {
        sum += p[k];
        sq += static_cast<double>(p[k]) * p[k];
      }
    }
    const double cnt = static_cast<double>(n * plane);
    st.mean[static_cast<std::size_t>(c)] = sum / cnt;
    const double var = sq / cnt - st.mean[static_cast<std::size_t>(c)] * st.mean[static_cast<std::size_t>(c)];
    st.stdev[static_cast<std::size_t>(c)] = std::sqrt(std::max(var, 1e-12));
  }
  return st;
}

void standardize_image(float* image, std::int64_t chw, const ChannelStats& stats) {
  const std::int64_t plane = chw / 3;
  for (int c = 0; c < 3; ++c) {
    const float m = static_cast<float>(stats.mean[static_cast<std::size_t>(c)]);
    const float inv = static_cast<float>(1.0 / stats.stdev[static_cast<std::size_t>(c)]);
    float* p = image + c * plane;
    for (std::int64_t k = 0; k < plane; ++k) p[k] = (p[k] - m) * inv;
  }
}

void standardize_inplace(Dataset& ds, const ChannelStats& stats) {
  const std::int64_t n = ds.size();
  for (std::int64_t i = 0; i < n; ++i)
    standardize_image(ds.images.ptr() + i * kPixelsPerImage, kPixelsPerImage, stats);
}

SplitIndex make_regime(const Dataset& train, const RegimeSpec& spec) {
  const auto& allowed = allowed_regimes();
  if (std::find(allowed.begin(), allowed.end(), spec.s_percent) == allowed.end())
    throw ConfigError("regime s=" + std::to_string(spec.s_percent) +
                      " not in {1,2,3,4,5,10,25,100}");
  const std::int64_t n = train.size();
  if (n == 0) throw ConfigError("make_regime: empty dataset");
  const int nc = train.num_classes;

  // Per-class shuffled orders, seeded independently of s so smaller regimes
  // are prefixes of larger ones.
  std::vector<std::vector<std::int64_t>> by_class(static_cast<std::size_t>(nc));
  for (std::int64_t i = 0; i < n; ++i)
    by_class[static_cast<std::size_t>(train.labels[static_cast<std::size_t>(i)])].push_back(i);
  for (int c = 0; c < nc; ++c) {
    Rng rng(derive_seed(spec.seed, "regime-class", c));
    rng.shuffle(by_class[static_cast<std::size_t>(c)]);
  }

  // Largest-remainder allocation of round(s/100 * n) across classes.
  const std::int64_t total =
      static_cast<std::int64_t>(std::llround(static_cast<double>(spec.s_percent) / 100.0 * n));
  std::vector<std::int64_t> count(static_cast<std::size_t>(nc));
  std::vector<std::pair<double, int>> frac;
  std::int64_t assigned = 0;
  for (int c = 0; c < nc; ++c) {
    const double quota = static_cast<double>(spec.s_percent) / 100.0 *
                         static_cast<double>(by_class[static_cast<std::size_t>(c)].size());
    count[static_cast<std::size_t>(c)] = static_cast<std::int64_t>(std::floor(quota));
    assigned += count[static_cast<std::size_t>(c)];
    frac.emplace_back(quota - std::floor(quota), c);
  }
  std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (std::int64_t r = 0; r < total - assigned; ++r)
    ++count[static_cast<std::size_t>(frac[static_cast<std::size_t>(r % nc)].second)];

  SplitIndex out;
  out.per_class_labeled = count;
  for (int c = 0; c < nc; ++c) {
    const auto& pool = by_class[static_cast<std::size_t>(c)];
    const auto k = static_cast<std::size_t>(std::min<std::int64_t>(
        count[static_cast<std::size_t>(c)], static_cast<std::int64_t>(pool.size())));
    out.labeled.insert(out.labeled.end(), pool.begin(), pool.begin() + k);
    out.unlabeled.insert(out.unlabeled.end(), pool.begin() + k, pool.end());
  }
  std::sort(out.labeled.begin(), out.labeled.end());
  std::sort(out.unlabeled.begin(), out.unlabeled.end());
  return out;
}

Dataset make_synthetic(std::int64_t n, int num_classes, std::uint64_t seed, double signal) {
  if (n <= 0 || num_classes <= 0) throw ConfigError("make_synthetic: n and classes must be positive");
  Dataset ds;
  ds.images = Tensor({n, 3, 32, 32});
  ds.labels.resize(static_cast<std::size_t>(n));
  ds.num_classes = num_classes;
  ds.split_tag = "synthetic";

  std::vector<std::vector<float>> pattern(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    Rng prng(derive_seed(seed, "synth-pattern", c));
    pattern[static_cast<std::size_t>(c)].resize(static_cast<std::size_t>(kPixelsPerImage));
    for (auto& v : pattern[static_cast<std::size_t>(c)])
      v = static_cast<float>(prng.normal() * 0.2);
  }
  Rng rng(derive_seed(seed, "synth-samples"));
  for (std::int64_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_classes)));
    ds.labels[static_cast<std::size_t>(i)] = label;
    float* img = ds.images.ptr() + i * kPixelsPerImage;
    const auto& pat = pattern[static_cast<std::size_t>(label)];
    for (std::int64_t k = 0; k < kPixelsPerImage; ++k) {
      const double v = 0.5 + signal * pat[static_cast<std::size_t>(k)] + 0.12 * rng.normal();
      // quantized to the u8 grid, like pixels that came off disk
      const auto q = static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      img[k] = q / 255.0f;
    }
  }
  return ds;
}

void write_synthetic_cifar10_dir(const std::string& dir, std::uint64_t seed) {
  fs::create_directories(dir);
  std::vector<std::vector<double>> pattern(10);
  for (int c = 0; c < 10; ++c) {
    Rng prng(derive_seed(seed, "synth-pattern", c));
    pattern[static_cast<std::size_t>(c)].resize(static_cast<std::size_t>(kPixelsPerImage));
    for (auto& v : pattern[static_cast<std::size_t>(c)]) v = 45.0 * prng.normal();
  }
  // per-image gain, brightness, and pixel noise keep the covariance away from
  // a 10-atom degenerate spectrum
  auto write_batch = [&](const std::string& name, std::uint64_t file_seed) {
    Rng rng(file_seed);
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(10000 * kPixelsPerImage));
    std::vector<std::int32_t> labels(10000);
    for (std::int64_t i = 0; i < 10000; ++i) {
      const int label = static_cast<int>(rng.below(10));
      labels[static_cast<std::size_t>(i)] = label;
      const auto& pat = pattern[static_cast<std::size_t>(label)];
      const double gain = rng.uniform(0.6, 1.4);
      const double brightness = 14.0 * rng.normal();
      for (std::int64_t k = 0; k < kPixelsPerImage; ++k) {
        const double v = 128.0 + gain * pat[static_cast<std::size_t>(k)] + brightness +
                         28.0 * rng.normal();
        pixels[static_cast<std::size_t>(i * kPixelsPerImage + k)] =
            static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
    }
    write_cifar10_file((fs::path(dir) / name).string(), pixels, labels);
  };
  for (int i = 1; i <= 5; ++i)
    write_batch("data_batch_" + std::to_string(i) + ".bin", derive_seed(seed, "synth-file", i));
  write_batch("test_batch.bin", derive_seed(seed, "synth-file", 6));
}

Dataset limit_dataset(const Dataset& ds, std::int64_t n) {
  if (n <= 0 || n >= ds.size()) return ds;
  Dataset out;
  out.images = Tensor({n, 3, 32, 32});
  std::copy_n(ds.images.ptr(), n * kPixelsPerImage, out.images.ptr());
  out.labels.assign(ds.labels.begin(), ds.labels.begin() + n);
  out.num_classes = ds.num_classes;
  out.split_tag = ds.split_tag;
  return out;
}

PreparedData prepare_cifar(const std::string& kind, const std::string& dir, std::uint64_t seed,
                           std::int64_t limit_train, std::int64_t limit_val,
                           std::int64_t limit_test) {
  LoadedData loaded;
  if (kind == "cifar10") {
    loaded = load_cifar10(dir);
  } else if (kind == "cifar100") {
    loaded = load_cifar100(dir);
  } else {
    throw ConfigError("unknown dataset kind: " + kind);
  }
  PreparedData out;
  auto [train, val] = split_train_validation(loaded.train_all, seed);
  loaded.train_all = Dataset{};  // release the pre-split copy
  out.train = limit_dataset(train, limit_train);
  out.validation = limit_dataset(val, limit_val);
  out.test = limit_dataset(loaded.test, limit_test);
  out.stats = compute_channel_stats(out.train);
  standardize_inplace(out.train, out.stats);
  standardize_inplace(out.validation, out.stats);
  standardize_inplace(out.test, out.stats);
  return out;
}

PreparedData prepare_synthetic(std::int64_t n_train, std::int64_t n_val, std::int64_t n_test,
                               int num_classes, std::uint64_t seed, double signal) {
  PreparedData out;
  out.train = make_synthetic(n_train, num_classes, derive_seed(seed, "synth-train"), signal);
  out.train.split_tag = "train";
  out.validation = make_synthetic(n_val, num_classes, derive_seed(seed, "synth-val"), signal);
  out.validation.split_tag = "validation";
  out.test = make_synthetic(n_test, num_classes, derive_seed(seed, "synth-test"), signal);
  out.test.split_tag = "test";
  out.stats = compute_channel_stats(out.train);
  standardize_inplace(out.train, out.stats);
  standardize_inplace(out.validation, out.stats);
  standardize_inplace(out.test, out.stats);
  return out;
}

}  // namespace hebb

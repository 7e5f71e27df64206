#pragma once
// CIFAR-10/100 binary parsing, train/validation splitting, per-channel
// standardization, sample-efficiency regimes, and a deterministic synthetic
// dataset for tests and machines without the real archives.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hebb/tensor.hpp"

namespace hebb {

struct Dataset {
  Tensor images;  // [N,3,32,32]
  std::vector<std::int32_t> labels;
  int num_classes = 0;
  std::string split_tag;  // train / validation / test

  std::int64_t size() const { return images.empty() ? 0 : images.dim(0); }
};

struct LoadedData {
  Dataset train_all;  // pre-split training images, pixels scaled to [0,1]
  Dataset test;
};

/// Raw record parsing: CIFAR-10 is 1 label byte + 3072 pixel bytes (R,G,B
/// planes, row-major 32x32); CIFAR-100 prefixes a coarse label byte and the
/// fine label is used. Accepts any whole number of records.
struct RawRecords {
  std::vector<std::uint8_t> pixels;  // n * 3072
  std::vector<std::int32_t> labels;
};
RawRecords parse_cifar10_records(const std::string& path);
RawRecords parse_cifar100_records(const std::string& path);

/// Re-serializes records in CIFAR-10 layout (round-trip of parse).
void write_cifar10_file(const std::string& path, const std::vector<std::uint8_t>& pixels,
                        const std::vector<std::int32_t>& labels);

/// Strict archive loaders: data_batch_1..5.bin (10000 records each) plus
/// test_batch.bin, or train.bin/test.bin for CIFAR-100. Pixels come out in
/// [0,1]; standardization happens after the train/validation split.
LoadedData load_cifar10(const std::string& dir);
LoadedData load_cifar100(const std::string& dir);

/// Deterministic shuffle by seed, then 4:1 split (40000/10000 for CIFAR).
std::pair<Dataset, Dataset> split_train_validation(const Dataset& ds, std::uint64_t seed);

struct ChannelStats {
  std::array<double, 3> mean{0, 0, 0};
  std::array<double, 3> stdev{1, 1, 1};
};

ChannelStats compute_channel_stats(const Dataset& ds);
void standardize_inplace(Dataset& ds, const ChannelStats& stats);
void standardize_image(float* image, std::int64_t chw, const ChannelStats& stats);

struct RegimeSpec {
  int s_percent = 100;  // one of 1,2,3,4,5,10,25,100
  std::uint64_t seed = 0;
};

inline const std::vector<int>& allowed_regimes() {
  static const std::vector<int> r{1, 2, 3, 4, 5, 10, 25, 100};
  return r;
}

struct SplitIndex {
  std::vector<std::int64_t> labeled;
  std::vector<std::int64_t> unlabeled;
  std::vector<std::int64_t> per_class_labeled;
};

/// Stratified, nested sampling: each class keeps one seed-determined shuffled
/// order (independent of s), and the labeled set takes a per-class prefix
/// sized by largest-remainder allocation of round(s/100 * N).
SplitIndex make_regime(const Dataset& train, const RegimeSpec& spec);

/// Class-conditioned blobs in pixel space, in [0,1] like freshly loaded
/// CIFAR. signal 0 makes labels independent of the images.
Dataset make_synthetic(std::int64_t n, int num_classes, std::uint64_t seed, double signal = 1.0);

/// Full-size CIFAR-10-format archive (5 train batches + test batch, 10000
/// records each) filled with the synthetic distribution; lets the strict
/// loader and the whole pipeline run without the real dataset.
void write_synthetic_cifar10_dir(const std::string& dir, std::uint64_t seed);

/// Keeps the first n samples (0 = all).
Dataset limit_dataset(const Dataset& ds, std::int64_t n);

struct PreparedData {
  Dataset train, validation, test;
  ChannelStats stats;
};

/// load -> split -> optional limits -> stats on the (limited) train split ->
/// standardize all three with those stats.
PreparedData prepare_cifar(const std::string& kind, const std::string& dir, std::uint64_t seed,
                           std::int64_t limit_train = 0, std::int64_t limit_val = 0,
                           std::int64_t limit_test = 0);

PreparedData prepare_synthetic(std::int64_t n_train, std::int64_t n_val, std::int64_t n_test,
                               int num_classes, std::uint64_t seed, double signal = 1.0);

}  // namespace hebb

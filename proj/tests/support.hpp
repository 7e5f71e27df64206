#pragma once
// Shared test helpers and independent oracles. Everything here recomputes
// results from first principles (plain nested loops, prefix counting, Eigen
// eigensolvers) so it stays decoupled from the library's kernel paths.

#include <unistd.h>

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hebb/network.hpp"
#include "hebb/ops.hpp"
#include "hebb/tensor.hpp"

namespace testsupport {

using hebb::DTensor;
using hebb::Shape;
using hebb::Tensor;

inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::uint64_t counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("hebbtest-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::create_directories(dir);
  return dir;
}

template <class T>
hebb::TensorT<T> random_tensor(const Shape& shape, hebb::Rng& rng, double lo = -1.0,
                               double hi = 1.0) {
  hebb::TensorT<T> t(shape);
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

/// Direct 6-nested-loop convolution, double accumulation.
inline DTensor conv2d_oracle(const DTensor& input, const DTensor& weights, const DTensor& bias,
                             int stride, int padding) {
  const std::int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::int64_t K = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
  const std::int64_t Ho = (H + 2 * padding - kh) / stride + 1;
  const std::int64_t Wo = (W + 2 * padding - kw) / stride + 1;
  DTensor out({N, K, Ho, Wo});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t k = 0; k < K; ++k)
      for (std::int64_t i = 0; i < Ho; ++i)
        for (std::int64_t j = 0; j < Wo; ++j) {
          double acc = bias[k];
          for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t a = 0; a < kh; ++a)
              for (std::int64_t b = 0; b < kw; ++b) {
                const std::int64_t ih = i * stride + a - padding;
                const std::int64_t iw = j * stride + b - padding;
                if (ih >= 0 && ih < H && iw >= 0 && iw < W)
                  acc += input.at4(n, c, ih, iw) * weights.at4(k, c, a, b);
              }
          out.at4(n, k, i, j) = acc;
        }
  return out;
}

/// Window-enumeration max pooling oracle.
inline DTensor maxpool_oracle(const DTensor& input, int k, int stride) {
  const std::int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::int64_t Ho = (H - k) / stride + 1;
  const std::int64_t Wo = (W - k) / stride + 1;
  DTensor out({N, C, Ho, Wo});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t i = 0; i < Ho; ++i)
        for (std::int64_t j = 0; j < Wo; ++j) {
          double best = input.at4(n, c, i * stride, j * stride);
          for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b)
              best = std::max(best, input.at4(n, c, i * stride + a, j * stride + b));
          out.at4(n, c, i, j) = best;
        }
  return out;
}

/// Max relative error between an analytic gradient and the central finite
/// difference of `loss` with respect to `param` (h = 1e-4, all 64-bit).
inline double max_rel_err_fd(DTensor& param, const DTensor& analytic,
                             const std::function<double()>& loss, double h = 1e-4) {
  double worst = 0.0;
  for (std::size_t i = 0; i < param.data.size(); ++i) {
    const double orig = param.data[i];
    param.data[i] = orig + h;
    const double up = loss();
    param.data[i] = orig - h;
    const double down = loss();
    param.data[i] = orig;
    const double fd = (up - down) / (2.0 * h);
    const double a = analytic.data[i];
    const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
    worst = std::max(worst, rel);
  }
  return worst;
}

/// Brute-force average precision: recomputes P_i and R_i by prefix counting
/// at every position.
inline double average_precision_oracle(const std::vector<std::uint8_t>& rel,
                                       std::int64_t total_relevant) {
  double aps = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 1; i <= rel.size(); ++i) {
    std::int64_t hits = 0;
    for (std::size_t j = 0; j < i; ++j) hits += rel[j] ? 1 : 0;
    const double precision = static_cast<double>(hits) / static_cast<double>(i);
    const double recall = static_cast<double>(hits) / static_cast<double>(total_relevant);
    aps += precision * (recall - prev_recall);
    prev_recall = recall;
  }
  return aps;
}

/// Zero-mean Gaussian samples with the given covariance eigenvalues, rotated
/// by a seeded random orthogonal matrix. Returns the sample matrix [n, d].
struct GaussianData {
  Tensor samples;
  Eigen::MatrixXd rotation;  // columns are the population eigvecs
};

inline GaussianData gaussian_with_spectrum(std::int64_t n, const std::vector<double>& eigenvalues,
                                           std::uint64_t seed) {
  const auto d = static_cast<std::int64_t>(eigenvalues.size());
  hebb::Rng rng(seed);
  Eigen::MatrixXd m(d, d);
  for (std::int64_t i = 0; i < d * d; ++i) m.data()[i] = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  Eigen::MatrixXd q = qr.householderQ();

  GaussianData out;
  out.rotation = q;
  out.samples = Tensor({n, d});
  for (std::int64_t i = 0; i < n; ++i) {
    Eigen::VectorXd z(d);
    for (std::int64_t k = 0; k < d; ++k)
      z[k] = rng.normal() * std::sqrt(eigenvalues[static_cast<std::size_t>(k)]);
    Eigen::VectorXd x = q * z;
    for (std::int64_t k = 0; k < d; ++k) out.samples.at2(i, k) = static_cast<float>(x[k]);
  }
  return out;
}

/// Eigenvectors of the empirical covariance, descending eigenvalue order.
inline Eigen::MatrixXd empirical_eigvecs(const Tensor& samples) {
  const std::int64_t n = samples.dim(0), d = samples.dim(1);
  Eigen::MatrixXd x(n, d);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t k = 0; k < d; ++k) x(i, k) = samples.at2(i, k);
  Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  Eigen::MatrixXd cov = x.transpose() * x / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  Eigen::MatrixXd v = es.eigenvectors();
  return v.rowwise().reverse();  // ascending -> descending
}

/// Principal-angle cosines between span(rows of w) and the top-m empirical
/// eigenvectors: singular values of Qw^T Qe.
inline std::vector<double> principal_angle_cosines(const Tensor& weights,
                                                   const Eigen::MatrixXd& eigvecs, int m) {
  const std::int64_t d = weights.dim(1);
  Eigen::MatrixXd w(d, weights.dim(0));
  for (std::int64_t i = 0; i < weights.dim(0); ++i)
    for (std::int64_t k = 0; k < d; ++k) w(k, i) = weights.at2(i, k);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(w);
  Eigen::MatrixXd qw = qr.householderQ() * Eigen::MatrixXd::Identity(d, weights.dim(0));
  Eigen::MatrixXd qe = eigvecs.leftCols(m);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(qw.transpose() * qe);
  std::vector<double> cosines;
  for (int i = 0; i < svd.singularValues().size(); ++i)
    cosines.push_back(svd.singularValues()[i]);
  return cosines;
}

inline double cosine(const float* a, const Eigen::VectorXd& b, std::int64_t d) {
  double dot = 0.0, na = 0.0;
  for (std::int64_t i = 0; i < d; ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
  }
  return dot / (std::sqrt(na) * b.norm());
}

inline double row_norm(const Tensor& w, std::int64_t row) {
  double acc = 0.0;
  for (std::int64_t d = 0; d < w.dim(1); ++d)
    acc += static_cast<double>(w.at2(row, d)) * w.at2(row, d);
  return std::sqrt(acc);
}

/// Tiny all-kinds config: conv -> relu -> pool -> conv -> relu -> flatten ->
/// dense, for 8x8 inputs. Two cut points.
inline hebb::NetworkConfig toy_config(int num_classes = 5) {
  hebb::NetworkConfig cfg;
  cfg.input_shape = {3, 8, 8};
  cfg.num_classes = num_classes;
  cfg.layers = {
      hebb::LayerSpec::conv(4, 3, 1, 1), hebb::LayerSpec::relu(), hebb::LayerSpec::maxpool(2, 2),
      hebb::LayerSpec::conv(6, 3, 1, 1), hebb::LayerSpec::relu(), hebb::LayerSpec::flatten(),
      hebb::LayerSpec::dense(num_classes),
  };
  cfg.cut_points = {2, 4};
  return cfg;
}

}  // namespace testsupport

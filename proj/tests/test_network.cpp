#include <doctest.h>

#include "hebb/network.hpp"
#include "support.hpp"

using namespace hebb;
using testsupport::max_rel_err_fd;
using testsupport::random_tensor;

TEST_SUITE_BEGIN("network");

TEST_CASE("default config chains 3x32x32 to the logits") {
  NetworkConfig cfg = default_network_config(10, 0.5);
  auto shapes = propagate_shapes(cfg);
  CHECK(shapes.back() == Shape{10});
  CHECK(feature_dim(cfg, 1) == 96 * 16 * 16);
  CHECK(feature_dim(cfg, 2) == 128 * 8 * 8);
  CHECK(feature_dim(cfg, 3) == 192 * 8 * 8);
  CHECK(feature_dim(cfg, 4) == 256 * 4 * 4);
  CHECK(feature_dim(cfg, 5) == 300);
  CHECK(cfg.cut_points.size() == 5);
  CHECK_NOTHROW(validate_config(cfg));
  CHECK_THROWS_AS(feature_dim(cfg, 6), ConfigError);
}

TEST_CASE("invalid chains are build errors") {
  NetworkConfig cfg;
  cfg.input_shape = {3, 8, 8};
  cfg.num_classes = 2;
  cfg.layers = {LayerSpec::dense(2)};  // dense on an unflattened input
  cfg.cut_points = {0};
  Rng rng(1);
  CHECK_THROWS_AS(build_network<float>(cfg, rng), ConfigError);

  NetworkConfig cfg2 = testsupport::toy_config(4);
  cfg2.cut_points = {2, 6};  // cut point on the classifier itself
  CHECK_THROWS_AS(validate_config(cfg2), ConfigError);

  NetworkConfig cfg3 = testsupport::toy_config(4);
  cfg3.num_classes = 7;  // classifier width mismatch
  CHECK_THROWS_AS(validate_config(cfg3), ConfigError);
}

TEST_CASE("build is deterministic under a fixed seed") {
  NetworkConfig cfg = testsupport::toy_config();
  Rng r1(42), r2(42);
  Network a = build_network<float>(cfg, r1);
  Network b = build_network<float>(cfg, r2);
  REQUIRE(a.layers.size() == b.layers.size());
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    CHECK(a.layers[i].weights.data == b.layers[i].weights.data);
    for (float v : a.layers[i].bias.data) CHECK(v == 0.0f);
  }
}

TEST_CASE("forward: eval mode is idempotent and shapes are [N, classes]") {
  NetworkConfig cfg = testsupport::toy_config(5);
  Rng rng(2);
  Network net = build_network<float>(cfg, rng);
  Rng drng(3);
  Tensor batch = random_tensor<float>({4, 3, 8, 8}, drng);
  auto t1 = forward(net, batch, false);
  auto t2 = forward(net, batch, false);
  CHECK(t1.logits().shape == Shape{4, 5});
  CHECK(t1.logits().data == t2.logits().data);
  CHECK(t1.acts.size() == net.layers.size() + 1);

  CHECK_THROWS_AS(forward(net, Tensor({4, 3, 9, 9}), false), ShapeError);
}

TEST_CASE("forward composes the tensor kernels") {
  NetworkConfig cfg;
  cfg.input_shape = {2, 6, 6};
  cfg.num_classes = 3;
  cfg.layers = {LayerSpec::conv(4, 3, 1, 1), LayerSpec::relu(), LayerSpec::flatten(),
                LayerSpec::dense(3)};
  cfg.cut_points = {1};
  Rng rng(4);
  Network net = build_network<float>(cfg, rng);
  Rng drng(5);
  Tensor batch = random_tensor<float>({2, 2, 6, 6}, drng);

  Tensor conv = conv2d_forward(batch, net.layers[0].weights, net.layers[0].bias, 1, 1);
  Tensor act = relu_forward(conv);
  Tensor logits = linear_forward(act.reshaped({2, 4 * 36}), net.layers[3].weights,
                                 net.layers[3].bias);
  auto trace = forward(net, batch, false);
  for (std::int64_t i = 0; i < logits.numel(); ++i) CHECK(trace.logits()[i] == logits[i]);
}

TEST_CASE("dropout is active only in train mode and needs an rng") {
  NetworkConfig cfg;
  cfg.input_shape = {1, 4, 4};
  cfg.num_classes = 2;
  cfg.layers = {LayerSpec::flatten(), LayerSpec::dropout(0.5), LayerSpec::dense(2)};
  cfg.cut_points = {0};
  Rng rng(6);
  Network net = build_network<float>(cfg, rng);
  Tensor batch = Tensor::full({8, 1, 4, 4}, 1.0f);
  auto eval_trace = forward(net, batch, false);
  auto eval_trace2 = forward(net, batch, false);
  CHECK(eval_trace.logits().data == eval_trace2.logits().data);
  CHECK_THROWS_AS(forward(net, batch, true), ConfigError);
  Rng drop_rng(7);
  auto train_trace = forward(net, batch, true, &drop_rng);
  CHECK(train_trace.dropout_mask[1].numel() == batch.numel());
}

TEST_CASE("backward: zero upstream grad gives zero parameter grads") {
  NetworkConfig cfg = testsupport::toy_config(4);
  Rng rng(8);
  Network net = build_network<float>(cfg, rng);
  Rng drng(9);
  Tensor batch = random_tensor<float>({2, 3, 8, 8}, drng);
  auto trace = forward(net, batch, false);
  auto grads = backward(net, trace, Tensor({2, 4}));
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (!net.layers[i].spec.has_params()) continue;
    for (float v : grads.weights[i].data) CHECK(v == 0.0f);
    for (float v : grads.bias[i].data) CHECK(v == 0.0f);
  }
}

TEST_CASE("classifier-only network backward equals linear_backward") {
  NetworkConfig cfg;
  cfg.input_shape = {1, 2, 2};
  cfg.num_classes = 3;
  cfg.layers = {LayerSpec::flatten(), LayerSpec::dense(3)};
  cfg.cut_points = {0};
  Rng rng(10);
  Network net = build_network<float>(cfg, rng);
  Rng drng(11);
  Tensor batch = random_tensor<float>({4, 1, 2, 2}, drng);
  Tensor grad_logits = random_tensor<float>({4, 3}, drng);

  auto trace = forward(net, batch, false);
  auto grads = backward(net, trace, grad_logits);
  auto want = linear_backward(grad_logits, batch.reshaped({4, 4}), net.layers[1].weights);
  CHECK(grads.weights[1].data == want.weights.data);
  CHECK(grads.bias[1].data == want.bias.data);
}

TEST_CASE("whole-network gradients match finite differences on the toy config") {
  NetworkConfig cfg = testsupport::toy_config(5);
  Rng rng(12);
  NetworkT<double> net = build_network<double>(cfg, rng);
  Rng drng(13);
  DTensor batch = random_tensor<double>({2, 3, 8, 8}, drng);
  std::vector<std::int32_t> labels{1, 4};

  auto loss = [&]() {
    auto trace = forward(net, batch, false);
    return softmax_cross_entropy(trace.logits(), labels).loss;
  };
  auto trace = forward(net, batch, false);
  auto xent = softmax_cross_entropy(trace.logits(), labels);
  auto grads = backward(net, trace, xent.grad_logits);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (!net.layers[i].spec.has_params()) continue;
    CHECK(max_rel_err_fd(net.layers[i].weights, grads.weights[i], loss) <= 1e-3);
    CHECK(max_rel_err_fd(net.layers[i].bias, grads.bias[i], loss) <= 1e-3);
  }
}

TEST_CASE("cut_at keeps layers 1..k, adds a fresh flat head, leaves the source alone") {
  NetworkConfig cfg = default_network_config(10, 0.5);
  Rng rng(14);
  Network net = build_network<float>(cfg, rng);
  Network snapshot = net;

  Rng head_rng(15);
  Network cut1 = cut_at(net, 1, 10, head_rng);
  // conv1 + relu + pool, then flatten, dropout, classifier
  CHECK(cut1.layers.size() == 6);
  CHECK(cut1.layers[0].weights.data == net.layers[0].weights.data);
  CHECK(cut1.layers.back().spec.kind == LayerKind::dense);
  CHECK(cut1.layers.back().weights.dim(1) == 96 * 16 * 16);
  CHECK(cut1.config.cut_points == std::vector<int>{2});

  Network cut5 = cut_at(net, 5, 10, head_rng);
  CHECK(cut5.config.layers.size() == net.config.layers.size());  // same depth, new head
  CHECK(cut5.layers.back().weights.dim(1) == 300);
  CHECK(cut5.layers.back().weights.data != net.layers.back().weights.data);
  for (std::size_t i = 0; i + 2 < cut5.layers.size(); ++i)
    CHECK(cut5.layers[i].weights.data == net.layers[i].weights.data);

  CHECK_THROWS_AS(cut_at(net, 0, 10, head_rng), ConfigError);
  CHECK_THROWS_AS(cut_at(net, 6, 10, head_rng), ConfigError);

  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    CHECK(net.layers[i].weights.data == snapshot.layers[i].weights.data);
    CHECK(net.layers[i].bias.data == snapshot.layers[i].bias.data);
  }
}

TEST_CASE("extract_features: deterministic, flat, equal to the forward trace at the cut") {
  NetworkConfig cfg = testsupport::toy_config(4);
  Rng rng(16);
  Network net = build_network<float>(cfg, rng);
  Rng drng(17);
  Tensor one = random_tensor<float>({1, 3, 8, 8}, drng);
  Tensor batch({2, 3, 8, 8});
  std::copy_n(one.ptr(), one.numel(), batch.ptr());
  std::copy_n(one.ptr(), one.numel(), batch.ptr() + one.numel());

  Tensor f1 = extract_features(net, batch, 1);
  CHECK(f1.shape == Shape{2, feature_dim(cfg, 1)});
  for (std::int64_t d = 0; d < f1.dim(1); ++d) CHECK(f1.at2(0, d) == f1.at2(1, d));

  // deepest cut equals the activations feeding the classifier (the batched
  // forward and the per-sample extraction differ only in f32 rounding)
  Tensor f2 = extract_features(net, batch, 2);
  auto trace = forward(net, batch, false);
  const Tensor& cut_act = trace.acts[static_cast<std::size_t>(cfg.cut_points[1]) + 1];
  REQUIRE(f2.numel() == cut_act.numel());
  for (std::int64_t i = 0; i < f2.numel(); ++i)
    CHECK(f2[i] == doctest::Approx(cut_act[i]).epsilon(1e-6));

  Tensor again = extract_features(net, batch, 2);
  CHECK(again.data == f2.data);
}

TEST_SUITE_END();

#include <doctest.h>

#include "hebb/ops.hpp"
#include "hebb/tensor.hpp"
#include "support.hpp"

using namespace hebb;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("shape and buffer must agree") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<float>(5)), ShapeError);
  CHECK_THROWS_AS(Tensor({0, 3}), ShapeError);
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
  CHECK(t.reshaped({3, 2}).shape == Shape{3, 2});
}

TEST_CASE("check_finite rejects NaN and Inf") {
  Tensor t({3});
  t[1] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(check_finite(t, "test"), NumericError);
  t[1] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(check_finite(t, "test"), NumericError);
  t[1] = 1.0f;
  CHECK_NOTHROW(check_finite(t, "test"));
}

TEST_CASE("rng streams are seed-determined") {
  Rng a(1234), b(1234), c(99);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 1000; ++i) {
    const double va = a.uniform();
    all_equal = all_equal && va == b.uniform();
    any_diff = any_diff || va != c.uniform();
    CHECK(va >= 0.0);
    CHECK(va < 1.0);
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("rng state round-trips mid-stream") {
  Rng a(7);
  for (int i = 0; i < 13; ++i) a.normal();
  const std::string snap = a.state();
  std::vector<double> expect;
  for (int i = 0; i < 20; ++i) expect.push_back(a.uniform());
  Rng b(0);
  b.set_state(snap);
  for (int i = 0; i < 20; ++i) CHECK(b.uniform() == expect[static_cast<std::size_t>(i)]);
  CHECK_THROWS_AS(b.set_state("not a state"), IoError);
}

TEST_CASE("rng below stays in range and shuffle permutes") {
  Rng r(5);
  for (int i = 0; i < 200; ++i) CHECK(r.below(7) < 7);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto orig = v;
  r.shuffle(v);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == orig);
}

TEST_CASE("derive_seed separates purposes") {
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
  CHECK(derive_seed(1, "x", 3) != derive_seed(1, "x", 4));
}

TEST_CASE("xavier bounds hold over 1e4 draws") {
  Rng rng(11);
  Tensor t = xavier_init<float>({50, 200}, rng);  // fan_in 200, fan_out 50
  const double a = std::sqrt(6.0 / 250.0);
  for (float v : t.data) {
    CHECK(v >= -a);
    CHECK(v <= a);
  }
}

TEST_CASE("xavier is reproducible and conv fans follow C*kh*kw") {
  Rng r1(3), r2(3);
  Tensor a = xavier_init<float>({8, 4, 3, 3}, r1);
  Tensor b = xavier_init<float>({8, 4, 3, 3}, r2);
  CHECK(a.data == b.data);
  // fan_in 4*9=36, fan_out 8*9=72 -> bound sqrt(6/108)
  const double bound = std::sqrt(6.0 / 108.0);
  for (float v : a.data) CHECK(std::abs(v) <= bound);
  CHECK_THROWS_AS(xavier_init<float>({5}, r1), ShapeError);
}

TEST_CASE("xavier sample variance near 2/(fan_in+fan_out)") {
  Rng rng(17);
  Tensor t = xavier_init<float>({300, 400}, rng);  // 120k draws
  double mean = 0.0;
  for (float v : t.data) mean += v;
  mean /= static_cast<double>(t.numel());
  double var = 0.0;
  for (float v : t.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(t.numel());
  const double want = 2.0 / 700.0;
  CHECK(var == doctest::Approx(want).epsilon(0.10));
}

TEST_SUITE_END();

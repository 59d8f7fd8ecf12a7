#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "dcan/errors.hpp"
#include "dcan/nn.hpp"
#include "oracles.hpp"

using namespace dcan;
using namespace dcan::nn;

namespace {

Conv1d make_conv1d(ParamStore& ps, const std::string& name, std::size_t ci,
                   std::size_t co, int k, int d, Rng& rng) {
  Conv1d c(ps, name, ci, co, k, d);
  oracles::fill_uniform(c.weight, rng);
  oracles::fill_uniform(c.bias, rng);
  return c;
}

}  // namespace

TEST_CASE("conv1d shape contract: 400 channels in, 128 filters, length kept") {
  ParamStore ps(1);
  Conv1d conv(ps, "c", 400, 128, 3, 1);
  Tensor x({1, 400, 100}, 0.1);
  Tensor y = conv.forward(x);
  CHECK(y.shape() == Shape{1, 128, 100});
}

TEST_CASE("conv1d identity kernel reproduces the input channel") {
  ParamStore ps(1);
  Conv1d conv(ps, "c", 1, 1, 3, 1);
  conv.weight.vec() = {0.0, 1.0, 0.0};
  conv.bias.vec() = {0.0};
  Rng rng(3);
  Tensor x({1, 1, 12});
  oracles::fill_uniform(x, rng);
  Tensor y = conv.forward(x);
  for (std::size_t t = 0; t < 12; ++t) CHECK(y[t] == x[t]);
}

TEST_CASE("conv1d matches the direct-summation oracle, dilations 1 and 4") {
  Rng rng(17);
  for (int dil : {1, 4}) {
    ParamStore ps(2);
    Conv1d conv = make_conv1d(ps, "c", 3, 5, 3, dil, rng);
    Tensor x({2, 3, 19});
    oracles::fill_uniform(x, rng);
    Tensor y = conv.forward(x);
    auto ref = oracles::naive_conv1d(x.vec(), conv.weight.vec(),
                                     conv.bias.vec(), 2, 3, 19, 5, 3, dil);
    REQUIRE(y.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      CHECK(std::abs(y[i] - ref[i]) < 1e-10);
    }
  }
}

TEST_CASE("conv1d channel mismatch is rejected") {
  ParamStore ps(1);
  Conv1d conv(ps, "c", 4, 2, 3, 1);
  Tensor x({1, 3, 10}, 0.0);
  CHECK_THROWS_AS(conv.forward(x), ShapeError);
}

TEST_CASE("dilation-subsampling equivalence on a delta input") {
  Rng rng(23);
  const int r = 3;
  ParamStore ps(4);
  Conv1d dil(ps, "d", 1, 1, 3, r);
  oracles::fill_uniform(dil.weight, rng);
  dil.bias.vec() = {0.0};
  ParamStore ps2(4);
  Conv1d dense(ps2, "s", 1, 1, 3, 1);
  dense.weight.vec() = dil.weight.vec();
  dense.bias.vec() = {0.0};

  const std::size_t T = 21, t0 = 10;
  Tensor x({1, 1, T}, 0.0);
  x[t0] = 1.7;
  Tensor yd = dil.forward(x);

  const std::size_t Ts = 7, c0 = 3;  // subsampled grid, delta at center
  Tensor xs({1, 1, Ts}, 0.0);
  xs[c0] = 1.7;
  Tensor ys = dense.forward(xs);

  for (int j = -1; j <= 1; ++j) {
    CHECK(yd[t0 + j * r] == doctest::Approx(ys[c0 + j]).epsilon(1e-12));
  }
  // Between the r-spaced taps the dilated response is exactly zero.
  for (std::size_t t = 0; t < T; ++t) {
    if ((static_cast<int>(t) - static_cast<int>(t0)) % r != 0) {
      CHECK(yd[t] == 0.0);
    }
  }
}

TEST_CASE("norm standardizes per sample and channel") {
  ParamStore ps(1);
  Norm norm(ps, "n", 1);
  {
    Tensor x({1, 1, 4}, {5.0, 5.0, 5.0, 5.0});
    Tensor y = norm.forward(x);
    for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == 0.0);  // epsilon guard
  }
  {
    Tensor x({1, 1, 2}, {1.0, 3.0});
    Tensor y = norm.forward(x);
    CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-3));
    CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-3));
  }
  {
    norm.scale.vec() = {2.0};
    norm.shift.vec() = {1.0};
    Tensor x({1, 1, 2}, {1.0, 3.0});
    Tensor y = norm.forward(x);
    CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-3));
    CHECK(y[1] == doctest::Approx(3.0).epsilon(1e-3));
  }
  {
    Tensor x({1, 1, 1}, {2.0});
    CHECK_THROWS_AS(norm.forward(x), ShapeError);
  }
}

TEST_CASE("relu and sigmoid values") {
  Tensor x({3}, {-2.0, 0.0, 3.0});
  Tensor r = relu(x);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 3.0);

  CHECK(sigmoid(Tensor::scalar(0.0)).value() == 0.5);
  CHECK(sigmoid(Tensor::scalar(2.0)).value() ==
        doctest::Approx(0.880797).epsilon(1e-6));
}

TEST_CASE("conv2d identity and averaging kernels") {
  ParamStore ps(1);
  Conv2d conv(ps, "c", 1, 1, 3);
  Rng rng(31);
  Tensor x({1, 1, 3, 3});
  oracles::fill_uniform(x, rng);

  conv.weight.vec().assign(9, 0.0);
  conv.weight[4] = 1.0;  // center tap
  conv.bias.vec() = {0.0};
  Tensor y = conv.forward(x);
  for (std::size_t i = 0; i < 9; ++i) CHECK(y[i] == x[i]);

  conv.weight.vec().assign(9, 1.0 / 9.0);
  y = conv.forward(x);
  double mean = 0.0;
  for (std::size_t i = 0; i < 9; ++i) mean += x[i] / 9.0;
  CHECK(y[4] == doctest::Approx(mean).epsilon(1e-12));  // center sees all taps
}

TEST_CASE("conv2d matches the direct-summation oracle") {
  Rng rng(37);
  ParamStore ps(5);
  Conv2d conv(ps, "c", 2, 3, 3);
  oracles::fill_uniform(conv.weight, rng);
  oracles::fill_uniform(conv.bias, rng);
  Tensor x({2, 2, 5, 6});
  oracles::fill_uniform(x, rng);
  Tensor y = conv.forward(x);
  auto ref = oracles::naive_conv2d(x.vec(), conv.weight.vec(), conv.bias.vec(),
                                   2, 2, 5, 6, 3, 3);
  REQUIRE(y.size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(std::abs(y[i] - ref[i]) < 1e-10);
  }
}

TEST_CASE("deconv2d doubles spatial dims") {
  ParamStore ps(1);
  Deconv2d up(ps, "u", 4, 2);
  Tensor x({1, 4, 50, 50}, 0.25);
  Tensor y = up.forward(x);
  CHECK(y.shape() == Shape{1, 2, 100, 100});
}

TEST_CASE("deconv2d on a single input value with all-ones kernel") {
  ParamStore ps(1);
  Deconv2d up(ps, "u", 1, 1);
  up.weight.vec().assign(16, 1.0);
  up.bias.vec() = {0.0};
  const double v = 2.5;
  Tensor x({1, 1, 1, 1}, v);
  Tensor y = up.forward(x);
  REQUIRE(y.shape() == Shape{1, 1, 2, 2});
  for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == v);  // one tap per output
}

TEST_CASE("deconv2d matches scatter oracle") {
  Rng rng(41);
  ParamStore ps(6);
  Deconv2d up(ps, "u", 3, 2);
  oracles::fill_uniform(up.weight, rng);
  oracles::fill_uniform(up.bias, rng);
  Tensor x({2, 3, 4, 5});
  oracles::fill_uniform(x, rng);
  Tensor y = up.forward(x);
  auto ref = oracles::naive_deconv2d(x.vec(), up.weight.vec(), up.bias.vec(), 2,
                                     3, 4, 5, 2);
  REQUIRE(y.size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(std::abs(y[i] - ref[i]) < 1e-10);
  }
}

TEST_CASE("deconv2d is the adjoint of a stride-2 conv with the same kernel") {
  Rng rng(43);
  ParamStore ps(7);
  Deconv2d up(ps, "u", 3, 2);
  oracles::fill_uniform(up.weight, rng);
  up.bias.vec().assign(up.bias.size(), 0.0);

  Tensor x({1, 3, 4, 4});
  Tensor y({1, 2, 8, 8});
  oracles::fill_uniform(x, rng);
  oracles::fill_uniform(y, rng);

  Tensor dx = up.forward(x);  // [1,2,8,8]
  double lhs = 0.0;
  for (std::size_t i = 0; i < dx.size(); ++i) lhs += dx[i] * y[i];

  auto cy = oracles::naive_conv2d_stride2(y.vec(), up.weight.vec(), 1, 2, 8, 8, 3);
  double rhs = 0.0;
  for (std::size_t i = 0; i < cy.size(); ++i) rhs += cy[i] * x[i];

  CHECK(std::abs(lhs - rhs) < 1e-8);
}

TEST_CASE("linear layer matches matmul plus bias") {
  Rng rng(47);
  ParamStore ps(8);
  Linear lin(ps, "l", 4, 3);
  oracles::fill_uniform(lin.weight, rng);
  oracles::fill_uniform(lin.bias, rng);
  Tensor x({5, 4});
  oracles::fill_uniform(x, rng);
  Tensor y = lin.forward(x);
  auto ref = oracles::naive_matmul(x.vec(), lin.weight.vec(), 5, 4, 3);
  for (std::size_t n = 0; n < 5; ++n) {
    for (std::size_t o = 0; o < 3; ++o) {
      CHECK(y[n * 3 + o] ==
            doctest::Approx(ref[n * 3 + o] + lin.bias[o]).epsilon(1e-12));
    }
  }
}

TEST_CASE("parameter init: deterministic per seed, near-zero mean") {
  ParamStore a(99), b(99), c(100);
  Tensor wa = a.create("w", {10000}, "conv1d", 100);
  Tensor wb = b.create("w", {10000}, "conv1d", 100);
  Tensor wc = c.create("w", {10000}, "conv1d", 100);
  bool same = true, diff = false;
  for (std::size_t i = 0; i < wa.size(); ++i) {
    same = same && wa[i] == wb[i];
    diff = diff || wa[i] != wc[i];
  }
  CHECK(same);
  CHECK(diff);

  double mean = 0.0;
  for (std::size_t i = 0; i < wa.size(); ++i) mean += wa[i];
  mean /= static_cast<double>(wa.size());
  const double bound = std::sqrt(6.0 / 100.0);
  const double sigma_mean = bound / std::sqrt(3.0 * 10000.0);
  CHECK(std::abs(mean) < 3.0 * sigma_mean);
}

TEST_CASE("finite differences: all nn layers") {
  Rng rng(53);

  SUBCASE("conv1d") {
    for (int dil : {1, 2}) {
      ParamStore ps(11);
      Conv1d conv(ps, "c", 2, 3, 3, dil);
      Tensor x({1, 2, 9}, 0.0, true);
      oracles::fill_uniform(x, rng);
      auto res = oracles::check_gradients(
          [&]() {
            Tensor y = conv.forward(x);
            return sum(y * y);
          },
          {x, conv.weight, conv.bias});
      CHECK_MESSAGE(res.ok, res.detail);
    }
  }

  SUBCASE("norm") {
    ParamStore ps(12);
    Norm norm(ps, "n", 2);
    Tensor x({2, 2, 6}, 0.0, true);
    oracles::fill_uniform(x, rng);
    auto res = oracles::check_gradients(
        [&]() {
          Tensor y = norm.forward(x);
          return sum(y * y * y);  // cubic keeps scale grads nonzero
        },
        {x, norm.scale, norm.shift});
    CHECK_MESSAGE(res.ok, res.detail);
  }

  SUBCASE("conv2d") {
    ParamStore ps(13);
    Conv2d conv(ps, "c", 2, 2, 3);
    Tensor x({1, 2, 4, 4}, 0.0, true);
    oracles::fill_uniform(x, rng);
    auto res = oracles::check_gradients(
        [&]() {
          Tensor y = conv.forward(x);
          return sum(y * y);
        },
        {x, conv.weight, conv.bias});
    CHECK_MESSAGE(res.ok, res.detail);
  }

  SUBCASE("deconv2d") {
    ParamStore ps(14);
    Deconv2d up(ps, "u", 2, 1);
    Tensor x({1, 2, 3, 3}, 0.0, true);
    oracles::fill_uniform(x, rng);
    auto res = oracles::check_gradients(
        [&]() {
          Tensor y = up.forward(x);
          return sum(y * y);
        },
        {x, up.weight, up.bias});
    CHECK_MESSAGE(res.ok, res.detail);
  }

  SUBCASE("linear") {
    ParamStore ps(15);
    Linear lin(ps, "l", 3, 2);
    Tensor x({4, 3}, 0.0, true);
    oracles::fill_uniform(x, rng);
    auto res = oracles::check_gradients(
        [&]() {
          Tensor y = lin.forward(x);
          return sum(y * y);
        },
        {x, lin.weight, lin.bias});
    CHECK_MESSAGE(res.ok, res.detail);
  }

  SUBCASE("activations") {
    Tensor x({6}, 0.0, true);
    oracles::fill_uniform(x, rng, 0.3, 1.5);  // away from the relu kink
    auto res = oracles::check_gradients(
        [&]() { return sum(relu(x) * sigmoid(x)); }, {x});
    CHECK_MESSAGE(res.ok, res.detail);
  }
}

TEST_CASE("layers do not mutate inputs and preserve the batch dim") {
  Rng rng(59);
  ParamStore ps(16);
  Conv1d conv(ps, "c", 2, 2, 3, 2);
  Norm norm(ps, "n", 2);
  Tensor x({3, 2, 8});
  oracles::fill_uniform(x, rng);
  const std::vector<double> x0 = x.vec();
  Tensor y1 = conv.forward(x);
  Tensor y2 = norm.forward(x);
  CHECK(x.vec() == x0);
  CHECK(y1.shape()[0] == 3);
  CHECK(y2.shape()[0] == 3);
}

TEST_CASE("checkpoint save/load round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "dcan_test_ckpt";
  fs::remove_all(dir);

  ParamStore ps(77);
  Tensor w = ps.create("layer.weight", {3, 2}, "linear", 3);
  Tensor b = ps.create_const("layer.bias", {2}, "linear", 0.0);
  b[0] = 0.5;
  ps.save(dir);

  ParamStore loaded = ParamStore::load(dir);
  Tensor w2 = loaded.create("layer.weight", {3, 2}, "linear", 3);
  Tensor b2 = loaded.create("layer.bias", {2}, "linear", 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(w2[i] == w[i]);
  CHECK(b2[0] == 0.5);
  CHECK(w2.requires_grad());

  // Wrong shape on restore is a config error.
  ParamStore loaded2 = ParamStore::load(dir);
  CHECK_THROWS_AS(loaded2.create("layer.weight", {2, 2}, "linear", 2),
                  ConfigError);
  fs::remove_all(dir);
}

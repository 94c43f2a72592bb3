#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <vector>

#include "vsd/tensor.hpp"

using namespace vsd;

namespace {

template <typename T>
Tensor<T> make_leaf(Tape<T>& tape, const Shape& shape,
                    const std::vector<T>& init, const char* label = "leaf") {
  return tape.leaf(shape, std::span<const T>(init), label);
}

// Plain nested-loop cross-correlation used as the reference for conv2d.
std::vector<double> conv_reference(const std::vector<double>& x, Shape xs,
                                   const std::vector<double>& w, Shape ws,
                                   const std::vector<double>& b, int stride,
                                   int padding, Shape* out_shape) {
  const int oh = (xs.h + 2 * padding - ws.h) / stride + 1;
  const int ow = (xs.w + 2 * padding - ws.w) / stride + 1;
  *out_shape = {xs.n, ws.n, oh, ow};
  std::vector<double> out(size_t(out_shape->numel()), 0.0);
  for (int n = 0; n < xs.n; ++n) {
    for (int co = 0; co < ws.n; ++co) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b[co];
          for (int ci = 0; ci < xs.c; ++ci) {
            for (int ky = 0; ky < ws.h; ++ky) {
              for (int kx = 0; kx < ws.w; ++kx) {
                const int iy = oy * stride + ky - padding;
                const int ix = ox * stride + kx - padding;
                if (iy < 0 || iy >= xs.h || ix < 0 || ix >= xs.w) continue;
                const size_t xi =
                    ((size_t(n) * xs.c + ci) * xs.h + iy) * xs.w + ix;
                const size_t wi =
                    ((size_t(co) * ws.c + ci) * ws.h + ky) * ws.w + kx;
                acc += x[xi] * w[wi];
              }
            }
          }
          out[((size_t(n) * ws.n + co) * oh + oy) * ow + ox] = acc;
        }
      }
    }
  }
  return out;
}

std::vector<double> random_vec(size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> out(n);
  for (double& v : out) v = u(rng);
  return out;
}

}  // namespace

TEST_CASE("convolving ones with a ones kernel counts the overlap") {
  Tape<double> tape;
  const Tensor<double> x =
      make_leaf(tape, {1, 1, 4, 4}, std::vector<double>(16, 1.0));
  const Tensor<double> w =
      make_leaf(tape, {1, 1, 3, 3}, std::vector<double>(9, 1.0));
  const Tensor<double> b = make_leaf(tape, {1, 1, 1, 1}, {0.0});
  const Tensor<double> y = conv2d(x, w, b, 1, 1);
  REQUIRE((y.shape() == Shape{1, 1, 4, 4}));
  CHECK(y.values()[5] == 9.0);   // interior: full 3x3 support
  CHECK(y.values()[0] == 4.0);   // corner: 2x2 support
  CHECK(y.values()[1] == 6.0);   // edge: 2x3 support
  CHECK(y.values()[15] == 4.0);
}

TEST_CASE("an identity kernel reproduces the input") {
  Tape<double> tape;
  std::mt19937_64 rng(1);
  const std::vector<double> xv = random_vec(2 * 3 * 5 * 4, rng);
  const Tensor<double> x = make_leaf(tape, {2, 3, 5, 4}, xv);
  std::vector<double> wv(3 * 3 * 3 * 3, 0.0);
  for (int co = 0; co < 3; ++co) {
    wv[((co * 3 + co) * 3 + 1) * 3 + 1] = 1.0;  // center tap of channel co
  }
  const Tensor<double> w = make_leaf(tape, {3, 3, 3, 3}, wv);
  const Tensor<double> b =
      make_leaf(tape, {1, 3, 1, 1}, std::vector<double>(3, 0.0));
  const Tensor<double> y = conv2d(x, w, b, 1, 1);
  REQUIRE(y.shape() == x.shape());
  for (size_t i = 0; i < xv.size(); ++i) {
    CHECK(y.values()[i] == doctest::Approx(xv[i]).epsilon(1e-14));
  }
}

TEST_CASE("stride-2 convolution halves the spatial extent") {
  Tape<double> tape;
  const Tensor<double> x =
      make_leaf(tape, {1, 2, 8, 6}, std::vector<double>(2 * 8 * 6, 0.5));
  const Tensor<double> w =
      make_leaf(tape, {4, 2, 3, 3}, std::vector<double>(4 * 2 * 9, 0.1));
  const Tensor<double> b =
      make_leaf(tape, {1, 4, 1, 1}, std::vector<double>(4, 0.0));
  const Tensor<double> y = conv2d(x, w, b, 2, 1);
  CHECK((y.shape() == Shape{1, 4, 4, 3}));
}

TEST_CASE("convolution matches the nested-loop reference") {
  std::mt19937_64 rng(2);
  for (int stride : {1, 2}) {
    for (int padding : {0, 1}) {
      const Shape xs{2, 3, 7, 6};
      const Shape ws{4, 3, 3, 3};
      const std::vector<double> xv = random_vec(size_t(xs.numel()), rng);
      const std::vector<double> wv = random_vec(size_t(ws.numel()), rng);
      const std::vector<double> bv = random_vec(4, rng);
      Tape<double> tape;
      const Tensor<double> y =
          conv2d(make_leaf(tape, xs, xv), make_leaf(tape, ws, wv),
                 make_leaf(tape, {1, 4, 1, 1}, bv), stride, padding);
      Shape ref_shape;
      const std::vector<double> ref =
          conv_reference(xv, xs, wv, ws, bv, stride, padding, &ref_shape);
      REQUIRE(y.shape() == ref_shape);
      for (size_t i = 0; i < ref.size(); ++i) {
        CHECK(y.values()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("convolution gradients agree with finite differences") {
  std::mt19937_64 rng(3);
  const Shape xs{1, 2, 5, 4};
  const Shape ws{3, 2, 3, 3};
  const std::vector<double> xv = random_vec(size_t(xs.numel()), rng);
  const std::vector<double> wv = random_vec(size_t(ws.numel()), rng);
  const std::vector<double> bv = random_vec(3, rng);

  // Scalar head with fixed coefficients so the root is differentiable.
  Shape ys;
  {
    Shape tmp;
    conv_reference(xv, xs, wv, ws, bv, 1, 1, &tmp);
    ys = tmp;
  }
  const std::vector<double> head = random_vec(size_t(ys.numel()), rng);

  const auto loss_at = [&](const std::vector<double>& x,
                           const std::vector<double>& w,
                           const std::vector<double>& b) {
    Shape tmp;
    const std::vector<double> y = conv_reference(x, xs, w, ws, b, 1, 1, &tmp);
    double acc = 0.0;
    for (size_t i = 0; i < y.size(); ++i) acc += y[i] * head[i];
    return acc;
  };

  Tape<double> tape;
  const Tensor<double> x = make_leaf(tape, xs, xv);
  const Tensor<double> w = make_leaf(tape, ws, wv);
  const Tensor<double> b = make_leaf(tape, {1, 3, 1, 1}, bv);
  const Tensor<double> y = conv2d(x, w, b, 1, 1);
  const Tensor<double> root = weighted_sum(y, std::span<const double>(head));
  tape.backward(root);

  const double step = 1e-6;
  std::mt19937_64 pick_rng(4);
  const auto check_some = [&](std::span<double> grad, std::vector<double> base,
                              auto&& eval) {
    std::uniform_int_distribution<size_t> pick(0, base.size() - 1);
    for (int probe = 0; probe < 10; ++probe) {
      const size_t i = pick(pick_rng);
      std::vector<double> plus = base, minus = base;
      plus[i] += step;
      minus[i] -= step;
      const double fd = (eval(plus) - eval(minus)) / (2.0 * step);
      CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-6));
    }
  };
  check_some(x.grad(), xv,
             [&](const std::vector<double>& v) { return loss_at(v, wv, bv); });
  check_some(w.grad(), wv,
             [&](const std::vector<double>& v) { return loss_at(xv, v, bv); });
  check_some(b.grad(), bv,
             [&](const std::vector<double>& v) { return loss_at(xv, wv, v); });
}

TEST_CASE("nearest upsampling replicates each sample into a 2x2 block") {
  Tape<double> tape;
  const Tensor<double> x = make_leaf(tape, {1, 1, 1, 1}, {7.0});
  const Tensor<double> y = upsample_nearest2x(x);
  REQUIRE((y.shape() == Shape{1, 1, 2, 2}));
  for (double v : y.values()) CHECK(v == 7.0);

  const Tensor<double> root =
      weighted_sum<double>(y, std::vector<double>(4, 1.0));
  tape.backward(root);
  CHECK(x.grad()[0] == 4.0);
}

TEST_CASE("nearest upsampling indexes the source at half resolution") {
  Tape<double> tape;
  const std::vector<double> xv = {1, 2, 3, 4, 5, 6};  // 2x3
  const Tensor<double> x = make_leaf(tape, {1, 1, 2, 3}, xv);
  const Tensor<double> y = upsample_nearest2x(x);
  REQUIRE((y.shape() == Shape{1, 1, 4, 6}));
  for (int oy = 0; oy < 4; ++oy) {
    for (int ox = 0; ox < 6; ++ox) {
      CHECK(y.values()[oy * 6 + ox] == xv[(oy / 2) * 3 + ox / 2]);
    }
  }
}

TEST_CASE("channel concatenation stacks along the channel axis") {
  Tape<double> tape;
  std::vector<double> av(2 * 4 * 4), bv(3 * 4 * 4);
  for (size_t i = 0; i < av.size(); ++i) av[i] = double(i);
  for (size_t i = 0; i < bv.size(); ++i) bv[i] = 100.0 + double(i);
  const Tensor<double> a = make_leaf(tape, {1, 2, 4, 4}, av);
  const Tensor<double> b = make_leaf(tape, {1, 3, 4, 4}, bv);
  const Tensor<double> y = concat_channels(a, b);
  REQUIRE((y.shape() == Shape{1, 5, 4, 4}));
  CHECK(y.values()[0] == 0.0);
  CHECK(y.values()[2 * 16] == 100.0);  // first entry of the second block
  CHECK(y.values()[5 * 16 - 1] == 100.0 + 3 * 16 - 1);

  std::vector<double> head(5 * 16, 0.0);
  head[3] = 1.0;            // lands in a
  head[2 * 16 + 5] = 2.0;   // lands in b
  const Tensor<double> root = weighted_sum(y, std::span<const double>(head));
  tape.backward(root);
  CHECK(a.grad()[3] == 1.0);
  CHECK(b.grad()[5] == 2.0);

  const Tensor<double> c = make_leaf(tape, {1, 1, 2, 4}, std::vector<double>(8, 0.0));
  CHECK_THROWS_AS(concat_channels(a, c), ConfigError);
}

TEST_CASE("leaky relu scales only the negative half") {
  Tape<double> tape;
  const Tensor<double> x = make_leaf(tape, {1, 1, 1, 4}, {-1.0, 0.0, 2.0, -0.5});
  const Tensor<double> y = leaky_relu(x, 0.2);
  CHECK(y.values()[0] == -0.2);
  CHECK(y.values()[1] == 0.0);
  CHECK(y.values()[2] == 2.0);
  CHECK(y.values()[3] == -0.1);

  const Tensor<double> root =
      weighted_sum<double>(y, std::vector<double>(4, 1.0));
  tape.backward(root);
  CHECK(x.grad()[0] == 0.2);
  CHECK(x.grad()[2] == 1.0);
}

TEST_CASE("relu clamps negatives to zero") {
  Tape<double> tape;
  const Tensor<double> x = make_leaf(tape, {1, 1, 1, 2}, {-3.0, 3.0});
  const Tensor<double> y = relu(x);
  CHECK(y.values()[0] == 0.0);
  CHECK(y.values()[1] == 3.0);
}

TEST_CASE("sigmoid is centered at one half with slope one quarter") {
  Tape<double> tape;
  const Tensor<double> x = make_leaf(tape, {1, 1, 1, 1}, {0.0});
  const Tensor<double> y = sigmoid(x);
  CHECK(y.values()[0] == 0.5);
  const Tensor<double> root = weighted_sum<double>(y, std::vector<double>{1.0});
  tape.backward(root);
  CHECK(x.grad()[0] == 0.25);
}

TEST_CASE("sigmoid saturates smoothly at the tails") {
  Tape<double> tape;
  const Tensor<double> x = make_leaf(tape, {1, 1, 1, 2}, {40.0, -40.0});
  const Tensor<double> y = sigmoid(x);
  CHECK(y.values()[0] == doctest::Approx(1.0));
  CHECK(y.values()[1] == doctest::Approx(0.0));
  CHECK(std::isfinite(y.values()[1]));
}

TEST_CASE("scale and shift is affine in the input") {
  Tape<double> tape;
  const Tensor<double> x = make_leaf(tape, {1, 1, 1, 2}, {0.0, 1.0});
  const Tensor<double> y = scale_shift(x, 3.0, -1.0);
  CHECK(y.values()[0] == -1.0);
  CHECK(y.values()[1] == 2.0);
  const Tensor<double> root =
      weighted_sum<double>(y, std::vector<double>{1.0, 1.0});
  tape.backward(root);
  CHECK(x.grad()[0] == 3.0);  // dy/dx is the scale
  CHECK(x.grad()[1] == 3.0);
}

TEST_CASE("addition accumulates gradients into both operands") {
  Tape<double> tape;
  const Tensor<double> a = make_leaf(tape, {1, 1, 1, 2}, {1.0, 2.0});
  const Tensor<double> b = make_leaf(tape, {1, 1, 1, 2}, {10.0, 20.0});
  const Tensor<double> y = add(a, b);
  CHECK(y.values()[0] == 11.0);
  CHECK(y.values()[1] == 22.0);
  const Tensor<double> doubled = add(a, a);
  const Tensor<double> root =
      weighted_sum<double>(add(y, doubled), std::vector<double>{1.0, 1.0});
  tape.backward(root);
  CHECK(a.grad()[0] == 3.0);  // once through y, twice through doubled
  CHECK(b.grad()[0] == 1.0);
}

TEST_CASE("detach copies values but stops gradients") {
  Tape<double> tape;
  const Tensor<double> x = make_leaf(tape, {1, 1, 1, 2}, {5.0, -5.0});
  const Tensor<double> y = detach(x);
  CHECK(y.values()[0] == 5.0);
  CHECK(y.values()[1] == -5.0);
  const Tensor<double> root =
      weighted_sum<double>(y, std::vector<double>{1.0, 1.0});
  tape.backward(root);
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 0.0);
}

TEST_CASE("l1 mean averages absolute differences") {
  Tape<double> tape;
  const Tensor<double> pred = make_leaf(tape, {1, 1, 1, 2}, {1.0, 3.0});
  const Tensor<double> target = make_leaf(tape, {1, 1, 1, 2}, {2.0, 1.0});
  long n = 0;
  const Tensor<double> loss = l1_mean<double>(pred, target, nullptr, &n);
  CHECK(loss.values()[0] == 1.5);
  CHECK(n == 2);
  tape.backward(loss);
  CHECK(pred.grad()[0] == -0.5);  // pred below target
  CHECK(pred.grad()[1] == 0.5);
  CHECK(target.grad()[0] == 0.5);
  CHECK(target.grad()[1] == -0.5);
}

TEST_CASE("a mask restricts both the sum and the denominator") {
  Tape<double> tape;
  const Tensor<double> pred = make_leaf(tape, {1, 1, 1, 2}, {1.0, 3.0});
  const Tensor<double> target = make_leaf(tape, {1, 1, 1, 2}, {2.0, 1.0});
  const Tensor<double> mask = make_leaf(tape, {1, 1, 1, 2}, {1.0, 0.0});
  long n = 0;
  const Tensor<double> loss = l1_mean(pred, target, &mask, &n);
  CHECK(loss.values()[0] == 1.0);
  CHECK(n == 1);
  tape.backward(loss);
  CHECK(pred.grad()[0] == -1.0);
  CHECK(pred.grad()[1] == 0.0);  // masked out entirely

  Tape<double> tape2;
  const Tensor<double> p2 = make_leaf(tape2, {1, 1, 1, 2}, {1.0, 3.0});
  const Tensor<double> t2 = make_leaf(tape2, {1, 1, 1, 2}, {2.0, 1.0});
  const Tensor<double> zero = make_leaf(tape2, {1, 1, 1, 2}, {0.0, 0.0});
  CHECK_THROWS_AS(l1_mean(p2, t2, &zero), DegenerateInputError);
}

TEST_CASE("l1 mean uses a zero subgradient at exact ties") {
  Tape<double> tape;
  const Tensor<double> pred = make_leaf(tape, {1, 1, 1, 2}, {2.0, 5.0});
  const Tensor<double> target = make_leaf(tape, {1, 1, 1, 2}, {2.0, 4.0});
  const Tensor<double> loss = l1_mean(pred, target);
  tape.backward(loss);
  CHECK(pred.grad()[0] == 0.0);
  CHECK(pred.grad()[1] == 0.5);
}

TEST_CASE("a linear chain propagates the product of local slopes") {
  Tape<double> tape;
  const Tensor<double> x = make_leaf(tape, {1, 1, 1, 1}, {4.0});
  const Tensor<double> y = scale_shift(x, 3.0, 0.0);  // y = 3x
  const Tensor<double> root = weighted_sum<double>(y, std::vector<double>{1.0});
  tape.backward(root);
  CHECK(x.grad()[0] == 3.0);
}

TEST_CASE("linear combination forms a weighted scalar sum") {
  Tape<double> tape;
  const Tensor<double> a = make_leaf(tape, {1, 1, 1, 1}, {0.2});
  const Tensor<double> b = make_leaf(tape, {1, 1, 1, 1}, {0.1});
  const std::vector<Tensor<double>> xs = {a, b};
  const std::vector<double> coeffs = {1.0, 0.5};
  const Tensor<double> y = linear_combination<double>(xs, coeffs);
  CHECK(y.values()[0] == doctest::Approx(0.25).epsilon(1e-15));
  tape.backward(y);
  CHECK(a.grad()[0] == 1.0);
  CHECK(b.grad()[0] == 0.5);
}

TEST_CASE("backward demands a scalar root on a recording tape") {
  Tape<double> frozen(false);
  const Tensor<double> x = frozen.leaf({1, 1, 1, 1}, std::vector<double>{1.0});
  CHECK_THROWS_AS(frozen.backward(x), ContractError);

  Tape<double> tape;
  const Tensor<double> vec =
      make_leaf(tape, {1, 1, 1, 3}, {1.0, 2.0, 3.0});
  CHECK_THROWS_AS(tape.backward(vec), ContractError);

  const Tensor<double> scalar = make_leaf(tape, {1, 1, 1, 1}, {1.0});
  const Tensor<double> y = scale_shift(scalar, 2.0, 0.0);
  tape.backward(y);
  CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("the tape reports the first non-finite tensor by label") {
  Tape<double> tape;
  make_leaf(tape, {1, 1, 1, 1}, {1.0}, "fine");
  const Tensor<double> bad = make_leaf(
      tape, {1, 1, 1, 2},
      {std::numeric_limits<double>::quiet_NaN(), 0.0}, "poisoned");
  (void)bad;
  const auto hit = tape.first_non_finite();
  REQUIRE(hit.has_value());
  CHECK(hit->label == "poisoned");

  Tape<double> clean;
  make_leaf(clean, {1, 1, 1, 1}, {1.0});
  CHECK_FALSE(clean.first_non_finite().has_value());
}

TEST_CASE("one adam step with unit gradient moves a parameter by the rate") {
  std::vector<double> params = {1.0};
  const std::vector<double> grads = {1.0};
  AdamState<double> state;
  adam_step<double>(params, grads, state, 0.1);
  // Bias correction makes the very first step lr / (1 + eps).
  CHECK(params[0] == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(params[0] < 1.0);
  CHECK(state.t == 1);
}

TEST_CASE("a zero learning rate leaves parameters bit-identical") {
  std::vector<float> params = {1.0f, -0.0f, 3.25e-12f, 7.5f};
  const std::vector<float> before = params;
  const std::vector<float> grads = {0.3f, -2.0f, 100.0f, 1e-6f};
  AdamState<float> state;
  for (int i = 0; i < 3; ++i) {
    adam_step<float>(params, grads, state, 0.0);
  }
  for (size_t i = 0; i < params.size(); ++i) {
    CHECK(std::memcmp(&params[i], &before[i], sizeof(float)) == 0);
  }
}

TEST_CASE("adam accepts pre-sized moment buffers and rejects wrong sizes") {
  std::vector<double> params = {1.0, 2.0};
  const std::vector<double> grads = {0.5, -0.5};
  AdamState<double> presized;
  presized.m.assign(2, 0.0);
  presized.v.assign(2, 0.0);
  AdamState<double> lazy;
  std::vector<double> params2 = params;
  adam_step<double>(params, grads, presized, 0.01);
  adam_step<double>(params2, grads, lazy, 0.01);
  CHECK(params == params2);

  AdamState<double> wrong;
  wrong.m.assign(3, 0.0);
  wrong.v.assign(3, 0.0);
  std::vector<double> params3 = {1.0, 2.0};
  CHECK_THROWS_AS(adam_step<double>(params3, grads, wrong, 0.01),
                  ContractError);
}

TEST_CASE("adam descends a one-dimensional quadratic") {
  std::vector<double> params = {5.0};
  AdamState<double> state;
  for (int i = 0; i < 500; ++i) {
    const std::vector<double> grads = {2.0 * params[0]};  // d/dx of x^2
    adam_step<double>(params, grads, state, 0.05);
  }
  CHECK(std::abs(params[0]) < 0.05);
}

TEST_CASE("leaf rejects a mismatched initializer") {
  Tape<double> tape;
  const std::vector<double> init = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(
      tape.leaf({1, 1, 2, 2}, std::span<const double>(init)), ContractError);
}

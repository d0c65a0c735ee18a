#include <doctest.h>

#include <random>

#include "inet/ops.hpp"
#include "oracles.hpp"

using namespace inet;

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng, bool grad = true) {
  auto v = oracle::random_vector(shape_numel(s), rng);
  return Tensor(std::move(s), std::move(v), grad);
}

// Largest relative error between backward() and central differences over all
// entries of `x`, for the scalar produced by `f`.
double fd_check(const std::function<Tensor(Tape&)>& f, Tensor x) {
  x.zero_grad();
  Tape tape;
  Tensor loss = f(tape);
  tape.backward(loss);
  std::vector<double> analytic(x.grad().begin(), x.grad().end());
  double worst = 0.0;
  auto data = x.mutable_data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto eval = [&] {
      Tape off(false);
      return f(off).item();
    };
    double num = oracle::central_difference(eval, data[i]);
    double denom = std::max({std::abs(num), std::abs(analytic[i]), 1e-6});
    worst = std::max(worst, std::abs(num - analytic[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("matmul hand values") {
  Tape t(false);
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor v({2, 1}, {1, 2});
  auto r = ops::matmul(t, eye, v);
  CHECK(r[0] == 1.0);
  CHECK(r[1] == 2.0);
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor ones({2, 1}, {1, 1});
  auto c = ops::matmul(t, a, ones);
  CHECK(c.shape() == Shape{2, 1});
  CHECK(c[0] == 3.0);
  CHECK(c[1] == 7.0);
}

TEST_CASE("matmul by identity is bitwise exact") {
  std::mt19937_64 rng(3);
  Tape t(false);
  Tensor x = random_tensor({7, 5}, rng, false);
  std::vector<double> id(49, 0.0);
  for (int i = 0; i < 7; ++i) id[i * 8] = 1.0;
  auto y = ops::matmul(t, Tensor({7, 7}, id), x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape t(false);
  try {
    ops::matmul(t, Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    std::string m = e.what();
    CHECK(m.find("[2, 3]") != std::string::npos);
  }
}

TEST_CASE("matmul matches loop oracle and finite differences") {
  std::mt19937_64 rng(11);
  Tensor a = random_tensor({5, 4}, rng), b = random_tensor({4, 3}, rng);
  Tape t(false);
  auto c = ops::matmul(t, a, b);
  auto ref = oracle::matmul({a.data().begin(), a.data().end()}, {b.data().begin(), b.data().end()}, 5, 4, 3);
  CHECK(oracle::max_abs_diff({c.data().begin(), c.data().end()}, ref) < 1e-14);
  CHECK(fd_check([&](Tape& tp) { return ops::sum(tp, ops::matmul(tp, a, b)); }, a) < 1e-6);
  CHECK(fd_check([&](Tape& tp) { return ops::sum(tp, ops::matmul(tp, a, b)); }, b) < 1e-6);
}

TEST_CASE("conv2d shapes follow the padding rule") {
  Tape t(false);
  auto r = ops::conv2d(t, Tensor::zeros({1, 192, 256, 1}), Tensor::zeros({1, 7, 7, 2}), 2, Padding::same);
  CHECK(r.shape() == Shape{1, 96, 128, 2});
  auto v = ops::conv2d(t, Tensor::zeros({1, 9, 9, 1}), Tensor::zeros({1, 3, 3, 1}), 2, Padding::valid);
  CHECK(v.shape() == Shape{1, 4, 4, 1});
  CHECK_THROWS_AS(ops::conv2d(t, Tensor::zeros({1, 4, 4, 2}), Tensor::zeros({3, 1, 1, 1}), 1, Padding::same),
                  DimensionError);
}

TEST_CASE("conv2d with a 1x1 ones kernel is the identity") {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({1, 6, 5, 1}, rng, false);
  Tape t(false);
  auto y = ops::conv2d(t, x, Tensor({1, 1, 1, 1}, {1.0}), 1, Padding::same);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("conv2d matches a direct loop and finite differences") {
  std::mt19937_64 rng(7);
  for (auto [stride, same] : {std::pair{1u, true}, {2u, true}, {1u, false}, {2u, false}}) {
    Tensor x = random_tensor({2, 7, 6, 3}, rng), k = random_tensor({3, 3, 3, 4}, rng);
    Tape t(false);
    auto y = ops::conv2d(t, x, k, stride, same ? Padding::same : Padding::valid);
    std::size_t oh, ow;
    auto ref = oracle::conv2d({x.data().begin(), x.data().end()}, 2, 7, 6, 3, {k.data().begin(), k.data().end()}, 3,
                              4, stride, same, oh, ow);
    CHECK(y.shape() == Shape{2, oh, ow, 4});
    CHECK(oracle::max_abs_diff({y.data().begin(), y.data().end()}, ref) < 1e-13);
  }
  Tensor x = random_tensor({1, 3, 3, 1}, rng), k = random_tensor({1, 2, 2, 1}, rng);
  auto f = [&](Tape& tp) { return ops::sum(tp, ops::square(tp, ops::conv2d(tp, x, k, 1, Padding::valid))); };
  CHECK(fd_check(f, x) < 1e-6);
  CHECK(fd_check(f, k) < 1e-6);
}

TEST_CASE("pool2d hand values") {
  Tape t(false);
  Tensor c = Tensor::full({1, 4, 4, 1}, 2.5);
  for (auto mode : {ops::PoolMode::max, ops::PoolMode::average}) {
    auto r = ops::pool2d(t, c, 2, mode);
    CHECK(r.shape() == Shape{1, 2, 2, 1});
    for (double v : r.data()) CHECK(v == 2.5);
  }
  Tensor q({1, 2, 2, 1}, {1, 2, 3, 4});
  CHECK(ops::pool2d(t, q, 2, ops::PoolMode::max).item() == 4.0);
  CHECK(ops::pool2d(t, q, 2, ops::PoolMode::average).item() == 2.5);
  CHECK_THROWS_AS(ops::pool2d(t, q, 3, ops::PoolMode::max), DimensionError);
}

TEST_CASE("pool2d max ties route the gradient to the first element") {
  Tensor q({1, 2, 2, 1}, {5, 5, 5, 5}, true);
  Tape t;
  auto r = ops::pool2d(t, q, 2, ops::PoolMode::max);
  t.backward(ops::sum(t, r));
  CHECK(q.grad()[0] == 1.0);
  CHECK(q.grad()[1] == 0.0);
  CHECK(q.grad()[3] == 0.0);
}

TEST_CASE("pool2d gradients match finite differences") {
  std::mt19937_64 rng(13);
  Tensor x = random_tensor({1, 6, 6, 2}, rng);
  std::vector<double> w = oracle::random_vector(8, rng);
  for (auto mode : {ops::PoolMode::average, ops::PoolMode::max}) {
    auto f = [&](Tape& tp) { return ops::weighted_sum(tp, ops::pool2d(tp, x, 3, mode), w); };
    CHECK(fd_check(f, x) < 1e-6);
  }
}

TEST_CASE("average pool then replication keeps each receptive field mean") {
  std::mt19937_64 rng(17);
  Tensor x = random_tensor({1, 6, 6, 1}, rng, false);
  Tape t(false);
  auto p = ops::pool2d(t, x, 3, ops::PoolMode::average);
  for (std::size_t by = 0; by < 2; ++by)
    for (std::size_t bx = 0; bx < 2; ++bx) {
      double s = 0.0;
      for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t xx = 0; xx < 3; ++xx) s += x[(by * 3 + y) * 6 + bx * 3 + xx];
      CHECK(p[by * 2 + bx] == doctest::Approx(s / 9.0).epsilon(1e-14));
    }
}

TEST_CASE("batch_norm examples and moments") {
  Tape t(false);
  Tensor gamma({2}, {1.5, -0.5}), beta({2}, {0.25, 3.0});
  ops::BatchNormStats stats(2);
  Tensor constant({1, 3, 3, 2}, std::vector<double>(18, 4.0));
  auto r = ops::batch_norm(t, constant, gamma, beta, stats, ops::NormMode::train);
  for (std::size_t i = 0; i < r.size(); ++i) CHECK(r[i] == doctest::Approx(i % 2 ? 3.0 : 0.25).epsilon(1e-12));

  std::mt19937_64 rng(19);
  Tensor x = random_tensor({2, 4, 4, 3}, rng, false);
  ops::BatchNormStats s3(3);
  auto y = ops::batch_norm(t, x, Tensor::full({3}, 1.0), Tensor::zeros({3}), s3, ops::NormMode::train);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0, mx = 0, vx = 0;
    for (std::size_t i = c; i < y.size(); i += 3) m += y[i], mx += x[i];
    m /= 32, mx /= 32;
    for (std::size_t i = c; i < y.size(); i += 3) v += (y[i] - m) * (y[i] - m), vx += (x[i] - mx) * (x[i] - mx);
    v /= 32, vx /= 32;
    CHECK(std::abs(m) < 1e-10);
    CHECK(v == doctest::Approx(vx / (vx + ops::kBatchNormEps)).epsilon(1e-6));
    // running statistics moved towards the batch statistics
    CHECK(s3.mean[c] == doctest::Approx(0.1 * mx).epsilon(1e-12));
  }
}

TEST_CASE("batch_norm with normalized input and tiny eps is the identity") {
  Tensor x({1, 1, 4, 1}, {-1.5, -0.5, 0.5, 1.5});
  double s = std::sqrt(1.25);
  for (auto& v : x.mutable_data()) v /= s;
  ops::BatchNormStats st(1);
  Tape t(false);
  auto y = ops::batch_norm(t, x, Tensor::full({1}, 1.0), Tensor::zeros({1}), st, ops::NormMode::train, 1e-12);
  for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-10));
}

TEST_CASE("batch_norm gradients match finite differences") {
  std::mt19937_64 rng(23);
  Tensor x = random_tensor({1, 4, 4, 2}, rng), g = random_tensor({2}, rng), b = random_tensor({2}, rng);
  auto w = oracle::random_vector(32, rng);
  for (auto mode : {ops::NormMode::train, ops::NormMode::batch, ops::NormMode::infer}) {
    ops::BatchNormStats st(2);
    st.mean = {0.3, -0.2};
    st.var = {1.7, 0.6};
    auto f = [&](Tape& tp) {
      ops::BatchNormStats copy = st;
      return ops::weighted_sum(tp, ops::batch_norm(tp, x, g, b, copy, mode), w);
    };
    CHECK(fd_check(f, x) < 1e-5);
    CHECK(fd_check(f, g) < 1e-5);
    CHECK(fd_check(f, b) < 1e-5);
  }
}

TEST_CASE("relu definition and subgradient") {
  Tape t(false);
  auto r = ops::relu(t, Tensor({3}, {-1, 0, 2}));
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 2.0);
  auto neg = ops::relu(t, Tensor({4}, {-1, -2, -3, -0.5}));
  for (double v : neg.data()) CHECK(v == 0.0);
  Tensor x({3}, {3, -3, 0}, true);
  Tape tape;
  tape.backward(ops::sum(tape, ops::relu(tape, x)));
  CHECK(x.grad()[0] == 1.0);
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[2] == 0.0);
}

TEST_CASE("fully_connected identity, shape and gradients") {
  Tape t(false);
  Tensor x({1, 3}, {1, -2, 5});
  std::vector<double> id(9, 0.0);
  id[0] = id[4] = id[8] = 1.0;
  auto y = ops::fully_connected(t, x, Tensor({3, 3}, id), Tensor::zeros({3}));
  for (std::size_t i = 0; i < 3; ++i) CHECK(y[i] == x[i]);
  auto big = ops::fully_connected(t, Tensor::zeros({1, 6, 8, 1024}), Tensor::zeros({49152, 8}), Tensor::zeros({8}));
  CHECK(big.shape() == Shape{1, 8});
  CHECK_THROWS_AS(ops::fully_connected(t, Tensor::zeros({1, 5}), Tensor::zeros({4, 2}), Tensor::zeros({2})),
                  DimensionError);

  std::mt19937_64 rng(29);
  Tensor in = random_tensor({1, 10}, rng), w = random_tensor({10, 4}, rng), b = random_tensor({4}, rng);
  auto wts = oracle::random_vector(4, rng);
  auto f = [&](Tape& tp) { return ops::weighted_sum(tp, ops::fully_connected(tp, in, w, b), wts); };
  CHECK(fd_check(f, in) < 1e-6);
  CHECK(fd_check(f, w) < 1e-6);
  CHECK(fd_check(f, b) < 1e-6);
}

TEST_CASE("backward examples and misuse") {
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tape t;
  auto loss = ops::sum(t, x);
  t.backward(loss);
  for (double g : x.grad()) CHECK(g == 1.0);
  CHECK_THROWS_AS(t.backward(loss), AutodiffError);

  Tensor y({2}, {1, 2}, true);
  Tape t2;
  t2.backward(ops::sum(t2, ops::square(t2, y)));
  CHECK(y.grad()[0] == 2.0);
  CHECK(y.grad()[1] == 4.0);

  Tape t3;
  auto v = ops::square(t3, Tensor({2}, {1, 2}, true));
  CHECK_THROWS_AS(t3.backward(v), AutodiffError);
  Tape t4;
  CHECK_THROWS_AS(t4.backward(Tensor::scalar(1.0, true)), AutodiffError);
}

TEST_CASE("l1_loss examples") {
  Tape t(false);
  Tensor truth({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(ops::l1_loss(t, truth, truth).item() == 0.0);
  Tensor shifted({2, 3}, {1.25, 2.25, 3.25, 4.25, 5.25, 6.25});
  CHECK(ops::l1_loss(t, shifted, truth).item() == doctest::Approx(0.25).epsilon(1e-15));
  Tensor xonly({2, 3}, {2, 2, 3, 5, 5, 6});
  CHECK(ops::l1_loss(t, xonly, truth).item() == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(ops::l1_loss(t, Tensor::zeros({2, 2}), truth), DimensionError);

  Tensor p({3}, {1, 2, 3}, true);
  Tape tape;
  tape.backward(ops::l1_loss(tape, p, Tensor({3}, {1, 0, 5})));
  CHECK(p.grad()[0] == 0.0);
  CHECK(p.grad()[1] == doctest::Approx(1.0 / 3.0));
  CHECK(p.grad()[2] == doctest::Approx(-1.0 / 3.0));
}

TEST_CASE("composite chain gradient and bitwise-deterministic backward") {
  std::mt19937_64 rng(31);
  Tensor img = random_tensor({1, 8, 8, 2}, rng), k = random_tensor({2, 3, 3, 3}, rng);
  Tensor g = Tensor::full({3}, 1.0, true), b = Tensor::zeros({3}, true);
  Tensor w = random_tensor({48, 5}, rng), bias = random_tensor({5}, rng);
  Tensor target = random_tensor({1, 5}, rng, false);
  auto f = [&](Tape& tp) {
    ops::BatchNormStats st(3);
    auto x = ops::conv2d(tp, img, k, 2, Padding::same);
    x = ops::relu(tp, ops::batch_norm(tp, x, g, b, st, ops::NormMode::train));
    return ops::l1_loss(tp, ops::fully_connected(tp, x, w, bias), target);
  };
  for (Tensor p : {k, w, bias}) CHECK(fd_check(f, p) < 1e-4);

  auto grads = [&] {
    for (Tensor p : {k, w, bias, g, b}) p.zero_grad();
    Tape tp;
    tp.backward(f(tp));
    std::vector<double> all;
    for (Tensor p : {k, w, bias, g, b}) all.insert(all.end(), p.grad().begin(), p.grad().end());
    return all;
  };
  auto g1 = grads(), g2 = grads();
  REQUIRE(g1.size() == g2.size());
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("finite public ops stay finite") {
  std::mt19937_64 rng(37);
  Tensor x = random_tensor({1, 5, 5, 2}, rng, false);
  Tape t(false);
  ops::BatchNormStats st(2);
  auto y = ops::batch_norm(t, Tensor::zeros({1, 5, 5, 2}), Tensor::full({2}, 1.0), Tensor::zeros({2}), st,
                           ops::NormMode::train);
  for (double v : y.data()) CHECK(std::isfinite(v));
  auto p = ops::pool2d(t, x, 3, 2, Padding::same, ops::PoolMode::average);
  for (double v : p.data()) CHECK(std::isfinite(v));
}

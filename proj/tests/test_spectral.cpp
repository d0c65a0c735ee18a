#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "inet/ops.hpp"
#include "inet/spectral.hpp"
#include "oracles.hpp"

using namespace inet;

namespace {

Mesh triangle() { return Mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}}); }

Mesh two_path() { return Mesh({{0, 0, 0}, {1, 0, 0}}, {}, {{0, 1}}); }

// Dense T_k(L~) by the matrix recurrence, independent of the vector path.
std::vector<std::vector<double>> dense_chebyshev(const std::vector<double>& ls, std::size_t n, std::size_t k) {
  std::vector<std::vector<double>> t;
  std::vector<double> eye(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = 1.0;
  t.push_back(eye);
  if (k > 1) t.push_back(ls);
  while (t.size() < k) {
    auto p = oracle::matmul(ls, t.back(), n, n, n);
    const auto& pp = t[t.size() - 2];
    for (std::size_t i = 0; i < n * n; ++i) p[i] = 2.0 * p[i] - pp[i];
    t.push_back(p);
  }
  return t;
}

// y[:, j] = sum_i sum_k theta[i, j, k] T_k v[:, i] + b_j
std::vector<double> dense_cheb_conv(const LaplacianBundle& b, const std::vector<double>& v, std::size_t fin,
                                    std::size_t fout, std::size_t k, const std::vector<double>& theta,
                                    const std::vector<double>& bias) {
  const std::size_t n = b.vertex_count();
  auto t = dense_chebyshev(b.scaled.to_dense(), n, k);
  std::vector<double> y(n * fout, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < fout; ++j) {
      double s = bias[j];
      for (std::size_t i = 0; i < fin; ++i)
        for (std::size_t kk = 0; kk < k; ++kk)
          for (std::size_t c = 0; c < n; ++c) s += theta[(i * fout + j) * k + kk] * t[kk][r * n + c] * v[c * fin + i];
      y[r * fout + j] = s;
    }
  return y;
}

ChebConvLayer random_layer(std::size_t fin, std::size_t fout, std::size_t k, std::mt19937_64& rng) {
  auto layer = ChebConvLayer::create(fin, fout, k, rng);
  auto th = oracle::random_vector(layer.theta.size(), rng);
  std::copy(th.begin(), th.end(), layer.theta.mutable_data().begin());
  auto bs = oracle::random_vector(fout, rng);
  std::copy(bs.begin(), bs.end(), layer.bias.mutable_data().begin());
  return layer;
}

std::vector<double> to_vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("triangle Laplacian") {
  auto b = build_laplacian(triangle());
  std::vector<double> want{2, -1, -1, -1, 2, -1, -1, -1, 2};
  CHECK(b.laplacian.to_dense() == want);
  CHECK(b.lambda_max == doctest::Approx(3.0).epsilon(1e-9));
  auto eig = eigendecompose(b.laplacian);
  CHECK(eig.values[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(eig.values[1] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(eig.values[2] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("two-vertex path") {
  auto b = build_laplacian(two_path());
  CHECK(b.laplacian.to_dense() == std::vector<double>{1, -1, -1, 1});
  CHECK(b.lambda_max == doctest::Approx(2.0).epsilon(1e-9));
  auto s = b.scaled.to_dense();
  CHECK(std::abs(s[0]) < 1e-9);
  CHECK(s[1] == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(s[2] == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(std::abs(s[3]) < 1e-9);

  auto eig = eigendecompose(b.laplacian);
  CHECK(std::abs(eig.values[0]) < 1e-12);
  CHECK(eig.values[1] == doctest::Approx(2.0));
  // null vector is constant
  CHECK(std::abs(std::abs(eig.vectors[0]) - 1.0 / std::sqrt(2.0)) < 1e-12);
  CHECK(std::abs(eig.vectors[0] - eig.vectors[2]) < 1e-12);

  std::vector<double> v{1, 0}, th{0, 1};
  auto y = spectral_filter_exact(b, eig, v, 1, th);
  CHECK(std::abs(y[0]) < 1e-9);
  CHECK(y[1] == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("disconnected mesh is rejected") {
  Mesh m({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 5, 5}, {6, 5, 5}, {5, 6, 5}}, {{0, 1, 2}, {3, 4, 5}});
  CHECK_THROWS_AS(build_laplacian(m), MeshError);
}

TEST_CASE("Laplacian row sums and scaled constant vector") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t m = 6 + rng() % 45;
    auto mesh = oracle::random_mesh(m, m / 2, rng);
    auto b = build_laplacian(mesh);
    CHECK(b.laplacian.to_dense() == oracle::dense_laplacian(mesh));
    auto rp = b.laplacian.row_ptr();
    auto vals = b.laplacian.values();
    for (std::size_t r = 0; r < m; ++r) {
      double s = 0.0;
      for (auto i = rp[r]; i < rp[r + 1]; ++i) s += vals[i];
      REQUIRE(s == 0.0);
    }
    std::vector<double> ones(m, 1.0);
    auto y = b.scaled.multiply(ones, 1);
    for (double x : y) REQUIRE(std::abs(x + 1.0) < 1e-9);
  }
}

TEST_CASE("scaled spectrum lies in [-1, 1]") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    std::size_t m = 6 + rng() % 60;
    auto b = build_laplacian(oracle::random_mesh(m, m, rng));
    auto eig = eigendecompose(b.scaled);
    CHECK(eig.values.front() >= -1.0 - 1e-8);
    CHECK(eig.values.back() <= 1.0 + 1e-8);
    CHECK(eig.values.back() == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("eigendecomposition reconstructs and is orthonormal") {
  std::mt19937_64 rng(13);
  auto b = build_laplacian(oracle::random_mesh(10, 6, rng));
  auto eig = eigendecompose(b.laplacian);
  const std::size_t n = eig.n;
  auto dense = b.laplacian.to_dense();
  double frob = 0.0, ortho = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double r = 0.0, o = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        r += eig.vectors[i * n + k] * eig.values[k] * eig.vectors[j * n + k];
        o += eig.vectors[k * n + i] * eig.vectors[k * n + j];
      }
      frob += (r - dense[i * n + j]) * (r - dense[i * n + j]);
      ortho = std::max(ortho, std::abs(o - (i == j ? 1.0 : 0.0)));
    }
  CHECK(std::sqrt(frob) < 1e-8);
  CHECK(ortho < 1e-10);
  for (std::size_t i = 1; i < n; ++i) CHECK(eig.values[i - 1] <= eig.values[i]);
}

TEST_CASE("eigendecomposition refuses large matrices") {
  CHECK_THROWS(eigendecompose(CsrMatrix::identity(kEigenOracleCap + 1)));
  CHECK_NOTHROW(eigendecompose(CsrMatrix::identity(5)));
}

TEST_CASE("identity filter") {
  std::mt19937_64 rng(14);
  auto b = build_laplacian(oracle::random_mesh(9, 4, rng));
  auto eig = eigendecompose(b.laplacian);
  auto v = oracle::random_vector(9 * 2, rng);
  std::vector<double> th{1, 0, 0};
  CHECK(oracle::max_abs_diff(spectral_filter_exact(b, eig, v, 2, th), v) < 1e-12);
  CHECK_THROWS(spectral_filter_exact(b, eig, v, 2, std::vector<double>{}));

  auto layer = ChebConvLayer::create(1, 1, 1, rng);
  layer.theta.mutable_data()[0] = 1.0;
  layer.bias.mutable_data()[0] = 0.0;
  Tape t(false);
  std::vector<double> v1(v.begin(), v.begin() + 9);
  auto y = cheb_conv(t, layer, b, Tensor({9, 1}, v1));
  CHECK(to_vec(y) == v1);
}

TEST_CASE("second Chebyshev term is 2 L~ (L~ v) - v") {
  std::mt19937_64 rng(15);
  auto b = build_laplacian(oracle::random_mesh(12, 5, rng));
  auto v = oracle::random_vector(12, rng);
  auto lv = b.scaled.multiply(v, 1);
  auto llv = b.scaled.multiply(lv, 1);
  std::vector<double> want(12);
  for (std::size_t i = 0; i < 12; ++i) want[i] = 2.0 * llv[i] - v[i];
  auto layer = ChebConvLayer::create(1, 1, 3, rng);
  auto th = layer.theta.mutable_data();
  th[0] = 0.0;
  th[1] = 0.0;
  th[2] = 1.0;
  layer.bias.mutable_data()[0] = 0.0;
  Tape t(false);
  CHECK(oracle::max_abs_diff(to_vec(cheb_conv(t, layer, b, Tensor({12, 1}, v))), want) < 1e-14);
}

TEST_CASE("cheb_conv matches the dense recurrence and the eigenbasis filter") {
  std::mt19937_64 rng(16);
  auto b = build_laplacian(oracle::random_mesh(12, 6, rng));
  auto eig = eigendecompose(b.laplacian);
  auto layer = random_layer(2, 3, 3, rng);
  auto v = oracle::random_vector(24, rng);
  Tape t(false);
  auto y = to_vec(cheb_conv(t, layer, b, Tensor({12, 2}, v)));
  auto dense = dense_cheb_conv(b, v, 2, 3, 3, to_vec(layer.theta), to_vec(layer.bias));
  CHECK(oracle::max_abs_diff(y, dense) < 1e-12);

  // channel-wise against the eigenbasis filter
  std::vector<double> want(12 * 3, 0.0);
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t r = 0; r < 12; ++r) want[r * 3 + j] = layer.bias[j];
    for (std::size_t i = 0; i < 2; ++i) {
      std::vector<double> vi(12), th(3);
      for (std::size_t r = 0; r < 12; ++r) vi[r] = v[r * 2 + i];
      for (std::size_t k = 0; k < 3; ++k) th[k] = layer.theta[(i * 3 + j) * 3 + k];
      auto g = spectral_filter_exact(b, eig, vi, 1, th);
      for (std::size_t r = 0; r < 12; ++r) want[r * 3 + j] += g[r];
    }
  }
  CHECK(oracle::max_abs_diff(y, want) < 1e-8);
}

TEST_CASE("cheb_conv gradients match finite differences") {
  std::mt19937_64 rng(17);
  auto b = build_laplacian(oracle::random_mesh(12, 6, rng));
  auto layer = random_layer(2, 3, 3, rng);
  Tensor v({12, 2}, oracle::random_vector(24, rng), true);
  auto w = oracle::random_vector(36, rng);
  auto loss = [&](Tape& t) { return ops::weighted_sum(t, cheb_conv(t, layer, b, v), w); };

  for (Tensor x : {layer.theta, layer.bias, v}) {
    layer.theta.zero_grad();
    layer.bias.zero_grad();
    v.zero_grad();
    Tape t;
    t.backward(loss(t));
    std::vector<double> analytic(x.grad().begin(), x.grad().end());
    auto data = x.mutable_data();
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto f = [&] {
        Tape off(false);
        return loss(off).item();
      };
      double num = oracle::central_difference(f, data[i]);
      worst = std::max(worst, std::abs(num - analytic[i]) / std::max({std::abs(num), std::abs(analytic[i]), 1e-6}));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("cheb_conv rejects a resolution mismatch") {
  std::mt19937_64 rng(18);
  auto b = build_laplacian(oracle::random_mesh(10, 3, rng));
  auto layer = random_layer(1, 1, 2, rng);
  Tape t(false);
  CHECK_THROWS_AS(cheb_conv(t, layer, b, Tensor::zeros({9, 1})), DimensionError);
  CHECK_THROWS_AS(cheb_conv(t, layer, b, Tensor::zeros({10, 2})), DimensionError);
}

TEST_CASE("parameter count is Fin x Fout x K") {
  std::mt19937_64 rng(19);
  auto layer = ChebConvLayer::create(16, 3, 6, rng);
  CHECK(layer.filter_parameter_count() == 16 * 3 * 6);
  CHECK(layer.theta.size() == 16 * 3 * 6);
  CHECK(layer.bias.size() == 3);
}

TEST_CASE("oracle equivalence on random meshes") {
  std::mt19937_64 rng(20);
  const std::size_t orders[] = {1, 2, 3, 5};
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t m = 6 + rng() % 45, k = orders[trial % 4];
    auto b = build_laplacian(oracle::random_mesh(m, m / 3, rng));
    auto eig = eigendecompose(b.laplacian);
    auto layer = random_layer(1, 1, k, rng);
    layer.bias.mutable_data()[0] = 0.0;
    auto v = oracle::random_vector(m, rng);
    Tape t(false);
    auto y = to_vec(cheb_conv(t, layer, b, Tensor({m, 1}, v)));
    auto want = spectral_filter_exact(b, eig, v, 1, to_vec(layer.theta));
    REQUIRE(oracle::max_abs_diff(y, want) < 1e-8);
  }
}

TEST_CASE("Chebyshev terms stay bounded") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    std::size_t m = 10 + rng() % 40;
    auto b = build_laplacian(oracle::random_mesh(m, m, rng));
    auto v = oracle::random_vector(m, rng);
    double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    for (auto& x : v) x /= n;
    for (std::size_t k = 0; k < 12; ++k) {
      auto layer = ChebConvLayer::create(1, 1, k + 1, rng);
      auto th = layer.theta.mutable_data();
      std::fill(th.begin(), th.end(), 0.0);
      th[k] = 1.0;
      layer.bias.mutable_data()[0] = 0.0;
      Tape t(false);
      auto y = to_vec(cheb_conv(t, layer, b, Tensor({m, 1}, v)));
      double norm = std::sqrt(std::inner_product(y.begin(), y.end(), y.begin(), 0.0));
      CHECK(norm <= 1.0 + 1e-6);
    }
  }
}

TEST_CASE("relabelling vertices permutes the output") {
  std::mt19937_64 rng(22);
  auto mesh = oracle::random_mesh(30, 20, rng);
  std::vector<std::size_t> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Vec3> pv(30);
  for (std::size_t i = 0; i < 30; ++i) pv[perm[i]] = mesh.vertices()[i];
  std::vector<Face> pf;
  for (auto f : mesh.faces()) pf.push_back({perm[f[0]], perm[f[1]], perm[f[2]]});
  Mesh permuted(pv, pf);

  auto b = build_laplacian(mesh), pb = build_laplacian(permuted);
  auto layer = random_layer(2, 2, 4, rng);
  auto v = oracle::random_vector(60, rng);
  std::vector<double> pvv(60);
  for (std::size_t i = 0; i < 30; ++i)
    for (std::size_t c = 0; c < 2; ++c) pvv[perm[i] * 2 + c] = v[i * 2 + c];
  Tape t(false);
  auto y = to_vec(cheb_conv(t, layer, b, Tensor({30, 2}, v)));
  auto py = to_vec(cheb_conv(t, layer, pb, Tensor({30, 2}, pvv)));
  double worst = 0.0;
  for (std::size_t i = 0; i < 30; ++i)
    for (std::size_t c = 0; c < 2; ++c) worst = std::max(worst, std::abs(py[perm[i] * 2 + c] - y[i * 2 + c]));
  CHECK(worst < 1e-12);
}

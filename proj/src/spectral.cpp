#include "inet/spectral.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "inet/init.hpp"
#include "inet/kernels.hpp"

namespace inet {

double largest_eigenvalue(const CsrMatrix& m, const PowerIterationOptions& opts) {
  const std::size_t n = m.rows();
  if (n == 0) throw DimensionError("largest_eigenvalue of an empty matrix");
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = (i % 2 ? -1.0 : 1.0) * u(rng);
  auto normalize = [](std::vector<double>& v) {
    double s = 0.0;
    for (double a : v) s += a * a;
    s = std::sqrt(s);
    if (s == 0.0) return 0.0;
    for (double& a : v) a /= s;
    return s;
  };
  normalize(x);
  // Stop on the residual |Mx - rho x| rather than the change in rho; the
  // Rayleigh quotient then sits within residual^2 / gap of the eigenvalue.
  double rho = 0.0;
  for (int it = 0; it < opts.max_iterations; ++it) {
    auto y = m.multiply(x, 1);
    rho = 0.0;
    for (std::size_t i = 0; i < n; ++i) rho += x[i] * y[i];
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i) res += (y[i] - rho * x[i]) * (y[i] - rho * x[i]);
    if (normalize(y) == 0.0) return 0.0;
    x = std::move(y);
    if (std::sqrt(res) <= opts.tolerance * std::abs(rho)) break;
  }
  return rho;
}

LaplacianBundle build_laplacian(const Mesh& mesh, const PowerIterationOptions& opts) {
  if (!mesh.is_connected())
    throw MeshError("mesh graph is disconnected; every dataset mesh must be a single component");
  const std::size_t m = mesh.vertex_count();
  if (m < 2) throw MeshError("Laplacian needs at least two vertices");
  std::vector<Triplet> t;
  t.reserve(mesh.edges().size() * 2 + m);
  for (std::size_t i = 0; i < m; ++i)
    t.push_back({i, i, static_cast<double>(mesh.neighbors()[i].size())});
  for (auto e : mesh.edges()) {
    t.push_back({e[0], e[1], -1.0});
    t.push_back({e[1], e[0], -1.0});
  }
  LaplacianBundle b;
  b.laplacian = CsrMatrix::from_triplets(m, m, t);
  b.lambda_max = largest_eigenvalue(b.laplacian, opts);
  for (auto& e : t) {
    e.value *= 2.0 / b.lambda_max;
    if (e.row == e.col) e.value -= 1.0;
  }
  b.scaled = CsrMatrix::from_triplets(m, m, std::move(t));
  return b;
}

Eigendecomposition eigendecompose(const CsrMatrix& symmetric, std::size_t cap) {
  const std::size_t n = symmetric.rows();
  if (n > cap)
    throw DimensionError("dense eigendecomposition is capped at " + std::to_string(cap) + " vertices (got " +
                         std::to_string(n) + "); use the Chebyshev path for large meshes");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (const auto& t : symmetric.triplets()) a(static_cast<Eigen::Index>(t.row), static_cast<Eigen::Index>(t.col)) = t.value;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigendecomposition did not converge");
  Eigendecomposition e;
  e.n = n;
  e.values.resize(n);
  e.vectors.resize(n * n);
  for (std::size_t j = 0; j < n; ++j) {
    e.values[j] = solver.eigenvalues()(static_cast<Eigen::Index>(j));
    for (std::size_t i = 0; i < n; ++i)
      e.vectors[i * n + j] = solver.eigenvectors()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  return e;
}

std::vector<double> spectral_filter_exact(const LaplacianBundle& bundle, const Eigendecomposition& eig,
                                          std::span<const double> v, std::size_t channels,
                                          std::span<const double> theta) {
  const std::size_t n = eig.n;
  if (theta.empty()) throw DimensionError("spectral filter needs K >= 1 coefficients");
  if (n != bundle.vertex_count() || v.size() != n * channels)
    throw DimensionError("spectral filter: signal/eigenbasis size mismatch");
  // Filter response per eigenvalue, using scalar Chebyshev polynomials.
  std::vector<double> response(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double x = 2.0 * eig.values[j] / bundle.lambda_max - 1.0;
    double t0 = 1.0, t1 = x, g = theta[0];
    if (theta.size() > 1) g += theta[1] * t1;
    for (std::size_t k = 2; k < theta.size(); ++k) {
      double t2 = 2.0 * x * t1 - t0;
      g += theta[k] * t2;
      t0 = t1;
      t1 = t2;
    }
    response[j] = g;
  }
  const auto& U = eig.vectors;
  std::vector<double> out(n * channels, 0.0);
  std::vector<double> spec(n);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += U[i * n + j] * v[i * channels + c];
      spec[j] = s * response[j];
    }
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += U[i * n + j] * spec[j];
      out[i * channels + c] = s;
    }
  }
  return out;
}

ChebConvLayer ChebConvLayer::create(std::size_t fin, std::size_t fout, std::size_t order, std::mt19937_64& rng) {
  if (fin == 0 || fout == 0 || order == 0) throw ConfigError("ChebConvLayer needs Fin, Fout, K >= 1");
  ChebConvLayer l;
  l.in_channels = fin;
  l.out_channels = fout;
  l.order = order;
  l.theta = glorot_uniform({fin, fout, order}, fin * order, fout * order, rng);
  l.bias = Tensor::zeros({fout}, true);
  return l;
}

namespace {

// y = L~ x for x of shape M x f.
std::vector<double> apply(const CsrMatrix& s, std::span<const double> x, std::size_t f) { return s.multiply(x, f); }

}  // namespace

Tensor cheb_conv(Tape& tape, const ChebConvLayer& layer, const LaplacianBundle& bundle, const Tensor& v) {
  if (v.rank() != 2 || v.dim(1) != layer.in_channels)
    throw DimensionError("cheb_conv: features " + shape_str(v.shape()) + " for a layer with " +
                         std::to_string(layer.in_channels) + " input channels");
  if (v.dim(0) != bundle.vertex_count())
    throw DimensionError("cheb_conv: features have " + std::to_string(v.dim(0)) + " vertices, Laplacian has " +
                         std::to_string(bundle.vertex_count()));
  const std::size_t M = v.dim(0), fin = layer.in_channels, fout = layer.out_channels, K = layer.order;
  const auto& Ls = bundle.scaled;

  // Z_0 = v, Z_1 = L~ v, Z_k = 2 L~ Z_{k-1} - Z_{k-2}
  std::vector<std::vector<double>> z(K);
  z[0].assign(v.data().begin(), v.data().end());
  if (K > 1) z[1] = apply(Ls, z[0], fin);
  for (std::size_t k = 2; k < K; ++k) {
    auto lz = apply(Ls, z[k - 1], fin);
    for (std::size_t i = 0; i < lz.size(); ++i) lz[i] = 2.0 * lz[i] - z[k - 2][i];
    z[k] = std::move(lz);
  }

  // W_k[i][j] = theta[i][j][k]
  auto theta = layer.theta.data();
  std::vector<std::vector<double>> w(K, std::vector<double>(fin * fout));
  for (std::size_t i = 0; i < fin; ++i)
    for (std::size_t j = 0; j < fout; ++j)
      for (std::size_t k = 0; k < K; ++k) w[k][i * fout + j] = theta[(i * fout + j) * K + k];

  std::vector<double> y(M * fout, 0.0), tmp(M * fout);
  for (std::size_t k = 0; k < K; ++k) {
    kernels::matmul(z[k], w[k], tmp, M, fin, fout);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += tmp[i];
  }
  auto b = layer.bias.data();
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t j = 0; j < fout; ++j) y[m * fout + j] += b[j];

  Tensor out({M, fout}, std::move(y));
  if (tape.should_record({&v, &layer.theta, &layer.bias})) {
    Tensor th = layer.theta, bias = layer.bias, input = v;
    tape.record(out, [th, bias, input, out, &Ls, z = std::move(z), w = std::move(w), M, fin, fout, K]() mutable {
      auto g = out.grad();
      if (th.requires_grad()) {
        auto gth = th.grad_buffer();
        std::vector<double> gk(fin * fout);
        for (std::size_t k = 0; k < K; ++k) {
          kernels::matmul_tn(z[k], g, gk, M, fin, fout);
          for (std::size_t i = 0; i < fin; ++i)
            for (std::size_t j = 0; j < fout; ++j) gth[(i * fout + j) * K + k] += gk[i * fout + j];
        }
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad_buffer();
        for (std::size_t m = 0; m < M; ++m)
          for (std::size_t j = 0; j < fout; ++j) gb[j] += g[m * fout + j];
      }
      if (input.requires_grad()) {
        // dv = sum_k T_k(L~) (G W_k^T), summed with Clenshaw's recurrence since
        // L~ is symmetric: b_k = c_k + 2 L~ b_{k+1} - b_{k+2}, result b_0 - L~ b_1.
        std::vector<double> b1(M * fin, 0.0), b2(M * fin, 0.0), ck(M * fin);
        for (std::size_t kk = K; kk-- > 0;) {
          kernels::matmul_nt(g, w[kk], ck, M, fout, fin);
          if (kk == 0) {
            auto lb1 = apply(Ls, b1, fin);
            for (std::size_t i = 0; i < ck.size(); ++i) {
              // b_0 - L~ b_1 with b_0 = c_0 + 2 L~ b_1 - b_2
              ck[i] = ck[i] + lb1[i] - b2[i];
            }
            break;
          }
          auto lb1 = apply(Ls, b1, fin);
          for (std::size_t i = 0; i < ck.size(); ++i) ck[i] = ck[i] + 2.0 * lb1[i] - b2[i];
          b2 = std::move(b1);
          b1 = ck;
        }
        auto gv = input.grad_buffer();
        for (std::size_t i = 0; i < ck.size(); ++i) gv[i] += ck[i];
      }
    });
  }
  return out;
}

}  // namespace inet

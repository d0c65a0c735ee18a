#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "inet/mesh.hpp"
#include "inet/sparse.hpp"
#include "inet/tensor.hpp"

namespace inet {

/// Non-normalized Laplacian L = D - A, its largest eigenvalue, and the scaled
/// operator 2L/lambda_max - I whose spectrum lies in [-1, 1].
struct LaplacianBundle {
  CsrMatrix laplacian;
  double lambda_max = 0.0;
  CsrMatrix scaled;

  std::size_t vertex_count() const { return laplacian.rows(); }
};

struct PowerIterationOptions {
  double tolerance = 1e-9;
  int max_iterations = 10000;
};

/// Largest eigenvalue of a symmetric positive semi-definite matrix.
double largest_eigenvalue(const CsrMatrix& m, const PowerIterationOptions& opts = {});

/// Throws MeshError for disconnected meshes.
LaplacianBundle build_laplacian(const Mesh& mesh, const PowerIterationOptions& opts = {});

inline constexpr std::size_t kEigenOracleCap = 200;

struct Eigendecomposition {
  std::size_t n = 0;
  std::vector<double> values;   // ascending
  std::vector<double> vectors;  // n x n row-major; column j pairs with values[j]
};

/// Dense symmetric eigendecomposition. O(n^3); refuses matrices above `cap`.
Eigendecomposition eigendecompose(const CsrMatrix& symmetric, std::size_t cap = kEigenOracleCap);

/// Applies g(L~) = sum_k theta_k T_k(L~) in the eigenbasis: U g(Lambda~) U^T v.
/// `v` is M x channels row-major; every channel gets the same filter. This is
/// the exact reference for cheb_conv.
std::vector<double> spectral_filter_exact(const LaplacianBundle& bundle, const Eigendecomposition& eig,
                                          std::span<const double> v, std::size_t channels,
                                          std::span<const double> theta);

/// Chebyshev graph convolution: Fin x Fout x K coefficients plus a bias per
/// output channel.
struct ChebConvLayer {
  Tensor theta;  // Fin x Fout x K
  Tensor bias;   // Fout
  std::size_t in_channels = 0, out_channels = 0, order = 0;

  static ChebConvLayer create(std::size_t fin, std::size_t fout, std::size_t order, std::mt19937_64& rng);
  std::size_t filter_parameter_count() const { return in_channels * out_channels * order; }
};

/// y_j = sum_i g_{theta_ij}(L) v_i + b_j via the three-term recurrence on
/// vectors; T_k(L~) is never formed. `bundle` must outlive any backward pass
/// over the recorded node.
Tensor cheb_conv(Tape& tape, const ChebConvLayer& layer, const LaplacianBundle& bundle, const Tensor& v);

}  // namespace inet

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "inet/mesh.hpp"
#include "inet/tensor.hpp"

namespace inet::checks {

struct CheckResult {
  std::string name;
  double worst = 0.0;  // largest observed error
  double tolerance = 0.0;
  std::size_t instances = 0;
  std::size_t skipped = 0;  // finite-difference points dropped next to a kink
  bool passed = false;
  std::string detail;
};

using LossFn = std::function<Tensor(Tape&)>;

struct GradCheckOptions {
  double step = 1e-5;
  std::size_t samples_per_tensor = 16;  // all entries when the tensor is smaller
  double kink_tolerance = 1e-4;         // relative one-sided slope disagreement
};

struct GradCheckStats {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

/// |a - b| / max(|a|, |b|, 1e-6).
double relative_error(double a, double b);

/// Compares backward() against central differences of `loss` for sampled
/// entries of every tensor in `wrt`. Points where the left and right slopes
/// disagree (a ReLU or max-pool tie inside the stencil) are skipped.
GradCheckStats gradcheck(const LossFn& loss, const std::vector<Tensor>& wrt, std::mt19937_64& rng,
                         const GradCheckOptions& options = {});

/// Connected closed triangle mesh with exactly `vertices` vertices (>= 6):
/// an octahedron refined by random face splits, pushed to a jittered sphere.
Mesh random_mesh(std::size_t vertices, std::mt19937_64& rng);

/// Per-operation gradient checks plus the encoder and end-to-end chains.
std::vector<CheckResult> gradcheck_suite(std::uint64_t seed, std::size_t instances = 10);

/// Laplacian exactness, Chebyshev-vs-eigenbasis equivalence and sampling
/// hierarchy invariants.
std::vector<CheckResult> oracle_suite(std::uint64_t seed);

bool all_passed(const std::vector<CheckResult>& results);
std::string format(const CheckResult& r);

}  // namespace inet::checks

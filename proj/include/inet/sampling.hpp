#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "inet/mesh.hpp"
#include "inet/sparse.hpp"
#include "inet/spectral.hpp"
#include "inet/tensor.hpp"

namespace inet {

/// Symmetric 4x4 error quadric stored as its upper triangle:
/// a2 ab ac ad b2 bc bd c2 cd d2.
struct Quadric {
  std::array<double, 10> q{};

  static Quadric from_plane(double a, double b, double c, double d);
  Quadric& operator+=(const Quadric& o);
  friend Quadric operator+(Quadric a, const Quadric& b) { return a += b; }
  /// v^T Q v for homogeneous v = (p, 1).
  double evaluate(const Vec3& p) const;
};

/// Sum of plane quadrics of faces incident to each vertex (unit normals,
/// unweighted). Zero-area faces contribute nothing.
std::vector<Quadric> vertex_quadrics(const Mesh& mesh);

struct CollapseCost {
  double cost = 0.0;
  Vec3 position{};     // minimizer, or the best fallback candidate
  bool singular = false;
};

inline constexpr double kQuadricSingularDet = 1e-12;

/// Cost of merging endpoints at positions pa, pb with summed quadric q. Uses
/// the optimal position when the 3x3 system is regular, otherwise the best of
/// {pa, pb, midpoint}.
CollapseCost collapse_cost(const Quadric& q, const Vec3& pa, const Vec3& pb);

struct SimplifyResult {
  Mesh mesh;                                      // kept vertices at original positions
  std::vector<std::size_t> kept;                  // coarse index -> original index (ascending)
  std::vector<std::vector<std::size_t>> origins;  // coarse index -> original vertices merged into it
  std::vector<double> collapse_costs;             // accepted costs, in order
  std::vector<Edge> collapses;                    // {survivor, removed}, original indices, in order
};

/// Greedy quadric-error edge collapse down to `target` vertices. Edges that
/// satisfy the link condition are preferred; when none is left the cheapest
/// edge is taken regardless, so very coarse levels may lose every face and
/// keep only edges. Surviving vertices keep their original coordinates.
SimplifyResult qem_simplify(const Mesh& mesh, std::size_t target);

struct ClosestPoint {
  Vec3 point{};
  std::array<double, 3> bary{};  // weights on (a, b, c), nonnegative, sum to 1
  double distance_sq = 0.0;
};

ClosestPoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Rows for the fine level. Row of a retained vertex (fine index kept[c]) is a
/// single 1 at column c; any other vertex is projected onto the nearest coarse
/// triangle (lowest face index on ties) and gets three clamped barycentric
/// weights. A coarse mesh without faces falls back to its nearest edge.
CsrMatrix barycentric_upsampler(const std::vector<Vec3>& fine, const std::vector<std::size_t>& kept,
                                const Mesh& coarse);

/// Down-sampling selection: row c has a single 1 at column kept[c].
CsrMatrix selection_matrix(const std::vector<std::size_t>& kept, std::size_t fine_count);

struct SamplingHierarchy {
  std::size_t stride = 0;
  std::vector<Mesh> levels;                  // levels[0] is the template
  std::vector<CsrMatrix> down;               // down[l]: |l+1| x |l|
  std::vector<CsrMatrix> up;                 // up[l]:   |l| x |l+1|
  std::vector<std::vector<std::size_t>> kept;  // kept[l]: level-(l+1) index -> level-l index
  std::vector<LaplacianBundle> laplacians;   // one per level
  std::uint64_t template_hash = 0;

  std::size_t depth() const { return down.size(); }
  std::vector<std::size_t> level_counts() const;
};

/// Ceil chain |l+1| = ceil(|l| / stride).
std::vector<std::size_t> hierarchy_counts(std::size_t vertices, std::size_t stride, std::size_t levels);

/// Builds `levels` successive simplifications. The coarsest level must keep at
/// least two vertices.
SamplingHierarchy build_hierarchy(const Mesh& mesh, std::size_t stride, std::size_t levels = 4);

/// Recomputes Laplacians for hierarchies restored from disk.
void attach_laplacians(SamplingHierarchy& h);

/// features (|l+1| x F) -> |l| x F through up-map q.
Tensor upsample(Tape& tape, const CsrMatrix& q, const Tensor& features);

}  // namespace inet

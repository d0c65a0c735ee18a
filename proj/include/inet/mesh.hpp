#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "inet/sparse.hpp"

namespace inet {

using Vec3 = std::array<double, 3>;
using Face = std::array<std::size_t, 3>;
using Edge = std::array<std::size_t, 2>;  // always {lo, hi}

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

struct MeshError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Triangle mesh: vertex positions plus immutable connectivity. The graph is
/// the union of face edges and `loose_edges`; loose edges only appear on very
/// coarse simplification levels where every face has collapsed away.
class Mesh {
 public:
  Mesh() = default;
  Mesh(std::vector<Vec3> vertices, std::vector<Face> faces, std::vector<Edge> loose_edges = {});

  std::size_t vertex_count() const { return vertices_.size(); }
  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Face>& faces() const { return topo_->faces; }
  /// Sorted, unique, lo < hi. Derived from faces plus loose edges.
  const std::vector<Edge>& edges() const { return topo_->edges; }
  const std::vector<Edge>& loose_edges() const { return topo_->loose; }
  const std::vector<std::vector<std::size_t>>& neighbors() const { return topo_->neighbors; }

  /// Symmetric 0/1 adjacency with zero diagonal.
  CsrMatrix adjacency() const;
  bool is_connected() const;

  /// Same connectivity object, new coordinates.
  Mesh with_vertices(std::vector<Vec3> vertices) const;
  bool same_connectivity(const Mesh& other) const;

  /// Coordinates as an M x 3 row-major buffer.
  std::vector<double> coordinates() const;
  static std::vector<Vec3> to_vertices(const std::vector<double>& flat);

  /// FNV-1a over coordinates and connectivity; stable across runs.
  std::uint64_t content_hash() const;

 private:
  struct Topology {
    std::vector<Face> faces;
    std::vector<Edge> loose;
    std::vector<Edge> edges;
    std::vector<std::vector<std::size_t>> neighbors;
  };
  std::vector<Vec3> vertices_;
  std::shared_ptr<const Topology> topo_ = std::make_shared<Topology>();
};

/// Subdivided icosahedron projected to a sphere: 12, 42, 162, 642, ... vertices.
Mesh make_icosphere(int subdivisions, double radius = 1.0);
Mesh make_octahedron(double radius = 1.0);
Mesh make_tetrahedron();
/// Closed torus on a u x v grid (u*v vertices).
Mesh make_torus(std::size_t u, std::size_t v, double major_radius, double minor_radius);

}  // namespace inet

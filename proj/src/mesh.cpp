#include "inet/mesh.hpp"

#include <algorithm>
#include <cstring>
#include <map>
#include <numbers>
#include <string>

namespace inet {

Mesh::Mesh(std::vector<Vec3> vertices, std::vector<Face> faces, std::vector<Edge> loose_edges)
    : vertices_(std::move(vertices)) {
  const std::size_t m = vertices_.size();
  auto topo = std::make_shared<Topology>();
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const auto& t = faces[f];
    for (auto v : t)
      if (v >= m)
        throw MeshError("face " + std::to_string(f) + " references vertex " + std::to_string(v) + " but mesh has " +
                        std::to_string(m) + " vertices");
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
      throw MeshError("face " + std::to_string(f) + " is degenerate (repeated vertex)");
  }
  std::vector<Edge> edges;
  edges.reserve(faces.size() * 3 + loose_edges.size());
  for (const auto& t : faces)
    for (int k = 0; k < 3; ++k) {
      auto a = t[k], b = t[(k + 1) % 3];
      edges.push_back({std::min(a, b), std::max(a, b)});
    }
  for (auto e : loose_edges) {
    if (e[0] >= m || e[1] >= m || e[0] == e[1]) throw MeshError("invalid loose edge");
    edges.push_back({std::min(e[0], e[1]), std::max(e[0], e[1])});
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  // Keep only loose edges that really are off every face.
  std::vector<Edge> face_edges;
  for (const auto& t : faces)
    for (int k = 0; k < 3; ++k) {
      auto a = t[k], b = t[(k + 1) % 3];
      face_edges.push_back({std::min(a, b), std::max(a, b)});
    }
  std::sort(face_edges.begin(), face_edges.end());
  face_edges.erase(std::unique(face_edges.begin(), face_edges.end()), face_edges.end());
  std::set_difference(edges.begin(), edges.end(), face_edges.begin(), face_edges.end(),
                      std::back_inserter(topo->loose));

  topo->neighbors.assign(m, {});
  for (auto e : edges) {
    topo->neighbors[e[0]].push_back(e[1]);
    topo->neighbors[e[1]].push_back(e[0]);
  }
  for (auto& n : topo->neighbors) std::sort(n.begin(), n.end());
  topo->faces = std::move(faces);
  topo->edges = std::move(edges);
  topo_ = std::move(topo);
}

CsrMatrix Mesh::adjacency() const {
  std::vector<Triplet> t;
  t.reserve(edges().size() * 2);
  for (auto e : edges()) {
    t.push_back({e[0], e[1], 1.0});
    t.push_back({e[1], e[0], 1.0});
  }
  return CsrMatrix::from_triplets(vertex_count(), vertex_count(), std::move(t));
}

bool Mesh::is_connected() const {
  const std::size_t m = vertex_count();
  if (m == 0) return false;
  std::vector<char> seen(m, 0);
  std::vector<std::size_t> stack{0};
  seen[0] = 1;
  std::size_t count = 1;
  while (!stack.empty()) {
    auto v = stack.back();
    stack.pop_back();
    for (auto w : neighbors()[v])
      if (!seen[w]) {
        seen[w] = 1;
        ++count;
        stack.push_back(w);
      }
  }
  return count == m;
}

Mesh Mesh::with_vertices(std::vector<Vec3> vertices) const {
  if (vertices.size() != vertices_.size())
    throw MeshError("with_vertices: expected " + std::to_string(vertices_.size()) + " vertices, got " +
                    std::to_string(vertices.size()));
  Mesh m;
  m.vertices_ = std::move(vertices);
  m.topo_ = topo_;
  return m;
}

bool Mesh::same_connectivity(const Mesh& other) const {
  if (topo_ == other.topo_) return true;
  return vertex_count() == other.vertex_count() && faces() == other.faces() && edges() == other.edges();
}

std::vector<double> Mesh::coordinates() const {
  std::vector<double> c;
  c.reserve(vertices_.size() * 3);
  for (const auto& v : vertices_) c.insert(c.end(), v.begin(), v.end());
  return c;
}

std::vector<Vec3> Mesh::to_vertices(const std::vector<double>& flat) {
  if (flat.size() % 3 != 0) throw MeshError("coordinate buffer length is not a multiple of 3");
  std::vector<Vec3> v(flat.size() / 3);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = {flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]};
  return v;
}

std::uint64_t Mesh::content_hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t n) {
    auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  std::uint64_t m = vertex_count(), f = faces().size(), e = edges().size();
  mix(&m, sizeof m);
  for (const auto& v : vertices_) mix(v.data(), sizeof(double) * 3);
  mix(&f, sizeof f);
  for (const auto& t : faces())
    for (auto i : t) {
      std::uint64_t x = i;
      mix(&x, sizeof x);
    }
  mix(&e, sizeof e);
  for (const auto& ed : edges())
    for (auto i : ed) {
      std::uint64_t x = i;
      mix(&x, sizeof x);
    }
  return h;
}

Mesh make_icosphere(int subdivisions, double radius) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                         {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                         {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  auto unit = [](Vec3 p) { return (1.0 / norm(p)) * p; };
  for (auto& p : v) p = unit(p);
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> mid;
    auto midpoint = [&](std::size_t a, std::size_t b) {
      auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back(unit(0.5 * (v[a] + v[b])));
      mid.emplace(key, v.size() - 1);
      return v.size() - 1;
    };
    std::vector<Face> next;
    next.reserve(f.size() * 4);
    for (const auto& tri : f) {
      auto a = midpoint(tri[0], tri[1]);
      auto b = midpoint(tri[1], tri[2]);
      auto c = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  for (auto& p : v) p = radius * p;
  return Mesh(std::move(v), std::move(f));
}

Mesh make_octahedron(double radius) {
  std::vector<Vec3> v = {{radius, 0, 0}, {-radius, 0, 0}, {0, radius, 0},
                         {0, -radius, 0}, {0, 0, radius}, {0, 0, -radius}};
  std::vector<Face> f = {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4}, {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}};
  return Mesh(std::move(v), std::move(f));
}

Mesh make_tetrahedron() {
  std::vector<Vec3> v = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  std::vector<Face> f = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
  return Mesh(std::move(v), std::move(f));
}

Mesh make_torus(std::size_t u, std::size_t v, double major_radius, double minor_radius) {
  if (u < 3 || v < 3) throw MeshError("torus grid needs at least 3 x 3 vertices");
  std::vector<Vec3> pts;
  pts.reserve(u * v);
  for (std::size_t i = 0; i < u; ++i) {
    double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(u);
    for (std::size_t j = 0; j < v; ++j) {
      double b = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(v);
      double r = major_radius + minor_radius * std::cos(b);
      pts.push_back({r * std::cos(a), r * std::sin(a), minor_radius * std::sin(b)});
    }
  }
  std::vector<Face> f;
  f.reserve(2 * u * v);
  auto id = [&](std::size_t i, std::size_t j) { return (i % u) * v + (j % v); };
  for (std::size_t i = 0; i < u; ++i)
    for (std::size_t j = 0; j < v; ++j) {
      f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  return Mesh(std::move(pts), std::move(f));
}

}  // namespace inet

#include "inet/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <queue>
#include <string>

#include "inet/ops.hpp"

namespace inet {

// ---- quadrics -------------------------------------------------------------

Quadric Quadric::from_plane(double a, double b, double c, double d) {
  Quadric k;
  k.q = {a * a, a * b, a * c, a * d, b * b, b * c, b * d, c * c, c * d, d * d};
  return k;
}

Quadric& Quadric::operator+=(const Quadric& o) {
  for (std::size_t i = 0; i < q.size(); ++i) q[i] += o.q[i];
  return *this;
}

double Quadric::evaluate(const Vec3& p) const {
  const double x = p[0], y = p[1], z = p[2];
  return q[0] * x * x + 2 * q[1] * x * y + 2 * q[2] * x * z + 2 * q[3] * x + q[4] * y * y + 2 * q[5] * y * z +
         2 * q[6] * y + q[7] * z * z + 2 * q[8] * z + q[9];
}

std::vector<Quadric> vertex_quadrics(const Mesh& mesh) {
  std::vector<Quadric> out(mesh.vertex_count());
  const auto& v = mesh.vertices();
  for (const auto& f : mesh.faces()) {
    Vec3 n = cross(v[f[1]] - v[f[0]], v[f[2]] - v[f[0]]);
    double len = norm(n);
    if (len == 0.0) continue;
    n = (1.0 / len) * n;
    auto k = Quadric::from_plane(n[0], n[1], n[2], -dot(n, v[f[0]]));
    for (auto i : f) out[i] += k;
  }
  return out;
}

CollapseCost collapse_cost(const Quadric& Q, const Vec3& pa, const Vec3& pb) {
  const auto& q = Q.q;
  // Gradient of v^T Q v vanishes at A p = -b with A the upper-left 3x3 block.
  const double a00 = q[0], a01 = q[1], a02 = q[2], a11 = q[4], a12 = q[5], a22 = q[7];
  const double c0 = a11 * a22 - a12 * a12;
  const double c1 = a02 * a12 - a01 * a22;
  const double c2 = a01 * a12 - a02 * a11;
  const double det = a00 * c0 + a01 * c1 + a02 * c2;
  CollapseCost r;
  if (std::abs(det) >= kQuadricSingularDet) {
    const double r0 = -q[3], r1 = -q[6], r2 = -q[8];
    // Inverse of the symmetric block via cofactors.
    const double i00 = c0, i01 = c1, i02 = c2;
    const double i11 = a00 * a22 - a02 * a02;
    const double i12 = a02 * a01 - a00 * a12;
    const double i22 = a00 * a11 - a01 * a01;
    r.position = {(i00 * r0 + i01 * r1 + i02 * r2) / det, (i01 * r0 + i11 * r1 + i12 * r2) / det,
                  (i02 * r0 + i12 * r1 + i22 * r2) / det};
    r.cost = std::max(0.0, Q.evaluate(r.position));
    return r;
  }
  r.singular = true;
  const Vec3 candidates[3] = {pa, pb, 0.5 * (pa + pb)};
  r.cost = std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) {
    double e = std::max(0.0, Q.evaluate(c));
    if (e < r.cost) {
      r.cost = e;
      r.position = c;
    }
  }
  return r;
}

// ---- simplification ---------------------------------------------------------

namespace {

struct HeapEntry {
  double cost;
  std::size_t lo, hi;
  unsigned ver_lo, ver_hi;
};

// Orders the min-heap by (cost, lo, hi).
struct HeapAfter {
  bool operator()(const HeapEntry& x, const HeapEntry& y) const {
    if (x.cost != y.cost) return x.cost > y.cost;
    if (x.lo != y.lo) return x.lo > y.lo;
    return x.hi > y.hi;
  }
};

bool contains(const std::vector<std::size_t>& sorted, std::size_t v) {
  return std::binary_search(sorted.begin(), sorted.end(), v);
}

void insert_sorted(std::vector<std::size_t>& sorted, std::size_t v) {
  auto it = std::lower_bound(sorted.begin(), sorted.end(), v);
  if (it == sorted.end() || *it != v) sorted.insert(it, v);
}

void erase_sorted(std::vector<std::size_t>& sorted, std::size_t v) {
  auto it = std::lower_bound(sorted.begin(), sorted.end(), v);
  if (it != sorted.end() && *it == v) sorted.erase(it);
}

class Simplifier {
 public:
  explicit Simplifier(const Mesh& mesh)
      : pos_(mesh.vertices()),
        quadric_(vertex_quadrics(mesh)),
        alive_(mesh.vertex_count(), 1),
        nbr_(mesh.neighbors()),
        faces_(mesh.faces()),
        face_alive_(faces_.size(), 1),
        vfaces_(mesh.vertex_count()),
        version_(mesh.vertex_count(), 0),
        origins_(mesh.vertex_count()),
        alive_count_(mesh.vertex_count()) {
    for (std::size_t f = 0; f < faces_.size(); ++f)
      for (auto v : faces_[f]) vfaces_[v].push_back(f);
    for (std::size_t v = 0; v < origins_.size(); ++v) origins_[v] = {v};
  }

  void run(std::size_t target, SimplifyResult& out) {
    for (std::size_t a = 0; a < nbr_.size(); ++a)
      for (auto b : nbr_[a])
        if (a < b) push(a, b);

    std::vector<HeapEntry> deferred;
    while (alive_count_ > target) {
      std::optional<HeapEntry> chosen;
      while (!heap_.empty()) {
        HeapEntry e = heap_.top();
        heap_.pop();
        if (stale(e)) continue;
        if (link_ok(e.lo, e.hi)) {
          chosen = e;
          break;
        }
        deferred.push_back(e);
      }
      if (!chosen) {
        // No manifold-preserving collapse remains; take the cheapest edge.
        HeapAfter after;
        for (const auto& e : deferred)
          if (!stale(e) && (!chosen || after(*chosen, e))) chosen = e;
        if (!chosen)
          throw MeshError("simplification stalled at " + std::to_string(alive_count_) + " vertices (target " +
                          std::to_string(target) + "): no collapsible edge left");
        deferred.erase(std::find_if(deferred.begin(), deferred.end(), [&](const HeapEntry& e) {
          return e.lo == chosen->lo && e.hi == chosen->hi && e.ver_lo == chosen->ver_lo && e.ver_hi == chosen->ver_hi;
        }));
      }
      auto [survivor, removed] = pick_survivor(chosen->lo, chosen->hi);
      out.collapse_costs.push_back(chosen->cost);
      out.collapses.push_back({survivor, removed});
      collapse(survivor, removed);
      for (auto n : nbr_[survivor]) push(std::min(survivor, n), std::max(survivor, n));
      for (const auto& e : deferred) heap_.push(e);
      deferred.clear();
    }
    finish(out);
  }

 private:
  void push(std::size_t lo, std::size_t hi) {
    auto c = collapse_cost(quadric_[lo] + quadric_[hi], pos_[lo], pos_[hi]);
    heap_.push({c.cost, lo, hi, version_[lo], version_[hi]});
  }

  bool stale(const HeapEntry& e) const {
    return !alive_[e.lo] || !alive_[e.hi] || version_[e.lo] != e.ver_lo || version_[e.hi] != e.ver_hi ||
           !contains(nbr_[e.lo], e.hi);
  }

  std::vector<std::size_t> apexes(std::size_t a, std::size_t b) const {
    std::vector<std::size_t> out;
    for (auto f : vfaces_[a]) {
      if (!face_alive_[f]) continue;
      const auto& t = faces_[f];
      if (t[0] != b && t[1] != b && t[2] != b) continue;
      for (auto v : t)
        if (v != a && v != b) out.push_back(v);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  bool link_ok(std::size_t a, std::size_t b) const {
    std::vector<std::size_t> common;
    std::set_intersection(nbr_[a].begin(), nbr_[a].end(), nbr_[b].begin(), nbr_[b].end(),
                          std::back_inserter(common));
    return common == apexes(a, b);
  }

  std::pair<std::size_t, std::size_t> pick_survivor(std::size_t a, std::size_t b) const {
    Quadric q = quadric_[a] + quadric_[b];
    double ea = q.evaluate(pos_[a]), eb = q.evaluate(pos_[b]);
    if (eb < ea) return {b, a};
    return {a, b};  // a < b, so ties keep the lower index
  }

  void collapse(std::size_t a, std::size_t b) {
    for (auto f : vfaces_[b]) {
      if (!face_alive_[f]) continue;
      auto& t = faces_[f];
      if (t[0] == a || t[1] == a || t[2] == a) {
        face_alive_[f] = 0;
        continue;
      }
      for (auto& v : t)
        if (v == b) v = a;
      auto key = sorted(t);
      bool duplicate = false;
      for (auto g : vfaces_[a])
        if (g != f && face_alive_[g] && sorted(faces_[g]) == key) duplicate = true;
      if (duplicate)
        face_alive_[f] = 0;
      else
        vfaces_[a].push_back(f);
    }
    vfaces_[b].clear();

    for (auto n : nbr_[b]) {
      if (n == a) continue;
      erase_sorted(nbr_[n], b);
      insert_sorted(nbr_[n], a);
      insert_sorted(nbr_[a], n);
    }
    erase_sorted(nbr_[a], b);
    nbr_[b].clear();

    quadric_[a] += quadric_[b];
    origins_[a].insert(origins_[a].end(), origins_[b].begin(), origins_[b].end());
    std::sort(origins_[a].begin(), origins_[a].end());
    origins_[b].clear();
    alive_[b] = 0;
    ++version_[a];
    ++version_[b];
    --alive_count_;
  }

  static Face sorted(Face t) {
    std::sort(t.begin(), t.end());
    return t;
  }

  void finish(SimplifyResult& out) {
    std::vector<std::size_t> remap(pos_.size(), std::numeric_limits<std::size_t>::max());
    std::vector<Vec3> verts;
    for (std::size_t v = 0; v < pos_.size(); ++v)
      if (alive_[v]) {
        remap[v] = out.kept.size();
        out.kept.push_back(v);
        out.origins.push_back(origins_[v]);
        verts.push_back(pos_[v]);
      }
    std::vector<Face> faces;
    for (std::size_t f = 0; f < faces_.size(); ++f)
      if (face_alive_[f]) faces.push_back({remap[faces_[f][0]], remap[faces_[f][1]], remap[faces_[f][2]]});
    std::vector<Edge> edges;
    for (std::size_t v = 0; v < nbr_.size(); ++v)
      for (auto n : nbr_[v])
        if (v < n) edges.push_back({remap[v], remap[n]});
    out.mesh = Mesh(std::move(verts), std::move(faces), std::move(edges));
  }

  std::vector<Vec3> pos_;
  std::vector<Quadric> quadric_;
  std::vector<char> alive_;
  std::vector<std::vector<std::size_t>> nbr_;
  std::vector<Face> faces_;
  std::vector<char> face_alive_;
  std::vector<std::vector<std::size_t>> vfaces_;
  std::vector<unsigned> version_;
  std::vector<std::vector<std::size_t>> origins_;
  std::size_t alive_count_;
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, HeapAfter> heap_;
};

}  // namespace

SimplifyResult qem_simplify(const Mesh& mesh, std::size_t target) {
  if (target < 2) throw MeshError("simplification target must be at least 2 vertices");
  if (target > mesh.vertex_count())
    throw MeshError("simplification target " + std::to_string(target) + " exceeds vertex count " +
                    std::to_string(mesh.vertex_count()));
  if (!mesh.is_connected()) throw MeshError("cannot simplify a disconnected mesh");
  SimplifyResult out;
  Simplifier(mesh).run(target, out);
  if (!out.mesh.is_connected())
    throw MeshError("simplification disconnected the mesh at " + std::to_string(out.mesh.vertex_count()) +
                    " vertices");
  return out;
}

// ---- barycentric up-sampling -----------------------------------------------

ClosestPoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  auto make = [&](double u, double v, double w) {
    ClosestPoint r;
    r.bary = {u, v, w};
    r.point = u * a + v * b + w * c;
    Vec3 d = p - r.point;
    r.distance_sq = dot(d, d);
    return r;
  };
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0 && d2 <= 0) return make(1, 0, 0);
  const Vec3 bp = p - b;
  const double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0 && d4 <= d3) return make(0, 1, 0);
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    double v = d1 / (d1 - d3);
    return make(1 - v, v, 0);
  }
  const Vec3 cp = p - c;
  const double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0 && d5 <= d6) return make(0, 0, 1);
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    double w = d2 / (d2 - d6);
    return make(1 - w, 0, w);
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return make(0, 1 - w, w);
  }
  const double sum = va + vb + vc;
  if (!(sum > 0)) {
    // Zero-area triangle: best point on its three edges.
    auto seg = [&](const Vec3& s, const Vec3& t, int i, int j) {
      Vec3 st = t - s;
      double len = dot(st, st);
      double x = len > 0 ? std::clamp(dot(p - s, st) / len, 0.0, 1.0) : 0.0;
      std::array<double, 3> w{0, 0, 0};
      w[i] = 1 - x;
      w[j] = x;
      return make(w[0], w[1], w[2]);
    };
    ClosestPoint best = seg(a, b, 0, 1);
    for (auto cand : {seg(b, c, 1, 2), seg(a, c, 0, 2)})
      if (cand.distance_sq < best.distance_sq) best = cand;
    return best;
  }
  const double v = vb / sum, w = vc / sum;
  return make(1 - v - w, v, w);
}

CsrMatrix selection_matrix(const std::vector<std::size_t>& kept, std::size_t fine_count) {
  std::vector<Triplet> t;
  t.reserve(kept.size());
  for (std::size_t c = 0; c < kept.size(); ++c) t.push_back({c, kept[c], 1.0});
  return CsrMatrix::from_triplets(kept.size(), fine_count, std::move(t));
}

CsrMatrix barycentric_upsampler(const std::vector<Vec3>& fine, const std::vector<std::size_t>& kept,
                                const Mesh& coarse) {
  if (kept.size() != coarse.vertex_count()) throw MeshError("kept list does not match the coarse mesh");
  constexpr auto none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> coarse_of(fine.size(), none);
  for (std::size_t c = 0; c < kept.size(); ++c) {
    if (kept[c] >= fine.size()) throw MeshError("kept vertex outside the fine mesh");
    coarse_of[kept[c]] = c;
  }
  const auto& cv = coarse.vertices();
  std::vector<Triplet> t;
  t.reserve(fine.size() * 3);
  for (std::size_t i = 0; i < fine.size(); ++i) {
    if (coarse_of[i] != none) {
      t.push_back({i, coarse_of[i], 1.0});
      continue;
    }
    const Vec3& p = fine[i];
    if (!coarse.faces().empty()) {
      ClosestPoint best;
      std::size_t best_face = none;
      for (std::size_t f = 0; f < coarse.faces().size(); ++f) {
        const auto& tri = coarse.faces()[f];
        auto cp = closest_point_on_triangle(p, cv[tri[0]], cv[tri[1]], cv[tri[2]]);
        if (best_face == none || cp.distance_sq < best.distance_sq) {
          best = cp;
          best_face = f;
        }
      }
      const auto& tri = coarse.faces()[best_face];
      for (int k = 0; k < 3; ++k) t.push_back({i, tri[k], best.bary[k]});
    } else if (!coarse.edges().empty()) {
      double best_d = std::numeric_limits<double>::infinity();
      Edge best_e{};
      double best_x = 0;
      for (auto e : coarse.edges()) {
        Vec3 st = cv[e[1]] - cv[e[0]];
        double len = dot(st, st);
        double x = len > 0 ? std::clamp(dot(p - cv[e[0]], st) / len, 0.0, 1.0) : 0.0;
        Vec3 d = p - (cv[e[0]] + x * st);
        if (dot(d, d) < best_d) {
          best_d = dot(d, d);
          best_e = e;
          best_x = x;
        }
      }
      t.push_back({i, best_e[0], 1.0 - best_x});
      t.push_back({i, best_e[1], best_x});
    } else {
      throw MeshError("coarse mesh has no faces or edges to project onto");
    }
  }
  return CsrMatrix::from_triplets(fine.size(), coarse.vertex_count(), std::move(t));
}

// ---- hierarchy ----------------------------------------------------------------

std::vector<std::size_t> SamplingHierarchy::level_counts() const {
  std::vector<std::size_t> c;
  for (const auto& m : levels) c.push_back(m.vertex_count());
  return c;
}

std::vector<std::size_t> hierarchy_counts(std::size_t vertices, std::size_t stride, std::size_t levels) {
  std::vector<std::size_t> c{vertices};
  for (std::size_t l = 0; l < levels; ++l) c.push_back((c.back() + stride - 1) / stride);
  return c;
}

SamplingHierarchy build_hierarchy(const Mesh& mesh, std::size_t stride, std::size_t levels) {
  if (stride < 2) throw ConfigError("hierarchy stride must be at least 2");
  if (levels < 1) throw ConfigError("hierarchy needs at least one level");
  auto counts = hierarchy_counts(mesh.vertex_count(), stride, levels);
  if (counts.back() < 2) {
    std::size_t min_m = 1;
    for (std::size_t l = 0; l < levels; ++l) min_m *= stride;
    throw MeshError("mesh with " + std::to_string(mesh.vertex_count()) + " vertices is too small for " +
                    std::to_string(levels) + " levels at stride " + std::to_string(stride) + "; need at least " +
                    std::to_string(min_m + 1));
  }
  SamplingHierarchy h;
  h.stride = stride;
  h.template_hash = mesh.content_hash();
  h.levels.push_back(mesh);
  for (std::size_t l = 0; l < levels; ++l) {
    auto r = qem_simplify(h.levels[l], counts[l + 1]);
    h.down.push_back(selection_matrix(r.kept, counts[l]));
    h.up.push_back(barycentric_upsampler(h.levels[l].vertices(), r.kept, r.mesh));
    h.kept.push_back(r.kept);
    h.levels.push_back(std::move(r.mesh));
  }
  attach_laplacians(h);
  return h;
}

void attach_laplacians(SamplingHierarchy& h) {
  h.laplacians.clear();
  for (const auto& m : h.levels) h.laplacians.push_back(build_laplacian(m));
}

Tensor upsample(Tape& tape, const CsrMatrix& q, const Tensor& features) {
  if (features.rank() != 2 || features.dim(0) != q.cols())
    throw DimensionError("upsample: map takes " + std::to_string(q.cols()) + " coarse vertices, features are " +
                         shape_str(features.shape()));
  return ops::sparse_matmul(tape, q, features);
}

}  // namespace inet

#include <doctest.h>

#include <random>
#include <set>

#include "inet/ops.hpp"
#include "inet/sampling.hpp"
#include "oracles.hpp"

using namespace inet;

namespace {

// Brute-force edge cost: explicit 4x4 quadric from the plane list, optimal
// point by Cramer's rule, otherwise the best of the endpoints and midpoint.
double brute_cost(const std::vector<std::array<double, 4>>& planes, const Vec3& a, const Vec3& b) {
  double q[4][4] = {};
  for (const auto& p : planes)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) q[i][j] += p[i] * p[j];
  auto det3 = [](double m[3][3]) {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  };
  double m[3][3], rhs[3];
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m[i][j] = q[i][j];
    rhs[i] = -q[i][3];
  }
  double d = det3(m);
  if (std::abs(d) >= kQuadricSingularDet) {
    Vec3 x;
    for (int c = 0; c < 3; ++c) {
      double mc[3][3];
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) mc[i][j] = j == c ? rhs[i] : m[i][j];
      x[c] = det3(mc) / d;
    }
    return oracle::plane_error(planes, x);
  }
  Vec3 mid = 0.5 * (a + b);
  return std::min({oracle::plane_error(planes, a), oracle::plane_error(planes, b), oracle::plane_error(planes, mid)});
}

std::vector<double> to_vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

void check_up_rows(const CsrMatrix& q, const std::vector<std::size_t>& kept) {
  std::set<std::size_t> retained(kept.begin(), kept.end());
  auto rp = q.row_ptr();
  auto vals = q.values();
  for (std::size_t r = 0; r < q.rows(); ++r) {
    std::size_t n = rp[r + 1] - rp[r];
    double s = 0.0;
    for (auto i = rp[r]; i < rp[r + 1]; ++i) {
      REQUIRE(vals[i] >= 0.0);
      REQUIRE(vals[i] <= 1.0);
      s += vals[i];
    }
    REQUIRE(std::abs(s - 1.0) < 1e-12);
    if (retained.count(r)) {
      REQUIRE(n == 1);
      REQUIRE(vals[rp[r]] == 1.0);
    } else {
      REQUIRE((n == 3 || n == 2));
    }
  }
}

}  // namespace

TEST_CASE("quadric of a plane vanishes on it") {
  auto q = Quadric::from_plane(0, 0, 1, -2);
  CHECK(q.evaluate({5, -3, 2}) == 0.0);
  CHECK(q.evaluate({0, 0, 3}) == doctest::Approx(1.0));
  auto sum = q + Quadric::from_plane(1, 0, 0, 0);
  CHECK(sum.evaluate({1, 0, 3}) == doctest::Approx(2.0));
}

TEST_CASE("planar quad collapses at zero cost") {
  Mesh quad({{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}}, {{0, 1, 2}, {0, 2, 3}});
  auto quads = vertex_quadrics(quad);
  for (auto e : quad.edges()) {
    auto c = collapse_cost(quads[e[0]] + quads[e[1]], quad.vertices()[e[0]], quad.vertices()[e[1]]);
    CHECK(std::abs(c.cost) < 1e-15);
    CHECK(std::abs(c.position[2]) < 1e-12);
  }
  auto r = qem_simplify(quad, 3);
  CHECK(r.mesh.vertex_count() == 3);
  CHECK(r.collapse_costs.size() == 1);
  CHECK(std::abs(r.collapse_costs[0]) < 1e-15);
  auto brute = oracle::rescan_simplify(quad, 3, brute_cost);
  CHECK(std::abs(brute.costs[0]) < 1e-15);
}

TEST_CASE("octahedron at its own size is unchanged") {
  auto oct = make_octahedron(2.0);
  auto r = qem_simplify(oct, 6);
  CHECK(r.mesh.vertices() == oct.vertices());
  CHECK(r.mesh.faces() == oct.faces());
  CHECK(r.kept == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
  CHECK(r.collapse_costs.empty());
}

TEST_CASE("icosphere 162 to 42") {
  auto ico = make_icosphere(2, 1.0);
  REQUIRE(ico.vertex_count() == 162);
  auto r = qem_simplify(ico, 42);
  CHECK(r.mesh.vertex_count() == 42);
  CHECK(r.mesh.is_connected());
  CHECK(r.kept.size() == 42);
  for (std::size_t c = 0; c < 42; ++c) CHECK(r.mesh.vertices()[c] == ico.vertices()[r.kept[c]]);
  std::size_t merged = 0;
  for (const auto& o : r.origins) merged += o.size();
  CHECK(merged == 162);
}

TEST_CASE("simplification matches the rescan oracle") {
  // Jittered so that no two candidate edges tie in cost.
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n(0.0, 0.03);
  auto jitter = [&](const Mesh& m, double s) {
    std::vector<Vec3> v = m.vertices();
    for (auto& p : v) p = p + s * Vec3{n(rng), n(rng), n(rng)};
    return m.with_vertices(v);
  };
  std::vector<Mesh> meshes{jitter(make_icosphere(1, 3.0), 3.0), jitter(make_octahedron(1.0), 1.0),
                           jitter(make_torus(8, 6, 3.0, 1.0), 1.0), jitter(make_icosphere(2, 1.0), 1.0)};

  for (const auto& mesh : meshes) {
    std::size_t target = std::max<std::size_t>(4, mesh.vertex_count() / 3);
    auto r = qem_simplify(mesh, target);
    auto brute = oracle::rescan_simplify(mesh, target, brute_cost);
    CHECK(r.kept == brute.kept);
    REQUIRE(r.collapse_costs.size() == brute.costs.size());
    for (std::size_t i = 0; i < brute.costs.size(); ++i)
      CHECK(r.collapse_costs[i] == doctest::Approx(brute.costs[i]).epsilon(1e-9).scale(1e-12));
    CHECK(r.mesh.is_connected());
  }
}

TEST_CASE("collapse costs are non-decreasing on a sphere") {
  auto r = qem_simplify(make_icosphere(2, 10.0), 42);
  for (std::size_t i = 1; i < r.collapse_costs.size(); ++i)
    CHECK(r.collapse_costs[i] >= r.collapse_costs[i - 1] - 1e-12);
}

TEST_CASE("hierarchy level counts") {
  CHECK(hierarchy_counts(1024, 4, 4) == std::vector<std::size_t>{1024, 256, 64, 16, 4});
  CHECK(hierarchy_counts(642, 3, 4) == std::vector<std::size_t>{642, 214, 72, 24, 8});
  CHECK(hierarchy_counts(162, 3, 4) == std::vector<std::size_t>{162, 54, 18, 6, 2});
  CHECK(hierarchy_counts(642, 4, 4) == std::vector<std::size_t>{642, 161, 41, 11, 3});
}

TEST_CASE("icosphere hierarchies follow the ceil chain") {
  auto a = build_hierarchy(make_icosphere(2, 20.0), 3);
  CHECK(a.level_counts() == hierarchy_counts(162, 3, 4));
  auto b = build_hierarchy(make_icosphere(3, 20.0), 4);
  CHECK(b.level_counts() == hierarchy_counts(642, 4, 4));
  for (const auto& h : {a, b})
    for (std::size_t l = 0; l < 4; ++l) check_up_rows(h.up[l], h.kept[l]);
}

TEST_CASE("hierarchy on a 1024-vertex torus with stride 4") {
  auto h = build_hierarchy(make_torus(32, 32, 30.0, 10.0), 4);
  CHECK(h.level_counts() == std::vector<std::size_t>{1024, 256, 64, 16, 4});
  REQUIRE(h.laplacians.size() == 5);
  for (std::size_t l = 0; l < 5; ++l) {
    CHECK(h.laplacians[l].vertex_count() == h.levels[l].vertex_count());
    CHECK(h.levels[l].is_connected());
  }
}

TEST_CASE("hierarchy maps on the 642 icosphere") {
  auto h = build_hierarchy(make_icosphere(3, 20.0), 3);
  REQUIRE(h.level_counts() == std::vector<std::size_t>{642, 214, 72, 24, 8});
  for (std::size_t l = 0; l < 4; ++l) {
    const auto& fine = h.levels[l];
    const auto& coarse = h.levels[l + 1];
    // each down row selects one vertex
    auto rp = h.down[l].row_ptr();
    for (std::size_t r = 0; r < h.down[l].rows(); ++r) {
      REQUIRE(rp[r + 1] - rp[r] == 1);
      REQUIRE(h.down[l].values()[rp[r]] == 1.0);
    }
    check_up_rows(h.up[l], h.kept[l]);

    Tape t(false);
    Tensor x(Shape{fine.vertex_count(), 3}, fine.coordinates());
    auto down = to_vec(ops::sparse_matmul(t, h.down[l], x));
    CHECK(down == coarse.coordinates());
    auto round = to_vec(upsample(t, h.up[l], Tensor(Shape{coarse.vertex_count(), 3}, down)));
    for (std::size_t c = 0; c < h.kept[l].size(); ++c)
      for (std::size_t k = 0; k < 3; ++k) CHECK(round[h.kept[l][c] * 3 + k] == x[h.kept[l][c] * 3 + k]);
  }
}

TEST_CASE("hierarchy rejects meshes that are too small") {
  CHECK_THROWS(build_hierarchy(make_octahedron(1.0), 3));
}

TEST_CASE("upsample examples") {
  Mesh coarse({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}});
  // fine vertex 3 sits on the triangle with weights (0.2, 0.3, 0.5)
  Vec3 p = 0.2 * coarse.vertices()[0] + 0.3 * coarse.vertices()[1] + 0.5 * coarse.vertices()[2];
  std::vector<Vec3> fine = coarse.vertices();
  fine.push_back(p);
  auto q = barycentric_upsampler(fine, {0, 1, 2}, coarse);
  CHECK(q.at(3, 0) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(q.at(3, 1) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(q.at(3, 2) == doctest::Approx(0.5).epsilon(1e-12));

  Tape t(false);
  Tensor f({3, 2}, {1, 10, 2, 20, 3, 30});
  auto y = upsample(t, q, f);
  CHECK(y[0] == 1.0);
  CHECK(y[5] == 30.0);
  CHECK(y[6] == doctest::Approx(0.2 * 1 + 0.3 * 2 + 0.5 * 3));
  CHECK(y[7] == doctest::Approx(0.2 * 10 + 0.3 * 20 + 0.5 * 30));

  auto pos = to_vec(upsample(t, q, Tensor({3, 3}, coarse.coordinates())));
  for (int k = 0; k < 3; ++k) CHECK(std::abs(pos[9 + k] - p[k]) < 1e-10);
  CHECK_THROWS_AS(upsample(t, q, Tensor::zeros({4, 2})), DimensionError);
}

TEST_CASE("projection clamps to the triangle") {
  auto cp = closest_point_on_triangle({2, 2, 1}, {0, 0, 0}, {1, 0, 0}, {0, 1, 0});
  CHECK(cp.bary[0] == doctest::Approx(0.0));
  CHECK(cp.bary[1] == doctest::Approx(0.5));
  CHECK(cp.bary[2] == doctest::Approx(0.5));
  auto corner = closest_point_on_triangle({-1, -1, 0}, {0, 0, 0}, {1, 0, 0}, {0, 1, 0});
  CHECK(corner.bary[0] == doctest::Approx(1.0));
  CHECK(corner.distance_sq == doctest::Approx(2.0));
}

TEST_CASE("upsample gradient is the transpose") {
  std::mt19937_64 rng(33);
  auto h = build_hierarchy(make_icosphere(2, 5.0), 3);
  const auto& q = h.up[0];
  Tensor f({q.cols(), 2}, oracle::random_vector(q.cols() * 2, rng), true);
  auto w = oracle::random_vector(q.rows() * 2, rng);
  Tape t;
  t.backward(ops::weighted_sum(t, upsample(t, q, f), w));
  auto want = q.transposed().multiply(w, 2);
  CHECK(oracle::max_abs_diff(to_vec(Tensor(f.shape(), {f.grad().begin(), f.grad().end()})), want) < 1e-12);

  auto data = f.mutable_data();
  for (std::size_t i = 0; i < f.size(); i += 7) {
    auto eval = [&] {
      Tape off(false);
      return ops::weighted_sum(off, upsample(off, q, f), w).item();
    };
    CHECK(oracle::central_difference(eval, data[i]) == doctest::Approx(want[i]).epsilon(1e-6));
  }
}

#include <doctest.h>

#include <filesystem>
#include <random>

#include "inet/io.hpp"
#include "oracles.hpp"

using namespace inet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("inet_io_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("tetrahedron OFF round trip") {
  auto tet = make_tetrahedron();
  auto text = io::format_off(tet);
  auto back = io::parse_off(text);
  CHECK(back.vertices() == tet.vertices());
  CHECK(back.faces() == tet.faces());
  CHECK(io::format_off(back) == text);

  std::string hand = "OFF\n# comment\n4 4 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n";
  auto m = io::parse_off(hand);
  CHECK(m.vertex_count() == 4);
  CHECK(m.faces().size() == 4);
}

TEST_CASE("OFF errors carry the line number") {
  std::string bad_index = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 3\n";
  auto msg = error_of([&] { io::parse_off(bad_index, "m.off"); });
  CHECK(msg.find("m.off:6:") != std::string::npos);

  std::string quad = "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
  msg = error_of([&] { io::parse_off(quad, "q.off"); });
  CHECK(msg.find("q.off:7:") != std::string::npos);
  CHECK(msg.find("triang") != std::string::npos);

  CHECK_THROWS_AS(io::parse_off("PLY\n0 0 0\n"), io::ParseError);
  CHECK_THROWS_AS(io::parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 0 1\n"), io::ParseError);
  CHECK_THROWS_AS(io::parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n"), io::ParseError);
}

TEST_CASE("icosphere round trips coordinate-exact") {
  auto ico = make_icosphere(3, 17.3);
  std::mt19937_64 rng(61);
  std::vector<Vec3> v = ico.vertices();
  std::normal_distribution<double> n(0.0, 1e-3);
  for (auto& p : v) p = p + Vec3{n(rng), n(rng), n(rng)};
  auto m = ico.with_vertices(v);
  auto off = io::parse_off(io::format_off(m));
  CHECK(off.vertices() == m.vertices());
  CHECK(off.faces() == m.faces());
  auto obj = io::parse_obj(io::format_obj(m));
  CHECK(obj.vertices() == m.vertices());
  CHECK(obj.faces() == m.faces());
}

TEST_CASE("OBJ reader accepts slash tokens") {
  std::string text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvn 0 0 1\nf 1/1/1 2/1/1 3//1\n";
  auto m = io::parse_obj(text);
  CHECK(m.vertex_count() == 3);
  CHECK(m.faces() == std::vector<Face>{{0, 1, 2}});
  CHECK_THROWS_AS(io::parse_obj("v 0 0 0\nf 1 2 3\n"), io::ParseError);
}

TEST_CASE("mesh files by extension") {
  TempDir dir;
  auto m = make_octahedron(2.0);
  io::write_mesh(dir.path / "a.off", m);
  io::write_mesh(dir.path / "a.obj", m);
  CHECK(io::read_mesh(dir.path / "a.off").vertices() == m.vertices());
  CHECK(io::read_mesh(dir.path / "a.obj").faces() == m.faces());
  CHECK_THROWS_AS(io::write_mesh(dir.path / "a.stl", m), io::ParseError);
}

TEST_CASE("PGM 8-bit example") {
  std::string p2 = "P2\n2 2\n255\n0 255\n128 64\n";
  auto img = io::parse_pgm(p2);
  CHECK(img.shape() == Shape{2, 2, 1});
  CHECK(img[0] == 0.0);
  CHECK(img[1] == 1.0);
  CHECK(img[2] == doctest::Approx(0.50196).epsilon(1e-5));
  CHECK(img[3] == doctest::Approx(0.25098).epsilon(1e-5));
  CHECK(io::parse_pgm(io::format_pgm(img, 255, true)).data().size() == 4);
  auto again = io::parse_pgm(io::format_pgm(img, 255));
  CHECK(std::equal(again.data().begin(), again.data().end(), img.data().begin()));
}

TEST_CASE("PGM 16-bit round trip") {
  std::mt19937_64 rng(62);
  std::vector<double> v(12 * 9);
  for (auto& x : v) x = static_cast<double>(rng() % 65536) / 65535.0;
  Tensor img({12, 9, 1}, v);
  for (bool ascii : {false, true}) {
    auto back = io::parse_pgm(io::format_pgm(img, 65535, ascii));
    CHECK(back.shape() == img.shape());
    CHECK(std::equal(back.data().begin(), back.data().end(), img.data().begin()));
  }
}

TEST_CASE("PGM errors") {
  auto msg = error_of([] { io::parse_pgm(std::string("P5\n2 2\n255\n") + std::string(3, 'x'), "t.pgm"); });
  CHECK(msg.find("expected 4 bytes, got 3") != std::string::npos);
  CHECK_THROWS_AS(io::parse_pgm("P6\n1 1\n255\n\x01"), io::ParseError);
  CHECK_THROWS_AS(io::parse_pgm("P2\n1 1\n255\n300\n"), io::ParseError);
}

TEST_CASE("atomic write leaves no temporaries") {
  TempDir dir;
  io::atomic_write(dir.path / "x.txt", "hello");
  io::atomic_write(dir.path / "x.txt", "bye");
  CHECK(io::read_file(dir.path / "x.txt") == "bye");
  std::size_t n = 0;
  for ([[maybe_unused]] auto& e : fs::directory_iterator(dir.path)) ++n;
  CHECK(n == 1);
}

TEST_CASE("checkpoint round trip and mismatch") {
  TempDir dir;
  auto h = std::make_shared<const SamplingHierarchy>(build_hierarchy(make_icosphere(2, 20.0), 3));
  std::mt19937_64 rng(63);
  ModelConfig cfg;
  auto a = ModelParams::create(cfg, h, rng);
  a.normalizer.scale = 2.5;
  a.normalizer.mean[4] = 1.25;
  a.encoder.stem_norm.stats.mean[0] = 0.3;
  io::save_checkpoint(dir.path / "a.ckpt", a, {{"fold_index", "3"}});

  auto b = ModelParams::create(cfg, h, rng);
  auto meta = io::load_checkpoint(dir.path / "a.ckpt", b);
  CHECK(meta.at("fold_index") == "3");
  CHECK(io::read_checkpoint_metadata(dir.path / "a.ckpt").at("fold_index") == "3");
  auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(), pb[i].tensor.data().begin()));
  CHECK(b.normalizer.scale == 2.5);
  CHECK(b.normalizer.mean == a.normalizer.mean);
  CHECK(b.encoder.stem_norm.stats.mean[0] == 0.3);

  ModelConfig other;
  other.features = 8;
  auto c = ModelParams::create(other, h, rng);
  CHECK_THROWS_AS(io::load_checkpoint(dir.path / "a.ckpt", c), ConfigError);

  auto bytes = io::read_file(dir.path / "a.ckpt");
  io::atomic_write(dir.path / "cut.ckpt", bytes.substr(0, bytes.size() - 9));
  CHECK_THROWS(io::load_checkpoint(dir.path / "cut.ckpt", b));
}

TEST_CASE("hierarchy sidecar round trip") {
  auto h = build_hierarchy(make_icosphere(2, 20.0), 3);
  auto bytes = io::format_hierarchy(h);
  auto back = io::parse_hierarchy(bytes);
  CHECK(back.template_hash == h.template_hash);
  CHECK(back.stride == 3);
  CHECK(back.level_counts() == h.level_counts());
  for (std::size_t l = 0; l < 5; ++l) {
    CHECK(back.levels[l].vertices() == h.levels[l].vertices());
    CHECK(back.levels[l].edges() == h.levels[l].edges());
    CHECK(back.laplacians[l].lambda_max == h.laplacians[l].lambda_max);
  }
  for (std::size_t l = 0; l < 4; ++l) {
    CHECK(back.up[l].to_dense() == h.up[l].to_dense());
    CHECK(back.down[l].to_dense() == h.down[l].to_dense());
    CHECK(back.kept[l] == h.kept[l]);
  }
  CHECK_THROWS_AS(io::parse_hierarchy(bytes.substr(0, bytes.size() / 2)), io::ParseError);
  CHECK_THROWS_AS(io::parse_hierarchy("NOTAHIER" + bytes.substr(8)), io::ParseError);
}

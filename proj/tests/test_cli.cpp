#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "inet/io.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  std::string cmd = std::string(INET_CLI) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// folds.csv without the wall_seconds column.
std::string csv_without_time(const fs::path& p) {
  std::istringstream in(inet::io::read_file(p));
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

struct Workspace {
  fs::path root;
  Workspace() {
    root = fs::temp_directory_path() / ("inet_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(root);
    std::ofstream(root / "tiny.cfg") << "synthetic.frames = 3\n"
                                        "encoder.input_height = 32\n"
                                        "encoder.input_width = 32\n"
                                        "train.max_epochs = 2\n";
  }
  ~Workspace() { fs::remove_all(root); }
  std::string cfg() const { return "-c " + (root / "tiny.cfg").string(); }
  std::string at(const std::string& name) const { return (root / name).string(); }
};

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(run("") != 0);
  CHECK(run("train --bogus-flag") == 2);
  Workspace w;
  CHECK(run("train " + w.cfg() + " -d " + w.at("d") + " -o " + w.at("o")) == 2);  // no --seed
  CHECK(run("generate-data " + w.cfg() + " --set train.nonsense=1 -d " + w.at("d")) == 2);
}

TEST_CASE("gradcheck passes") { CHECK(run("gradcheck --seed 3 --instances 2") == 0); }

TEST_CASE("oracle-check passes") { CHECK(run("oracle-check --seed 3") == 0); }

TEST_CASE("train is reproducible and infer checks the hierarchy") {
  Workspace w;
  REQUIRE(run("generate-data " + w.cfg() + " --seed 1 -d " + w.at("data")) == 0);
  CHECK(fs::exists(w.root / "data" / "manifest.json"));
  CHECK(fs::exists(w.root / "data" / "frame_2.off"));
  CHECK(fs::exists(w.root / "data" / "frame_2.pgm"));
  // existing outputs are left alone
  CHECK(run("generate-data " + w.cfg() + " --seed 2 -d " + w.at("data")) == 0);
  auto manifest = inet::io::read_file(w.root / "data" / "manifest.json");

  REQUIRE(run("train " + w.cfg() + " --seed 7 -d " + w.at("data") + " -o " + w.at("a")) == 0);
  REQUIRE(run("train " + w.cfg() + " --seed 7 -d " + w.at("data") + " -o " + w.at("b")) == 0);
  CHECK(inet::io::read_file(w.root / "data" / "manifest.json") == manifest);
  auto a = csv_without_time(w.root / "a" / "folds.csv");
  CHECK(a.rfind("fold_index,frames_trained,final_l1,distance_error_mm", 0) == 0);
  CHECK(a == csv_without_time(w.root / "b" / "folds.csv"));
  CHECK(fs::exists(w.root / "a" / "fold_0.ckpt"));
  CHECK(fs::exists(w.root / "a" / "fold_0_pred.obj"));
  CHECK(run("eval " + w.cfg() + " -d " + w.at("data") + " -o " + w.at("a")) == 0);

  const std::string ckpt = " --checkpoint " + w.at("a/fold_0.ckpt");
  const std::string img = " --image " + w.at("data/frame_0.pgm");
  CHECK(run("infer" + ckpt + " --hierarchy " + w.at("a/hierarchy.inet") + img + " --output " + w.at("p.off")) == 0);
  CHECK(inet::io::read_mesh(w.root / "p.off").vertex_count() == 162);

  REQUIRE(run("generate-data " + w.cfg() + " --set synthetic.radius=18 --seed 1 -d " + w.at("other")) == 0);
  REQUIRE(run("train " + w.cfg() + " --set synthetic.radius=18 --seed 7 -d " + w.at("other") + " -o " +
              w.at("c")) == 0);
  CHECK(run("infer" + ckpt + " --hierarchy " + w.at("c/hierarchy.inet") + img + " --output " + w.at("q.off")) == 1);
  CHECK_FALSE(fs::exists(w.root / "q.off"));
}

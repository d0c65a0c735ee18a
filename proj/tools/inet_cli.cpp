#include <omp.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "inet/checks.hpp"
#include "inet/config.hpp"
#include "inet/io.hpp"
#include "inet/model.hpp"
#include "inet/sampling.hpp"
#include "inet/synthetic.hpp"
#include "inet/training.hpp"

namespace fs = std::filesystem;
using namespace inet;

namespace {

// Bad flags or config values; mapped to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::vector<std::string> settings;
  std::string output_dir;
  std::string dataset_dir;
  bool force = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "experiment config file (key = value)");
  cmd->add_option("--set", c.settings, "override one config key, key=value (repeatable)");
  cmd->add_option("-o,--out", c.output_dir, "output directory");
  cmd->add_option("-d,--data", c.dataset_dir, "dataset directory");
  cmd->add_flag("--force", c.force, "overwrite existing outputs");
}

ExperimentConfig resolve_config(const Common& c, std::optional<std::uint64_t> seed) {
  try {
    ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
    if (const char* env = std::getenv("INET_OUTPUT_DIR"); env && *env) cfg.output_dir = env;
    if (const char* env = std::getenv("INET_THREADS"); env && *env) apply_setting(cfg, "runtime.threads", env);
    for (const auto& s : c.settings) {
      auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    if (!c.output_dir.empty()) cfg.output_dir = c.output_dir;
    if (!c.dataset_dir.empty()) cfg.dataset_dir = c.dataset_dir;
    if (seed) cfg.train.seed = *seed;
    cfg.validate();
    if (cfg.threads) omp_set_num_threads(static_cast<int>(cfg.threads));
    return cfg;
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  } catch (const io::ParseError& e) {
    throw UsageError(e.what());
  }
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << v;
  return s.str();
}

bool skip_existing(const fs::path& p, bool force) {
  if (fs::exists(p) && !force) {
    spdlog::info("event=skip path={} reason=exists hint=--force", p.string());
    return true;
  }
  return false;
}

std::vector<DatasetPair> load_dataset(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(io::read_file(mpath));
  } catch (const nlohmann::json::exception& e) {
    throw io::ParseError(mpath.string() + ": " + e.what());
  }
  std::vector<DatasetPair> pairs;
  for (const auto& f : m.at("frames")) {
    const auto mesh_bytes = io::read_file(dir / f.at("mesh").get<std::string>());
    const auto image_bytes = io::read_file(dir / f.at("image").get<std::string>());
    if (hex(io::fnv1a(mesh_bytes)) != f.at("mesh_fnv1a").get<std::string>() ||
        hex(io::fnv1a(image_bytes)) != f.at("image_fnv1a").get<std::string>())
      throw io::ParseError(dir.string() + ": checksum mismatch for frame " + std::to_string(f.at("frame").get<int>()));
    pairs.push_back({io::parse_pgm(image_bytes, f.at("image").get<std::string>()),
                     io::parse_off(mesh_bytes, f.at("mesh").get<std::string>()), f.at("frame").get<std::size_t>()});
  }
  validate_dataset(pairs);
  return pairs;
}

fs::path fold_file(const fs::path& dir, std::size_t fold, const char* suffix) {
  return dir / ("fold_" + std::to_string(fold) + suffix);
}

int cmd_generate(const ExperimentConfig& cfg, bool force) {
  const fs::path dir = cfg.dataset_dir;
  if (skip_existing(dir / "manifest.json", force)) return 0;
  const auto spec = cfg.cycle_spec();
  const auto pairs = generate_dataset(spec, cfg.train.seed);
  nlohmann::json manifest;
  manifest["format"] = "inet-dataset";
  manifest["seed"] = cfg.train.seed;
  manifest["config"] = format_config(cfg);
  for (const auto& p : pairs) {
    const std::string t = std::to_string(p.frame_index);
    const std::string mesh = io::format_off(p.mesh), image = io::format_pgm(p.image);
    io::atomic_write(dir / ("frame_" + t + ".off"), mesh);
    io::atomic_write(dir / ("frame_" + t + ".pgm"), image);
    manifest["frames"].push_back({{"frame", p.frame_index},
                                  {"mesh", "frame_" + t + ".off"},
                                  {"image", "frame_" + t + ".pgm"},
                                  {"mesh_fnv1a", hex(io::fnv1a(mesh))},
                                  {"image_fnv1a", hex(io::fnv1a(image))}});
  }
  io::atomic_write(dir / "manifest.json", manifest.dump(2) + "\n");
  spdlog::info("event=generated frames={} dir={}", pairs.size(), dir.string());
  return 0;
}

std::string csv_number(double v) { return fmt::format("{:.17g}", v); }

int cmd_train(const ExperimentConfig& cfg, bool force) {
  const fs::path out = cfg.output_dir;
  if (skip_existing(out / "folds.csv", force)) return 0;
  const auto data = load_dataset(cfg.dataset_dir);
  auto hierarchy = std::make_shared<SamplingHierarchy>(build_hierarchy(data.front().mesh, cfg.stride, cfg.levels));
  io::save_hierarchy(out / "hierarchy.inet", *hierarchy);
  io::atomic_write(out / "config.txt", format_config(cfg));
  spdlog::info("event=train_start frames={} seed={} epochs={} levels={}", data.size(), cfg.train.seed,
               cfg.train.max_epochs, fmt::join(hierarchy->level_counts(), ","));

  auto on_fold = [&](const FoldResult& r, ModelParams& params) {
    if (r.diverged) {
      spdlog::error("event=fold_diverged fold={} diagnostic=\"{}\"", r.fold_index, r.diagnostic);
      return;
    }
    spdlog::info("event=fold_done fold={} held_out={} final_l1={:.6g} error_mm={:.6g} baseline_mm={:.6g} seconds={:.1f}",
                 r.fold_index, r.held_out_frame, r.final_l1, r.distance_error_mm, r.baseline_error_mm,
                 r.wall_seconds);
    if (cfg.save_checkpoints)
      io::save_checkpoint(fold_file(out, r.fold_index, ".ckpt"), params,
                          {{"config", format_config(cfg)},
                           {"fold_index", std::to_string(r.fold_index)},
                           {"held_out_frame", std::to_string(r.held_out_frame)},
                           {"template_hash", hex(hierarchy->template_hash)},
                           {"reshape", "row-major, vertex-major"}});
    if (cfg.save_meshes) {
      const auto& held = data[r.fold_index];
      io::write_obj(fold_file(out, r.fold_index, "_pred.obj"), predict_mesh(params, held.image, cfg.train.eval_mode));
    }
  };
  const auto summary = leave_one_out(data, cfg.model, hierarchy, cfg.train, on_fold);

  std::string csv = "fold_index,frames_trained,final_l1,distance_error_mm,wall_seconds\n";
  for (const auto& f : summary.folds)
    csv += std::to_string(f.fold_index) + "," + std::to_string(f.frames_trained) + "," + csv_number(f.final_l1) +
           "," + csv_number(f.diverged ? std::nan("") : f.distance_error_mm) + "," + fmt::format("{:.3f}", f.wall_seconds) +
           "\n";
  nlohmann::json s;
  s["seed"] = cfg.train.seed;
  s["mean_error_mm"] = summary.mean_error_mm;
  s["mean_baseline_mm"] = summary.mean_baseline_mm;
  for (const auto& f : summary.folds)
    s["folds"].push_back({{"fold_index", f.fold_index},
                          {"held_out_frame", f.held_out_frame},
                          {"distance_error_mm", f.distance_error_mm},
                          {"baseline_error_mm", f.baseline_error_mm},
                          {"diverged", f.diverged}});
  io::atomic_write(out / "summary.json", s.dump(2) + "\n");
  io::atomic_write(out / "folds.csv", csv);
  spdlog::info("event=train_done mean_error_mm={:.6g} mean_baseline_mm={:.6g}", summary.mean_error_mm,
               summary.mean_baseline_mm);
  bool diverged = false;
  for (const auto& f : summary.folds) diverged |= f.diverged;
  return diverged ? 1 : 0;
}

ExperimentConfig checkpoint_config(const io::Metadata& meta) {
  auto it = meta.find("config");
  if (it == meta.end()) throw ConfigError("checkpoint carries no config");
  return parse_config(it->second, "checkpoint config");
}

ModelParams restore(const fs::path& ckpt, std::shared_ptr<const SamplingHierarchy> hierarchy) {
  const auto meta = io::read_checkpoint_metadata(ckpt);
  const auto cfg = checkpoint_config(meta);
  if (auto it = meta.find("template_hash"); it == meta.end() || it->second != hex(hierarchy->template_hash))
    throw ConfigError(ckpt.string() + ": checkpoint was trained on a different template mesh than the hierarchy");
  std::mt19937_64 rng(0);
  ModelParams params = ModelParams::create(cfg.model, std::move(hierarchy), rng);
  io::load_checkpoint(ckpt, params);
  return params;
}

int cmd_eval(const ExperimentConfig& cfg, bool force) {
  const fs::path out = cfg.output_dir;
  if (skip_existing(out / "eval.csv", force)) return 0;
  const auto data = load_dataset(cfg.dataset_dir);
  auto hierarchy = std::make_shared<const SamplingHierarchy>(io::load_hierarchy(out / "hierarchy.inet"));
  std::string csv = "fold_index,held_out_frame,distance_error_mm,baseline_error_mm\n";
  double sum = 0.0, base = 0.0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    auto params = restore(fold_file(out, k, ".ckpt"), hierarchy);
    const auto mode = checkpoint_config(io::read_checkpoint_metadata(fold_file(out, k, ".ckpt"))).train.eval_mode;
    const Mesh pred = predict_mesh(params, data[k].image, mode);
    std::vector<Mesh> rest;
    for (std::size_t j = 0; j < data.size(); ++j)
      if (j != k) rest.push_back(data[j].mesh);
    const double err = distance_error(pred.coordinates(), data[k].mesh.coordinates());
    const double b = distance_error(mean_shape_baseline(rest).coordinates(), data[k].mesh.coordinates());
    sum += err;
    base += b;
    csv += std::to_string(k) + "," + std::to_string(data[k].frame_index) + "," + csv_number(err) + "," +
           csv_number(b) + "\n";
    spdlog::info("event=fold_eval fold={} error_mm={:.6g} baseline_mm={:.6g}", k, err, b);
  }
  io::atomic_write(out / "eval.csv", csv);
  const double n = static_cast<double>(data.size());
  spdlog::info("event=eval_done mean_error_mm={:.6g} mean_baseline_mm={:.6g}", sum / n, base / n);
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& hier, const std::string& image, const std::string& output,
              bool force) {
  if (skip_existing(output, force)) return 0;
  auto hierarchy = std::make_shared<const SamplingHierarchy>(io::load_hierarchy(hier));
  auto params = restore(ckpt, hierarchy);
  const auto mode = checkpoint_config(io::read_checkpoint_metadata(ckpt)).train.eval_mode;
  const Tensor img = io::read_pgm(image);
  const auto t0 = std::chrono::steady_clock::now();
  const Mesh mesh = predict_mesh(params, img, mode);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  io::write_mesh(output, mesh);
  spdlog::info("event=infer vertices={} latency_ms={:.2f} output={}", mesh.vertex_count(), ms, output);
  return 0;
}

int report(const std::vector<checks::CheckResult>& results) {
  for (const auto& r : results) std::printf("%s\n", checks::format(r).c_str());
  return checks::all_passed(results) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_logger_mt("inet");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("%Y-%m-%dT%H:%M:%S.%e level=%l %v");

  CLI::App app{"Single-image mesh reconstruction: data generation, training and inference"};
  app.require_subcommand(1);

  Common gen_opts, train_opts, eval_opts;
  std::optional<std::uint64_t> gen_seed;
  std::uint64_t train_seed = 0;
  auto* gen = app.add_subcommand("generate-data", "write a synthetic deforming-shape dataset");
  add_common(gen, gen_opts);
  gen->add_option("--seed", gen_seed, "dataset seed (default: train.seed)");

  auto* train_cmd = app.add_subcommand("train", "leave-one-out training over every frame");
  add_common(train_cmd, train_opts);
  train_cmd->add_option("--seed", train_seed, "run seed")->required();

  auto* eval = app.add_subcommand("eval", "re-score fold checkpoints against their held-out frames");
  add_common(eval, eval_opts);

  std::string ckpt, hier, image, output;
  bool infer_force = false;
  auto* infer = app.add_subcommand("infer", "reconstruct a mesh from one image");
  infer->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  infer->add_option("--hierarchy", hier)->required()->check(CLI::ExistingFile);
  infer->add_option("--image", image)->required()->check(CLI::ExistingFile);
  infer->add_option("--output", output, "mesh path, .off or .obj")->required();
  infer->add_flag("--force", infer_force);

  std::uint64_t check_seed = 1;
  std::size_t instances = 10;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  grad->add_option("--seed", check_seed);
  grad->add_option("--instances", instances)->check(CLI::PositiveNumber);
  auto* oracle = app.add_subcommand("oracle-check", "Laplacian, spectral and hierarchy oracles");
  oracle->add_option("--seed", check_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (const char* env = std::getenv("INET_THREADS"); env && *env) {
      int n = std::atoi(env);
      if (n <= 0) throw UsageError("INET_THREADS must be a positive integer");
      omp_set_num_threads(n);
    }
    if (*gen) return cmd_generate(resolve_config(gen_opts, gen_seed), gen_opts.force);
    if (*train_cmd) return cmd_train(resolve_config(train_opts, train_seed), train_opts.force);
    if (*eval) return cmd_eval(resolve_config(eval_opts, std::nullopt), eval_opts.force);
    if (*infer) {
      auto e = fs::path(output).extension();
      if (e != ".off" && e != ".obj") throw UsageError("--output must end in .off or .obj");
      return cmd_infer(ckpt, hier, image, output, infer_force);
    }
    if (*grad) return report(checks::gradcheck_suite(check_seed, instances));
    if (*oracle) return report(checks::oracle_suite(check_seed));
  } catch (const UsageError& e) {
    spdlog::error("event=usage_error message=\"{}\"", e.what());
    return 2;
  } catch (const ConfigError& e) {
    spdlog::error("event=config_error message=\"{}\"", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("event=failure message=\"{}\"", e.what());
    return 1;
  }
  return 0;
}

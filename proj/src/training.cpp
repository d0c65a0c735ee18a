#include "inet/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace inet {

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
  if (!(decay > 0.0 && decay < 1.0)) throw ConfigError("decay must lie in (0, 1)");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
}

void validate_dataset(std::span<const DatasetPair> pairs) {
  if (pairs.empty()) throw ConfigError("dataset is empty");
  const auto& first = pairs.front();
  for (const auto& p : pairs) {
    if (!p.mesh.same_connectivity(first.mesh))
      throw ConfigError("frame " + std::to_string(p.frame_index) + " does not share the template connectivity");
    if (p.image.shape() != first.image.shape())
      throw ConfigError("frame " + std::to_string(p.frame_index) + " image is " + shape_str(p.image.shape()) +
                        ", expected " + shape_str(first.image.shape()));
  }
}

namespace {

void require_same(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size() || a.size() % 3 != 0)
    throw DimensionError(std::string(what) + ": prediction has " + std::to_string(a.size()) + " values, truth has " +
                         std::to_string(b.size()));
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Fnv {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void bytes(const void* p, std::size_t n) {
    auto c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ c[i]) * 0x100000001b3ULL;
  }
  template <class T>
  void value(const T& v) { bytes(&v, sizeof v); }
};

}  // namespace

double l1_error(std::span<const double> pred, std::span<const double> truth) {
  require_same(pred, truth, "l1_error");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

double distance_error(std::span<const double> pred, std::span<const double> truth) {
  require_same(pred, truth, "distance_error");
  const std::size_t m = pred.size() / 3;
  double s = 0.0;
  for (std::size_t v = 0; v < m; ++v) {
    double dx = pred[3 * v] - truth[3 * v], dy = pred[3 * v + 1] - truth[3 * v + 1],
           dz = pred[3 * v + 2] - truth[3 * v + 2];
    s += std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return s / static_cast<double>(m);
}

double learning_rate(const TrainConfig& config, std::size_t decay_every, std::size_t iteration) {
  if (decay_every == 0) throw ConfigError("decay period must be positive");
  return config.lr0 * std::pow(config.decay, static_cast<double>(iteration / decay_every));
}

void sgd_step(std::span<NamedTensor> params, SgdState& state, double momentum, double lr) {
  if (state.velocity.empty())
    for (const auto& p : params) state.velocity.emplace_back(p.tensor.size(), 0.0);
  if (state.velocity.size() != params.size()) throw ConfigError("optimizer state does not match the parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = params[i].tensor;
    if (!t.has_grad()) throw AutodiffError("parameter " + params[i].name + " has no gradient");
    auto g = t.grad();
    auto w = t.mutable_data();
    auto& v = state.velocity[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = momentum * v[j] + g[j];
      w[j] -= lr * v[j];
    }
  }
}

TrainResult train(ModelParams& params, std::span<const DatasetPair> pairs, const TrainConfig& config,
                  std::uint64_t shuffle_seed, const EpochCallback& on_epoch) {
  config.validate();
  validate_dataset(pairs);
  const std::size_t period = config.decay_every ? config.decay_every : 5 * pairs.size();
  auto named = params.parameters();
  std::vector<Tensor> truths;
  for (const auto& p : pairs) {
    auto c = p.mesh.coordinates();
    truths.emplace_back(Shape{p.mesh.vertex_count(), 3}, std::move(c));
  }

  std::mt19937_64 rng(shuffle_seed);
  std::vector<std::size_t> order(pairs.size());
  SgdState state;
  TrainResult result;
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    double total = 0.0;
    for (std::size_t idx : order) {
      Tape tape;
      Tensor pred = forward(tape, params, pairs[idx].image, ops::NormMode::train);
      Tensor loss = ops::l1_loss(tape, pred, truths[idx]);
      const double l = loss.item();
      if (!std::isfinite(l))
        throw DivergenceError("loss became " + std::to_string(l) + " at epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(result.steps) + " (frame " +
                              std::to_string(pairs[idx].frame_index) + ")");
      total += l;
      tape.backward(loss);
      sgd_step(named, state, config.momentum, learning_rate(config, period, result.steps));
      for (auto& p : named) p.tensor.zero_grad();
      ++result.steps;
    }
    result.epoch_loss.push_back(total / static_cast<double>(pairs.size()));
    if (on_epoch) on_epoch(epoch, result.epoch_loss.back());
  }
  return result;
}

Mesh mean_shape_baseline(std::span<const Mesh> meshes) {
  if (meshes.empty()) throw ConfigError("mean shape of an empty set");
  std::vector<double> acc(meshes.front().vertex_count() * 3, 0.0);
  for (const auto& m : meshes) {
    if (!m.same_connectivity(meshes.front())) throw ConfigError("baseline meshes disagree in connectivity");
    auto c = m.coordinates();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += c[i];
  }
  for (auto& v : acc) v /= static_cast<double>(meshes.size());
  return meshes.front().with_vertices(Mesh::to_vertices(acc));
}

std::uint64_t dataset_checksum(std::span<const DatasetPair> pairs) {
  Fnv f;
  for (const auto& p : pairs) {
    f.value(p.frame_index);
    f.value(p.mesh.content_hash());
    f.bytes(p.image.data().data(), p.image.size() * sizeof(double));
  }
  return f.h;
}

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold, std::uint64_t stream) {
  return splitmix(splitmix(splitmix(seed) ^ fold) ^ stream);
}

LeaveOneOutSummary leave_one_out(std::span<const DatasetPair> dataset, const ModelConfig& model,
                                 std::shared_ptr<const SamplingHierarchy> hierarchy, const TrainConfig& config,
                                 const FoldCallback& on_fold) {
  if (dataset.size() < 3) throw ConfigError("leave-one-out needs at least 3 frames");
  validate_dataset(dataset);
  config.validate();
  model.validate();
  LeaveOneOutSummary summary;
  for (std::size_t fold = 0; fold < dataset.size(); ++fold) {
    auto start = std::chrono::steady_clock::now();
    FoldResult r;
    r.fold_index = fold;
    r.held_out_frame = dataset[fold].frame_index;

    std::vector<DatasetPair> train_pairs;
    for (std::size_t i = 0; i < dataset.size(); ++i)
      if (i != fold) train_pairs.push_back(dataset[i]);
    r.frames_trained = train_pairs.size();
    r.train_checksum = dataset_checksum(train_pairs);
    std::vector<Mesh> train_meshes;
    for (const auto& p : train_pairs) train_meshes.push_back(p.mesh);

    const auto& held = dataset[fold];
    auto truth = held.mesh.coordinates();
    r.baseline_error_mm = distance_error(mean_shape_baseline(train_meshes).coordinates(), truth);

    std::mt19937_64 init_rng(fold_seed(config.seed, fold, 1));
    ModelParams params = ModelParams::create(model, hierarchy, init_rng);
    params.normalizer = OutputNormalizer::fit(train_meshes);
    try {
      TrainConfig fold_config = config;
      if (fold_config.decay_every == 0) fold_config.decay_every = 5 * dataset.size();
      auto tr = train(params, train_pairs, fold_config, fold_seed(config.seed, fold, 2));
      r.final_l1 = tr.epoch_loss.back();
      if (dataset_checksum(train_pairs) != r.train_checksum)
        throw AutodiffError("training list of fold " + std::to_string(fold) + " changed during training");
      Mesh pred = predict_mesh(params, held.image, config.eval_mode);
      r.distance_error_mm = distance_error(pred.coordinates(), truth);
    } catch (const DivergenceError& e) {
      r.diverged = true;
      r.diagnostic = e.what();
      r.final_l1 = r.distance_error_mm = std::nan("");
    }
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_fold) on_fold(r, params);
    summary.folds.push_back(r);
  }
  double e = 0.0, b = 0.0;
  for (const auto& r : summary.folds) {
    e += r.distance_error_mm;
    b += r.baseline_error_mm;
  }
  summary.mean_error_mm = e / static_cast<double>(summary.folds.size());
  summary.mean_baseline_mm = b / static_cast<double>(summary.folds.size());
  return summary;
}

}  // namespace inet

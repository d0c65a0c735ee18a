#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "inet/mesh.hpp"
#include "inet/model.hpp"
#include "inet/tensor.hpp"

namespace inet {

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double lr0 = 5e-3;
  double decay = 0.97;
  std::size_t decay_every = 0;  // optimizer steps; 0 means 5 x (frames in the dataset)
  double momentum = 0.9;
  std::size_t max_epochs = 1200;
  std::uint64_t seed = 0;
  ops::NormMode eval_mode = ops::NormMode::infer;

  void validate() const;
};

struct DatasetPair {
  Tensor image;  // H x W x 1 in [0, 1]
  Mesh mesh;
  std::size_t frame_index = 0;
};

/// Throws unless every pair shares the first pair's connectivity and image shape.
void validate_dataset(std::span<const DatasetPair> pairs);

/// mean |pred - truth| over all coordinates.
double l1_error(std::span<const double> pred, std::span<const double> truth);
/// Mean Euclidean vertex distance; inputs are M x 3 row-major.
double distance_error(std::span<const double> pred, std::span<const double> truth);

/// lr0 * decay^(iteration / decay_every).
double learning_rate(const TrainConfig& config, std::size_t decay_every, std::size_t iteration);

struct SgdState {
  std::vector<std::vector<double>> velocity;
};

/// v <- momentum * v + g; p <- p - lr * v. Every parameter must carry a gradient.
void sgd_step(std::span<NamedTensor> params, SgdState& state, double momentum, double lr);

struct TrainResult {
  std::vector<double> epoch_loss;  // mean L1 per epoch
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

/// Trains in place with batch size 1. Order is reshuffled each epoch from
/// `shuffle_seed`. `decay_every` of 0 uses 5 x pairs.size(). A non-finite
/// loss raises DivergenceError.
TrainResult train(ModelParams& params, std::span<const DatasetPair> pairs, const TrainConfig& config,
                  std::uint64_t shuffle_seed, const EpochCallback& on_epoch = {});

/// Coordinate-wise mean of the meshes, on the first mesh's connectivity.
Mesh mean_shape_baseline(std::span<const Mesh> meshes);

/// Order-sensitive FNV-1a digest of frame indices, meshes and image pixels.
std::uint64_t dataset_checksum(std::span<const DatasetPair> pairs);

struct FoldResult {
  std::size_t fold_index = 0;
  std::size_t held_out_frame = 0;
  std::size_t frames_trained = 0;
  double final_l1 = 0.0;
  double distance_error_mm = 0.0;
  double baseline_error_mm = 0.0;
  double wall_seconds = 0.0;
  std::uint64_t train_checksum = 0;
  bool diverged = false;
  std::string diagnostic;
};

struct LeaveOneOutSummary {
  std::vector<FoldResult> folds;
  double mean_error_mm = 0.0;
  double mean_baseline_mm = 0.0;
};

using FoldCallback = std::function<void(const FoldResult&, ModelParams&)>;

/// One fold per pair: fresh parameters, a normalizer fitted on the training
/// frames, training on the rest, mean vertex distance on the held-out frame.
LeaveOneOutSummary leave_one_out(std::span<const DatasetPair> dataset, const ModelConfig& model,
                                 std::shared_ptr<const SamplingHierarchy> hierarchy, const TrainConfig& config,
                                 const FoldCallback& on_fold = {});

/// Seeds used for fold `fold`: parameter init and epoch shuffling.
std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold, std::uint64_t stream);

}  // namespace inet

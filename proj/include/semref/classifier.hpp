#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semref/raster.hpp"

namespace semref {

// conv3x3(C->f1) -> maxpool 2x2 -> 3x conv3x3 at half resolution (f2) ->
// nearest upsample -> concat with the first conv -> conv1x1(f1) -> conv1x1(K)
// -> softmax. ReLU after every conv except the head.
struct Architecture {
  int in_channels = 6;
  int classes = cls::count;
  int f1 = 8;
  int f2 = 16;

  int receptive_field() const { return 16; }
  std::size_t parameter_count() const;
  std::string descriptor() const;
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct ClassifierModel {
  Architecture arch;
  std::vector<double> parameters;

  // Xavier-uniform weights, zero biases.
  static ClassifierModel initialize(const Architecture& arch, std::uint64_t seed);

  friend bool operator==(const ClassifierModel&, const ClassifierModel&) = default;
};

struct ClassWeights {
  std::vector<double> weight;  // per class id; 0 for absent classes
  std::vector<ClassId> absent;
};

// weight_c = median(present frequencies) / frequency_c. Zero entries are
// absent classes; a class listed in `present` with zero frequency is an error.
ClassWeights median_frequency_weights(std::span<const double> frequencies,
                                      std::span<const ClassId> present = {});

// Pixel proportion per class, honoring an optional 0/1 mask.
std::vector<double> class_frequencies(const LabelRaster& labels,
                                      std::span<const std::uint8_t> mask = {});

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 8;
  int max_epochs = 50;
  int patches_per_epoch = 64;
  int patch_size = 64;
  double validation_fraction = 0.1;
  int validation_tile = 32;
  int patience = 5;
  bool augment = true;
  std::uint64_t seed = 1;
  // Seeds the held-out tile draw when set, so repeated trainings can share
  // one validation set while batches still vary with `seed`.
  std::optional<std::uint64_t> split_seed;

  void validate() const;
};

struct TrainingSample {
  MultiChannelRaster input;
  LabelRaster labels;
  std::vector<std::uint8_t> mask;  // optional; 0 excludes a pixel entirely
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;  // percent
  double val_loss = 0.0;
  double val_accuracy = 0.0;  // percent
};

struct TrainResult {
  ClassifierModel model;  // parameters of the best validation epoch
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_accuracy = 0.0;
  bool stopped_early = false;
  std::vector<std::vector<std::uint8_t>> validation_mask;  // per sample, 1 = held out
};

TrainResult train(const ClassifierModel& model, std::span<const TrainingSample> samples,
                  const ClassWeights& weights, const TrainConfig& config);

ProbabilityRaster predict(const ClassifierModel& model, const MultiChannelRaster& input);

// A single labeled patch; labels of -1 are ignored.
struct GradientSample {
  MultiChannelRaster input;
  std::vector<int> labels;
};

struct LossGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};

// Weighted cross-entropy normalized by the total weight, and its gradient.
LossGradient loss_and_gradient(const ClassifierModel& model, const GradientSample& sample,
                               const ClassWeights& weights);

double sample_loss(const ClassifierModel& model, const GradientSample& sample,
                   const ClassWeights& weights);

using GradientFunction = std::function<std::vector<double>(
    const ClassifierModel&, const GradientSample&, const ClassWeights&)>;

// Max over parameters of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
// with central differences of step 1e-4.
double gradient_check(const ClassifierModel& model, const GradientSample& sample,
                      const ClassWeights& weights);
double gradient_check(const ClassifierModel& model, const GradientSample& sample,
                      const ClassWeights& weights, const GradientFunction& analytic);

// SRMODEL v1, then the descriptor line, then little-endian float64 parameters.
void save_model(const std::filesystem::path& path, const ClassifierModel& model);
ClassifierModel load_model(const std::filesystem::path& path);

}  // namespace semref

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semref/classifier.hpp"
#include "semref/metrics.hpp"
#include "semref/ontology.hpp"
#include "semref/referee.hpp"
#include "semref/synth.hpp"

namespace semref {

enum class FeedbackSource { referee, zero, oracle };

std::string_view to_string(FeedbackSource source);

struct LoopConfig {
  int max_rounds = 3;
  double epsilon = 0.2;  // percentage points of validation accuracy
  double threshold = 0.7;
  int tile_size = 64;
  std::string ontology_path = "ontologies/ontocity_subset.onto";
  // Elevation source: empty for class priors, "true_dsm" for each scene's
  // ground-truth surface model.
  std::string dsm;
  std::uint64_t seed = 1;
  Connectivity connectivity = Connectivity::four;
  ElevationThresholds elevation;
  // Keep the round-0 segmentation of each scene instead of re-extracting.
  bool reuse_segments = false;
  // Where the next round's channels come from. `zero` keeps them at 0 (the
  // loop then only continues training); `oracle` feeds the true shadow mask
  // and quantized surface model.
  FeedbackSource feedback = FeedbackSource::referee;
  Architecture arch;
  TrainConfig train;
  // Learning rate multiplier for rounds after the first. Those rounds start
  // from the previous model with fresh optimizer moments, and a full-size
  // step can throw the model out of the solution it already found.
  double retrain_lr_scale = 1.0;

  // Benchmark scenes: training scenes s, s + 2*offset, s + 4*offset, ...;
  // test scene s + offset.
  std::vector<std::uint64_t> seeds{1};
  std::uint64_t test_seed_offset = 1000;
  int train_scenes = 1;
  SceneSpec scene;

  void validate() const;
  bool uses_dsm() const { return !dsm.empty(); }
};

// `key = value` lines, `#` comments. Unknown keys are errors.
LoopConfig parse_loop_config(std::string_view text);
LoopConfig load_loop_config(const std::filesystem::path& path);
std::string describe_config(const LoopConfig& config);

// Channels built from ground truth: shadow 1 on shadowed pixels, elevation
// from the quantized true surface model, uncertainty 0.
MultiChannelRaster oracle_feedback(const SceneBundle& scene, const ElevationThresholds& thresholds);

struct RefereeSummary {
  int regions = 0;
  int misclassified = 0;
  int shadow = 0;
  int inconsistent = 0;
  int none = 0;
  bool short_circuit = false;  // no misclassified regions; channels kept
  ErrorCharacterization characterization;
};

struct RoundResult {
  TrainResult training;
  std::vector<ProbabilityRaster> predictions;  // one per training scene
  Metrics validation;                          // on held-out tiles
};

// Training seed of a loop round.
std::uint64_t round_seed(std::uint64_t base, int round);

// Trains on concat(rgb, channels), predicts every scene, scores the
// held-out tiles.
RoundResult run_round(const ClassifierModel& model, std::span<const SceneBundle> scenes,
                      std::span<const MultiChannelRaster> channels, const ClassWeights& weights,
                      const TrainConfig& config);

struct RoundReport {
  int round = 0;
  double val_accuracy = 0.0;
  int epochs = 0;
  int best_epoch = 0;
  Metrics validation;
  std::vector<RefereeSummary> train_referee;
  Metrics test;
  std::vector<RefereeSummary> test_referee;
};

struct LoopReport {
  int train_rounds = 0;
  int test_rounds = 0;
  std::string stop_reason;
  std::vector<RoundReport> rounds;

  const Metrics& baseline() const { return rounds.front().test; }
  const Metrics& final_metrics() const { return rounds.back().test; }
};

LoopReport run_loop(const LoopConfig& config, std::span<const SceneBundle> train_scenes,
                    std::span<const SceneBundle> test_scenes, const Ontology& ontology);

struct SeedOutcome {
  std::uint64_t seed = 0;
  LoopReport report;
};

struct BenchmarkReport {
  bool dsm = false;
  std::vector<SeedOutcome> seeds;
  double mean_baseline = 0.0;
  double mean_final = 0.0;
  Metrics pooled_baseline;
  Metrics pooled_final;
};

BenchmarkReport run_benchmark(const LoopConfig& config, const Ontology& ontology);

struct DsmComparison {
  BenchmarkReport prior;
  BenchmarkReport dsm;
};

DsmComparison run_dsm_comparison(const LoopConfig& config, const Ontology& ontology);

}  // namespace semref

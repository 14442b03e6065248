#include "semref/pipeline.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <tuple>
#include <utility>

#include "semref/error.hpp"

namespace semref {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

struct ConfigLine {
  std::string value;
  int line;
};

[[noreturn]] void bad_value(const std::string& key, const ConfigLine& v, const std::string& why) {
  throw Error("config line " + std::to_string(v.line) + ": " + key + " = '" + v.value + "': " + why);
}

long long to_integer(const std::string& key, const ConfigLine& v) {
  long long out = 0;
  const auto* end = v.value.data() + v.value.size();
  auto [ptr, ec] = std::from_chars(v.value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, v, "expected an integer");
  return out;
}

double to_real(const std::string& key, const ConfigLine& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v.value, &used);
    if (used != v.value.size()) bad_value(key, v, "expected a number");
    return out;
  } catch (const std::logic_error&) {
    bad_value(key, v, "expected a number");
  }
}

bool to_bool(const std::string& key, const ConfigLine& v) {
  if (v.value == "true" || v.value == "1" || v.value == "yes") return true;
  if (v.value == "false" || v.value == "0" || v.value == "no") return false;
  bad_value(key, v, "expected true or false");
}

// "lo-hi" with lo <= hi.
std::pair<double, double> to_range(const std::string& key, const ConfigLine& v) {
  const auto dash = v.value.find('-', 1);
  if (dash == std::string::npos) bad_value(key, v, "expected lo-hi");
  const double lo = to_real(key, {trim(v.value.substr(0, dash)), v.line});
  const double hi = to_real(key, {trim(v.value.substr(dash + 1)), v.line});
  if (hi < lo) bad_value(key, v, "empty range");
  return {lo, hi};
}

std::pair<int, int> to_int_range(const std::string& key, const ConfigLine& v) {
  const auto [lo, hi] = to_range(key, v);
  if (lo != std::floor(lo) || hi != std::floor(hi)) bad_value(key, v, "expected integers");
  return {static_cast<int>(lo), static_cast<int>(hi)};
}

std::vector<std::uint64_t> to_seeds(const std::string& key, const ConfigLine& v) {
  std::vector<std::uint64_t> out;
  std::stringstream in(v.value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    const auto dash = item.find('-');
    if (dash != std::string::npos) {
      const long long lo = to_integer(key, {item.substr(0, dash), v.line});
      const long long hi = to_integer(key, {item.substr(dash + 1), v.line});
      if (lo < 0 || hi < lo) bad_value(key, v, "bad seed range");
      for (long long s = lo; s <= hi; ++s) out.push_back(static_cast<std::uint64_t>(s));
    } else {
      const long long s = to_integer(key, {item, v.line});
      if (s < 0) bad_value(key, v, "seeds are non-negative");
      out.push_back(static_cast<std::uint64_t>(s));
    }
  }
  if (out.empty()) bad_value(key, v, "no seeds");
  return out;
}

MultiChannelRaster loop_input(const SceneBundle& scene, const MultiChannelRaster& channels) {
  return concat_channels(scene.rgb, channels);
}

RefereeSummary summarize(const RefereeOutcome& outcome) {
  RefereeSummary s;
  s.regions = static_cast<int>(outcome.regions.regions.size());
  s.misclassified = static_cast<int>(outcome.partition.misclassified.size());
  for (const auto& v : outcome.verdicts) {
    switch (v.verdict) {
      case VerdictKind::shadow:
        ++s.shadow;
        break;
      case VerdictKind::inconsistent:
        ++s.inconsistent;
        break;
      case VerdictKind::none:
        ++s.none;
        break;
    }
  }
  s.characterization = outcome.characterization;
  return s;
}

// Runs the referee on one prediction and returns the next channels. A
// prediction with no misclassified region leaves `channels` unchanged.
RefereeSummary referee_step(const ProbabilityRaster& probs, const SceneBundle& scene,
                            const Ontology& ontology, const LoopConfig& config,
                            std::optional<RegionSet>& segments, MultiChannelRaster& channels) {
  RefereeConfig rc;
  rc.threshold = config.threshold;
  rc.tile_size = config.tile_size;
  rc.connectivity = config.connectivity;
  rc.channel_options.thresholds = config.elevation;
  const MultiChannelRaster* dsm = config.uses_dsm() ? &scene.true_dsm : nullptr;
  const RegionSet* fixed = config.reuse_segments && segments ? &*segments : nullptr;
  RefereeOutcome outcome = run_referee(probs, ontology, rc, dsm, fixed);
  if (config.reuse_segments && !segments) segments = outcome.regions;
  RefereeSummary summary = summarize(outcome);
  if (config.feedback == FeedbackSource::oracle) {
    channels = oracle_feedback(scene, config.elevation);
  } else if (config.feedback == FeedbackSource::zero) {
    // channels stay at zero
  } else if (outcome.partition.misclassified.empty()) {
    summary.short_circuit = true;
  } else {
    validate_feedback(outcome.channels.raster);
    channels = std::move(outcome.channels.raster);
  }
  return summary;
}

}  // namespace

std::uint64_t round_seed(std::uint64_t base, int round) {
  return base * 7919u + static_cast<std::uint64_t>(round) * 104729u + 17u;
}

std::string_view to_string(FeedbackSource source) {
  switch (source) {
    case FeedbackSource::referee:
      return "referee";
    case FeedbackSource::zero:
      return "zero";
    case FeedbackSource::oracle:
      return "oracle";
  }
  return "?";
}

MultiChannelRaster oracle_feedback(const SceneBundle& scene, const ElevationThresholds& thresholds) {
  const int H = scene.labels.height();
  const int W = scene.labels.width();
  FeedbackChannels out = FeedbackChannels::zeros(H, W);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const double z = scene.true_dsm.at(r, c, 0);
      out.raster.at(r, c, kShadowChannel) = scene.true_shadow.at(r, c) ? 1.0f : 0.0f;
      out.raster.at(r, c, kElevationChannel) = z < thresholds.low ? 0.0f : z < thresholds.high ? 1.0f : 2.0f;
    }
  }
  return out.raster;
}

void LoopConfig::validate() const {
  if (max_rounds < 1) throw Error("max_rounds must be at least 1");
  if (!(epsilon > 0.0)) throw Error("epsilon must be positive");
  if (!(threshold > 0.0 && threshold <= 1.0)) throw Error("threshold must lie in (0, 1]");
  if (tile_size < 1) throw Error("tile_size must be positive");
  if (!dsm.empty() && dsm != "true_dsm") throw Error("dsm must be empty or true_dsm");
  if (!(elevation.low <= elevation.high)) throw Error("elevation_low must not exceed elevation_high");
  if (arch.in_channels != 6) throw Error("loop models take 6 input channels");
  if (seeds.empty()) throw Error("no seeds");
  if (train_scenes < 1) throw Error("train_scenes must be at least 1");
  if (!(retrain_lr_scale > 0.0)) throw Error("retrain_lr_scale must be positive");
  train.validate();
  scene.validate();
}

LoopConfig parse_loop_config(std::string_view text) {
  std::map<std::string, ConfigLine> entries;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (entries.count(key)) throw Error("config line " + std::to_string(line_no) + ": duplicate key " + key);
    entries[key] = {trim(line.substr(eq + 1)), line_no};
  }

  LoopConfig c;
  for (const auto& [key, v] : entries) {
    auto integer = [&] { return static_cast<int>(to_integer(key, v)); };
    if (key == "max_rounds") c.max_rounds = integer();
    else if (key == "epsilon") c.epsilon = to_real(key, v);
    else if (key == "threshold") c.threshold = to_real(key, v);
    else if (key == "tile_size") c.tile_size = integer();
    else if (key == "ontology") c.ontology_path = v.value;
    else if (key == "dsm") c.dsm = v.value == "none" ? "" : v.value;
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_integer(key, v));
    else if (key == "connectivity") {
      const int n = integer();
      if (n != 4 && n != 8) bad_value(key, v, "expected 4 or 8");
      c.connectivity = n == 4 ? Connectivity::four : Connectivity::eight;
    }
    else if (key == "elevation_low") c.elevation.low = to_real(key, v);
    else if (key == "elevation_high") c.elevation.high = to_real(key, v);
    else if (key == "reuse_segments") c.reuse_segments = to_bool(key, v);
    else if (key == "f1") c.arch.f1 = integer();
    else if (key == "f2") c.arch.f2 = integer();
    else if (key == "learning_rate") c.train.learning_rate = to_real(key, v);
    else if (key == "batch_size") c.train.batch_size = integer();
    else if (key == "max_epochs") c.train.max_epochs = integer();
    else if (key == "patches_per_epoch") c.train.patches_per_epoch = integer();
    else if (key == "patch_size") c.train.patch_size = integer();
    else if (key == "validation_fraction") c.train.validation_fraction = to_real(key, v);
    else if (key == "validation_tile") c.train.validation_tile = integer();
    else if (key == "patience") c.train.patience = integer();
    else if (key == "retrain_lr_scale") c.retrain_lr_scale = to_real(key, v);
    else if (key == "augment") c.train.augment = to_bool(key, v);
    else if (key == "seeds") c.seeds = to_seeds(key, v);
    else if (key == "feedback") {
      if (v.value == "referee") c.feedback = FeedbackSource::referee;
      else if (v.value == "zero") c.feedback = FeedbackSource::zero;
      else if (v.value == "oracle") c.feedback = FeedbackSource::oracle;
      else bad_value(key, v, "expected referee, zero or oracle");
    }
    else if (key == "train_scenes") c.train_scenes = integer();
    else if (key == "test_seed_offset") c.test_seed_offset = static_cast<std::uint64_t>(to_integer(key, v));
    else if (key == "scene_size") {
      const auto x = v.value.find('x');
      c.scene.height = static_cast<int>(to_integer(key, {v.value.substr(0, x), v.line}));
      c.scene.width = x == std::string::npos
                          ? c.scene.height
                          : static_cast<int>(to_integer(key, {v.value.substr(x + 1), v.line}));
    }
    else if (key == "buildings") c.scene.buildings = integer();
    else if (key == "road_strips") c.scene.road_strips = integer();
    else if (key == "water_bodies") c.scene.water_bodies = integer();
    else if (key == "railroads") c.scene.railroads = integer();
    else if (key == "light_direction") c.scene.light_direction = integer();
    else if (key == "shadow_factor") c.scene.shadow_factor = to_real(key, v);
    else if (key == "shadow_min") c.scene.shadow_min = integer();
    else if (key == "shadow_max") c.scene.shadow_max = integer();
    else if (key == "road_width") std::tie(c.scene.road_width_min, c.scene.road_width_max) = to_int_range(key, v);
    else if (key == "building_size") std::tie(c.scene.building_min, c.scene.building_max) = to_int_range(key, v);
    else if (key == "pond_radius") std::tie(c.scene.pond_radius_min, c.scene.pond_radius_max) = to_range(key, v);
    else if (key == "pond_near_road") c.scene.pond_near_road = to_real(key, v);
    else throw Error("config line " + std::to_string(v.line) + ": unknown key " + key);
  }
  c.validate();
  return c;
}

LoopConfig load_loop_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_loop_config(buf.str());
}

std::string describe_config(const LoopConfig& c) {
  std::ostringstream out;
  out << "max_rounds = " << c.max_rounds << "\n"
      << "epsilon = " << c.epsilon << "\n"
      << "threshold = " << c.threshold << "\n"
      << "tile_size = " << c.tile_size << "\n"
      << "dsm = " << (c.dsm.empty() ? "none" : c.dsm) << "\n"
      << "seed = " << c.seed << "\n"
      << "connectivity = " << static_cast<int>(c.connectivity) << "\n"
      << "reuse_segments = " << (c.reuse_segments ? "true" : "false") << "\n"
      << "f1 = " << c.arch.f1 << "\nf2 = " << c.arch.f2 << "\n"
      << "learning_rate = " << c.train.learning_rate << "\n"
      << "batch_size = " << c.train.batch_size << "\n"
      << "max_epochs = " << c.train.max_epochs << "\n"
      << "patches_per_epoch = " << c.train.patches_per_epoch << "\n"
      << "patch_size = " << c.train.patch_size << "\n"
      << "validation_fraction = " << c.train.validation_fraction << "\n"
      << "patience = " << c.train.patience << "\n"
      << "retrain_lr_scale = " << c.retrain_lr_scale << "\n"
      << "scene_size = " << c.scene.height << "x" << c.scene.width << "\n"
      << "feedback = " << to_string(c.feedback) << "\n"
      << "train_scenes = " << c.train_scenes << "\n"
      << "seeds = ";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) out << (i ? "," : "") << c.seeds[i];
  out << "\n";
  return out.str();
}

RoundResult run_round(const ClassifierModel& model, std::span<const SceneBundle> scenes,
                      std::span<const MultiChannelRaster> channels, const ClassWeights& weights,
                      const TrainConfig& config) {
  if (scenes.size() != channels.size()) throw Error("one channel raster per scene is required");
  std::vector<TrainingSample> samples;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    samples.push_back({loop_input(scenes[i], channels[i]), scenes[i].labels, {}});
  }
  RoundResult out{train(model, samples, weights, config), {}, {}};
  std::vector<Metrics> parts;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    out.predictions.push_back(predict(out.training.model, samples[i].input));
    parts.push_back(confusion_metrics(out.predictions.back().argmax_labels(), scenes[i].labels,
                                      out.training.validation_mask[i]));
  }
  out.validation = merge_metrics(parts);
  return out;
}

LoopReport run_loop(const LoopConfig& config, std::span<const SceneBundle> train_scenes,
                    std::span<const SceneBundle> test_scenes, const Ontology& ontology) {
  config.validate();
  if (train_scenes.empty() || test_scenes.empty()) throw Error("the loop needs training and test scenes");
  const int H = train_scenes.front().labels.height();
  const int W = train_scenes.front().labels.width();
  for (const auto* group : {&train_scenes, &test_scenes}) {
    for (const auto& s : *group) {
      if (s.labels.height() != H || s.labels.width() != W) throw DimensionError("loop scenes differ in size");
    }
  }
  for (ClassId c = 0; c < cls::count; ++c) {
    if (!ontology.has_binding(c)) throw OntologyError("class " + std::to_string(c) + " has no concept binding", 0);
  }

  std::vector<double> freq(cls::count, 0.0);
  for (const auto& s : train_scenes) {
    const auto f = class_frequencies(s.labels);
    for (int k = 0; k < cls::count; ++k) freq[k] += f[k] / static_cast<double>(train_scenes.size());
  }
  const ClassWeights weights = median_frequency_weights(freq);

  LoopReport report;
  ClassifierModel model = ClassifierModel::initialize(config.arch, config.seed);
  std::vector<ClassifierModel> snapshots;
  std::vector<MultiChannelRaster> channels(train_scenes.size(), FeedbackChannels::zeros(H, W).raster);
  std::vector<std::optional<RegionSet>> segments(train_scenes.size());

  for (int round = 0; round < config.max_rounds; ++round) {
    TrainConfig tc = config.train;
    tc.seed = round_seed(config.seed, round);
    // Same held-out tiles every round; a warm-started model must not have
    // trained on the tiles it is validated on.
    if (round > 0) {
      tc.split_seed = round_seed(config.seed, 0);
      tc.learning_rate *= config.retrain_lr_scale;
    }
    RoundResult result = run_round(model, train_scenes, channels, weights, tc);
    model = result.training.model;
    snapshots.push_back(model);

    RoundReport rr;
    rr.round = round;
    rr.val_accuracy = result.validation.overall;
    rr.epochs = static_cast<int>(result.training.history.size());
    rr.best_epoch = result.training.best_epoch;
    rr.validation = result.validation;
    for (std::size_t i = 0; i < train_scenes.size(); ++i) {
      rr.train_referee.push_back(referee_step(result.predictions[i], train_scenes[i], ontology, config,
                                              segments[i], channels[i]));
    }
    report.rounds.push_back(std::move(rr));

    if (round + 1 == config.max_rounds) {
      report.stop_reason = "max_rounds";
    } else if (round >= 1 && std::abs(report.rounds[round].val_accuracy -
                                      report.rounds[round - 1].val_accuracy) < config.epsilon) {
      report.stop_reason = "converged";
    } else {
      continue;
    }
    break;
  }
  report.train_rounds = static_cast<int>(snapshots.size());

  // Test time replays the same number of rounds with the per-round models.
  std::vector<MultiChannelRaster> test_channels(test_scenes.size(), FeedbackChannels::zeros(H, W).raster);
  std::vector<std::optional<RegionSet>> test_segments(test_scenes.size());
  for (int round = 0; round < report.train_rounds; ++round) {
    std::vector<Metrics> parts;
    auto& rr = report.rounds[round];
    for (std::size_t i = 0; i < test_scenes.size(); ++i) {
      const auto probs = predict(snapshots[round], loop_input(test_scenes[i], test_channels[i]));
      parts.push_back(confusion_metrics(probs.argmax_labels(), test_scenes[i].labels));
      rr.test_referee.push_back(
          referee_step(probs, test_scenes[i], ontology, config, test_segments[i], test_channels[i]));
    }
    rr.test = merge_metrics(parts);
    ++report.test_rounds;
  }
  if (report.test_rounds != report.train_rounds) throw Error("test rounds differ from training rounds");
  return report;
}

BenchmarkReport run_benchmark(const LoopConfig& config, const Ontology& ontology) {
  config.validate();
  BenchmarkReport out;
  out.dsm = config.uses_dsm();
  std::vector<Metrics> baselines;
  std::vector<Metrics> finals;
  for (std::uint64_t seed : config.seeds) {
    std::vector<SceneBundle> train_scenes;
    for (int j = 0; j < config.train_scenes; ++j) {
      SceneSpec train_spec = config.scene;
      train_spec.seed = seed + 2 * static_cast<std::uint64_t>(j) * config.test_seed_offset;
      train_scenes.push_back(generate_scene(train_spec));
    }
    SceneSpec test_spec = config.scene;
    test_spec.seed = seed + config.test_seed_offset;
    const std::vector<SceneBundle> test_scenes{generate_scene(test_spec)};
    LoopConfig c = config;
    c.seed = config.seed * 1000003u + seed;
    SeedOutcome outcome{seed, run_loop(c, train_scenes, test_scenes, ontology)};
    baselines.push_back(outcome.report.baseline());
    finals.push_back(outcome.report.final_metrics());
    out.mean_baseline += outcome.report.baseline().overall;
    out.mean_final += outcome.report.final_metrics().overall;
    out.seeds.push_back(std::move(outcome));
  }
  out.mean_baseline /= static_cast<double>(out.seeds.size());
  out.mean_final /= static_cast<double>(out.seeds.size());
  out.pooled_baseline = merge_metrics(baselines);
  out.pooled_final = merge_metrics(finals);
  return out;
}

DsmComparison run_dsm_comparison(const LoopConfig& config, const Ontology& ontology) {
  LoopConfig prior = config;
  prior.dsm.clear();
  LoopConfig dsm = config;
  dsm.dsm = "true_dsm";
  return {run_benchmark(prior, ontology), run_benchmark(dsm, ontology)};
}

}  // namespace semref

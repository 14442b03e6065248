// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
// Exit status is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "semref/classifier.hpp"
#include "semref/metrics.hpp"
#include "semref/ontology.hpp"
#include "semref/pipeline.hpp"
#include "semref/rcc8.hpp"
#include "semref/referee.hpp"
#include "semref/report.hpp"
#include "semref/rng.hpp"
#include "semref/synth.hpp"
#include "support.hpp"

using namespace semref;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fixed(double v, int digits = 2) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(digits);
  out << v;
  return out.str();
}

const Ontology& shipped() {
  static const Ontology onto = load_ontology(testing::shipped_ontology());
  return onto;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome rcc8_oracle() {
  const auto start = Clock::now();
  Rng rng(7);
  int matched = 0, symmetric = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int h = rng.uniform_int(2, 64), w = rng.uniform_int(2, 64);
    const auto la = testing::random_labels(rng, h, w, 3);
    const auto lb = trial % 2 ? la : testing::random_labels(rng, h, w, 3);
    const auto sa = extract_regions(la);
    const auto sb = extract_regions(lb);
    const auto& a = sa.regions[rng.uniform_int(0, static_cast<int>(sa.regions.size()) - 1)];
    const auto& b = sb.regions[rng.uniform_int(0, static_cast<int>(sb.regions.size()) - 1)];
    const Rcc8 ab = compute_rcc8(a, b);
    matched += ab == testing::naive_rcc8(testing::mask_of(a), testing::mask_of(b));
    symmetric += compute_rcc8(b, a) == inverse(ab);
  }
  const double elapsed = seconds_since(start);
  return {matched == 200 && symmetric == 200 && elapsed < 10.0,
          std::to_string(matched) + "/200 match, " + std::to_string(symmetric) + "/200 symmetric, " +
              fixed(elapsed) + " s"};
}

Outcome ontology_behavior() {
  const auto& onto = shipped();
  const auto answers = query_exists(onto, "ec", "Building");
  const bool shadow_first = !answers.empty() && answers.front() == "Shadow";
  const std::vector<Neighbor> near_water{{Rcc8::ec, "WaterArea", 1}, {Rcc8::ec, "Road", 2}};
  const std::vector<Neighbor> around_road{{Rcc8::ntppi, "Road", 1}, {Rcc8::ec, "VegetationArea", 2}};
  const auto water = check_region_consistency(onto, {"Building", 400, true, 0}, near_water);
  const auto road = check_region_consistency(onto, {"Building", 400, true, 0}, around_road);
  std::size_t violations = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SceneSpec spec;
    spec.seed = seed;
    violations += testing::scene_violations(generate_scene(spec), onto).size();
  }
  return {shadow_first && water.size() == 1 && road.size() == 1 && violations == 0,
          "first answer " + (answers.empty() ? std::string("none") : answers.front()) + ", water " +
              std::to_string(water.size()) + ", contains-road " + std::to_string(road.size()) +
              ", scene violations " + std::to_string(violations)};
}

Outcome histogram_fidelity() {
  const auto& onto = shipped();
  int agree = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SceneSpec spec;
    spec.seed = seed;
    spec.height = 96;
    spec.width = 96;
    spec.buildings = 4;
    spec.road_strips = 2;
    const auto scene = generate_scene(spec);
    Rng rng(seed);
    LabelRaster pred = scene.labels;
    for (int i = 0; i < 400; ++i) {
      pred.set(rng.uniform_int(0, 95), rng.uniform_int(0, 95), static_cast<ClassId>(rng.uniform_int(0, 4)));
    }
    const auto set = extract_regions(pred);
    std::vector<double> certainty(set.regions.size());
    for (auto& c : certainty) c = rng.uniform(0.3, 1.0);
    std::vector<float> data;
    for (int r = 0; r < 96; ++r) {
      for (int c = 0; c < 96; ++c) {
        const float p = static_cast<float>(certainty[set.owner_at(r, c)]);
        for (int k = 0; k < cls::count; ++k) data.push_back(k == pred.at(r, c) ? p : (1.0f - p) / (cls::count - 1));
      }
    }
    RefereeConfig config;
    config.tile_size = 32;
    const auto out = run_referee(ProbabilityRaster(96, 96, cls::count, data), onto, config);
    const auto brute = testing::brute_force_histogram(out.regions.regions, out.partition.is_misclassified, 96, 96,
                                                      config.tile_size, onto);
    agree += brute.total == out.characterization.histogram.total() &&
             brute.counts == out.characterization.histogram.counts;
  }
  RelationHistogram fixture;
  fixture.counts[{Rcc8::ec, "Building"}] = 136;
  fixture.counts[{Rcc8::po, "Building"}] = 3;
  fixture.counts[{Rcc8::ec, "Road"}] = 59;
  fixture.counts[{Rcc8::ec, "WaterArea"}] = 11;
  const auto c = characterize_histogram(fixture, onto);
  const bool dominant = c.dominant && c.dominant->relation == Rcc8::ec && c.dominant->concept_name == "Building";
  const bool shadow = !c.concepts.empty() && c.concepts.front() == "Shadow";
  return {agree == 20 && dominant && shadow,
          std::to_string(agree) + "/20 scenes agree, fixture dominant " +
              (c.dominant ? std::string(to_string(c.dominant->relation)) + " " + c.dominant->concept_name
                          : std::string("none")) +
              ", resolves to " + (c.concepts.empty() ? std::string("nothing") : c.concepts.front())};
}

Outcome weighting() {
  const auto w = median_frequency_weights(std::vector<double>{7.6, 31.3, 35.4, 23.5, 2.2});
  const double water = w.weight[cls::water], rail = w.weight[cls::railroad];
  return {std::abs(water - 1.0) <= 1e-9 && std::abs(rail - 10.682) <= 1e-3,
          "water " + fixed(water, 9) + ", railroad " + fixed(rail, 4)};
}

Outcome gradients() {
  const auto arch = testing::tiny_arch();
  const auto model = testing::jittered(arch, 1);
  const auto sample = testing::random_patch(8, 3, 2, 1);
  const double err = gradient_check(model, sample, ClassWeights{{1.0, 2.5}, {}});

  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto m = ClassifierModel::initialize(Architecture{}, seed);
    Rng in(seed);
    MultiChannelRaster input(in.uniform_int(5, 70), in.uniform_int(5, 70), 6);
    for (auto& v : input.data()) v = static_cast<float>(in.normal(0.0, 5.0));
    const auto probs = predict(m, input);
    for (int r = 0; r < input.height(); ++r) {
      for (int c = 0; c < input.width(); ++c) {
        double sum = 0.0;
        for (float p : probs.pixel(r, c)) {
          if (p < 0.0f) worst = 1.0;
          sum += p;
        }
        worst = std::max(worst, std::abs(sum - 1.0));
      }
    }
  }
  return {err <= 1e-4 && worst <= 1e-5,
          "max relative error " + std::to_string(err) + " over " + std::to_string(arch.parameter_count()) +
              " params, worst simplex deviation " + std::to_string(worst)};
}

struct BenchmarkRun {
  BenchmarkReport prior;
  double seconds = 0.0;
};

Outcome benchmark(BenchmarkRun& run) {
  const auto config = load_loop_config(testing::source_dir() / "configs" / "benchmark.cfg");
  const auto start = Clock::now();
  run.prior = run_benchmark(config, load_ontology(config.ontology_path));
  run.seconds = seconds_since(start);
  std::cout << benchmark_text(run.prior, default_classes()) << std::flush;
  bool every = true;
  std::string deltas;
  for (const auto& s : run.prior.seeds) {
    const double d = s.report.final_metrics().overall - s.report.baseline().overall;
    every = every && d > 0.0;
    deltas += (deltas.empty() ? "" : " ") + std::string(d >= 0 ? "+" : "") + fixed(d);
  }
  const double gain = run.prior.mean_final - run.prior.mean_baseline;
  return {run.prior.seeds.size() == 5 && gain >= 3.0 && every && run.seconds < 600.0,
          "mean " + fixed(run.prior.mean_baseline) + " -> " + fixed(run.prior.mean_final) + " (" +
              (gain >= 0 ? "+" : "") + fixed(gain) + " pp), per seed " + deltas + ", " + fixed(run.seconds, 0) +
              " s"};
}

Outcome dsm_comparison(const BenchmarkRun& run) {
  auto config = load_loop_config(testing::source_dir() / "configs" / "benchmark.cfg");
  config.dsm = "true_dsm";
  DsmComparison cmp{run.prior, run_benchmark(config, load_ontology(config.ontology_path))};
  const std::string table = dsm_comparison_text(cmp, default_classes());
  std::cout << "per-class accuracy by elevation source:\n" << table << std::flush;
  const double gap = cmp.dsm.mean_final - cmp.prior.mean_final;
  const bool has_table = table.find("vegetation") != std::string::npos && table.find("railroad") != std::string::npos;
  return {std::abs(gap) <= 3.0 && has_table,
          "class prior " + fixed(cmp.prior.mean_final) + ", true DSM " + fixed(cmp.dsm.mean_final) + " (" +
              (gap >= 0 ? "+" : "") + fixed(gap) + ")"};
}

Outcome determinism() {
  const fs::path config = testing::source_dir() / "configs" / "determinism.cfg";
  const fs::path root = fs::temp_directory_path() / "semref_determinism";
  fs::remove_all(root);
  std::vector<std::string> reports;
  for (const char* run : {"a", "b"}) {
    const fs::path out = root / run;
    const std::string cmd = std::string("\"") + SEMREF_CLI + "\" loop --config \"" + config.string() +
                            "\" --out \"" + out.string() + "\" > \"" + (root / (std::string(run) + ".log")).string() +
                            "\" 2>&1";
    fs::create_directories(root);
    if (std::system(cmd.c_str()) != 0) return {false, "semref loop exited with an error, see " + root.string()};
    reports.push_back(slurp(out / "report.json") + slurp(out / "metrics.csv") + slurp(out / "summary.txt"));
  }
  const bool same = !reports[0].empty() && reports[0] == reports[1];
  return {same, std::to_string(reports[0].size()) + " report bytes, " + (same ? "identical" : "different")};
}

}  // namespace

int main() {
  int failed = 0;
  auto run = [&](const std::string& name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  };

  BenchmarkRun bench;
  bool bench_ok = false;
  run("rcc8-oracle-equivalence", rcc8_oracle);
  run("ontology-behavior", ontology_behavior);
  run("histogram-fidelity", histogram_fidelity);
  run("median-frequency-weighting", weighting);
  run("gradient-correctness", gradients);
  run("end-to-end-benchmark", [&] {
    auto o = benchmark(bench);
    bench_ok = !bench.prior.seeds.empty();
    return o;
  });
  run("dsm-comparison", [&] {
    if (!bench_ok) return Outcome{false, "benchmark did not run"};
    return dsm_comparison(bench);
  });
  run("determinism", determinism);
  std::cout << (8 - failed) << "/8 criteria passed" << std::endl;
  return failed;
}

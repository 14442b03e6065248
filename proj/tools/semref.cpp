// semref: command-line front end for the referee loop.
#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <tuple>
#include <utility>

#include "semref/classifier.hpp"
#include "semref/error.hpp"
#include "semref/metrics.hpp"
#include "semref/ontology.hpp"
#include "semref/pipeline.hpp"
#include "semref/raster.hpp"
#include "semref/rcc8.hpp"
#include "semref/referee.hpp"
#include "semref/regions.hpp"
#include "semref/report.hpp"
#include "semref/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace semref;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::pair<int, int> parse_size(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) {
      const int n = std::stoi(s);
      return {n, n};
    }
    return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
  } catch (const std::logic_error&) {
    throw Error("bad size '" + s + "', expected HxW");
  }
}

Connectivity connectivity_of(int n) {
  if (n != 4 && n != 8) throw Error("connectivity must be 4 or 8");
  return n == 4 ? Connectivity::four : Connectivity::eight;
}

// 6-channel classifier input: the scene's rgb plus feedback channels (zeros
// unless a channel raster is given).
MultiChannelRaster scene_input(const fs::path& scene_dir, const std::string& channels_path) {
  const auto rgb = load_channel_raster(scene_dir / "rgb.srraster");
  if (channels_path.empty()) return concat_channels(rgb, FeedbackChannels::zeros(rgb.height(), rgb.width()).raster);
  const auto channels = load_channel_raster(channels_path);
  validate_feedback(channels);
  return concat_channels(rgb, channels);
}

// Regions of a labels raster, scored against the matching probabilities.
struct ScoredRegions {
  RegionSet regions;
  RegionPartition partition;
  ProbabilityRaster probs;
};

ScoredRegions score_from_manifest(const json& manifest) {
  const auto labels = load_label_raster(manifest.at("labels").get<std::string>());
  auto probs = load_probability_raster(manifest.at("probs").get<std::string>());
  if (labels.height() != probs.height() || labels.width() != probs.width()) {
    throw DimensionError("labels and probabilities differ in size");
  }
  RegionSet regions = extract_regions(labels, connectivity_of(manifest.at("connectivity").get<int>()));
  RegionPartition partition = score_regions(regions.regions, probs, manifest.at("threshold").get<double>());
  return {std::move(regions), std::move(partition), std::move(probs)};
}

void add_train_flags(CLI::App* app, TrainConfig& tc) {
  app->add_option("--lr", tc.learning_rate, "learning rate");
  app->add_option("--batch", tc.batch_size, "minibatch size");
  app->add_option("--epochs", tc.max_epochs, "maximum epochs");
  app->add_option("--patches", tc.patches_per_epoch, "patches per epoch");
  app->add_option("--patch", tc.patch_size, "patch size");
  app->add_option("--val-fraction", tc.validation_fraction, "validation fraction");
  app->add_option("--patience", tc.patience, "early-stop patience");
  app->add_option("--train-seed", tc.seed, "training seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semantic referee loop: synthetic scenes, classifier, spatial reasoning"};
  app.require_subcommand(1);

  // synth
  SceneSpec spec;
  std::string synth_size = "256x256";
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a labeled synthetic scene");
  synth->add_option("--seed", spec.seed, "scene seed");
  synth->add_option("--size", synth_size, "HxW");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--buildings", spec.buildings);
  synth->add_option("--roads", spec.road_strips);
  synth->add_option("--water", spec.water_bodies);
  synth->add_option("--railroads", spec.railroads);
  synth->add_option("--light", spec.light_direction, "compass index 0..7, -1 for random diagonal");
  synth->add_option("--shadow-factor", spec.shadow_factor);
  std::pair<int, int> road_width{spec.road_width_min, spec.road_width_max};
  std::pair<int, int> building_size{spec.building_min, spec.building_max};
  std::pair<int, int> shadow_length{spec.shadow_min, spec.shadow_max};
  std::pair<double, double> pond_radius{spec.pond_radius_min, spec.pond_radius_max};
  synth->add_option("--road-width", road_width, "min max, pixels");
  synth->add_option("--building-size", building_size, "min max, pixels");
  synth->add_option("--shadow-length", shadow_length, "min max, pixels");
  synth->add_option("--pond-radius", pond_radius, "min max, pixels");
  synth->add_option("--pond-near-road", spec.pond_near_road, "share of ponds on a road edge");

  // train
  TrainConfig train_cfg;
  Architecture arch;
  std::vector<std::string> train_scenes;
  std::vector<std::string> train_channels;
  std::string train_out, train_init, train_history;
  std::uint64_t init_seed = 1;
  auto* train_cmd = app.add_subcommand("train", "train the pixel classifier on scenes");
  train_cmd->add_option("--scene", train_scenes, "scene directory (repeatable)")->required();
  train_cmd->add_option("--channels", train_channels, "feedback channels per scene (default zeros)");
  train_cmd->add_option("--out", train_out, "model checkpoint")->required();
  train_cmd->add_option("--init", train_init, "warm-start checkpoint");
  train_cmd->add_option("--init-seed", init_seed, "initialization seed");
  train_cmd->add_option("--f1", arch.f1);
  train_cmd->add_option("--f2", arch.f2);
  train_cmd->add_option("--history", train_history, "per-epoch history CSV");
  add_train_flags(train_cmd, train_cfg);

  // predict
  std::string pred_model, pred_scene, pred_input, pred_channels, pred_out, pred_labels_out;
  auto* predict_cmd = app.add_subcommand("predict", "per-pixel class probabilities");
  predict_cmd->add_option("--model", pred_model)->required();
  auto* pred_scene_opt = predict_cmd->add_option("--scene", pred_scene, "scene directory");
  predict_cmd->add_option("--input", pred_input, "6-channel raster")->excludes(pred_scene_opt);
  predict_cmd->add_option("--channels", pred_channels, "feedback channels for --scene");
  predict_cmd->add_option("--out", pred_out, "probability raster")->required();
  predict_cmd->add_option("--labels-out", pred_labels_out, "argmax label raster");

  // regions
  std::string reg_labels, reg_probs, reg_out;
  double reg_threshold = 0.7;
  int reg_conn = 4;
  auto* regions_cmd = app.add_subcommand("regions", "extract and score connected regions");
  regions_cmd->add_option("labels", reg_labels)->required();
  regions_cmd->add_option("probs", reg_probs)->required();
  regions_cmd->add_option("--threshold", reg_threshold);
  regions_cmd->add_option("--connectivity", reg_conn);
  regions_cmd->add_option("--out", reg_out)->required();

  // rcc8
  std::string rcc_regions, rcc_out;
  int rcc_grid = 64;
  bool rcc_touching = false;
  auto* rcc_cmd = app.add_subcommand("rcc8", "RCC-8 relations between co-segment regions");
  rcc_cmd->add_option("regions", rcc_regions)->required();
  rcc_cmd->add_option("--segment-grid", rcc_grid, "tile size");
  rcc_cmd->add_flag("--touching", rcc_touching, "every bbox-adjacent pair instead of co-segment pairs");
  rcc_cmd->add_option("--out", rcc_out)->required();

  // referee
  std::string ref_regions, ref_relations, ref_ontology = "ontologies/ontocity_subset.onto", ref_dsm,
                                          ref_out, ref_report, ref_csv;
  int ref_grid = 64;
  bool ref_zero = false;
  ElevationThresholds ref_thresholds;
  auto* referee_cmd = app.add_subcommand("referee", "arbitrate low-certainty regions, emit channels");
  referee_cmd->add_option("--regions", ref_regions)->required();
  referee_cmd->add_option("--relations", ref_relations);
  referee_cmd->add_option("--ontology", ref_ontology);
  referee_cmd->add_option("--dsm", ref_dsm, "elevation raster");
  referee_cmd->add_option("--elevation-low", ref_thresholds.low);
  referee_cmd->add_option("--elevation-high", ref_thresholds.high);
  referee_cmd->add_option("--segment-grid", ref_grid);
  referee_cmd->add_flag("--round0-zero", ref_zero, "emit all-zero channels");
  referee_cmd->add_option("--out", ref_out)->required();
  referee_cmd->add_option("--report", ref_report);
  referee_cmd->add_option("--histogram-csv", ref_csv);

  // loop
  std::string loop_config, loop_out, loop_dsm;
  bool loop_compare = false;
  auto* loop_cmd = app.add_subcommand("loop", "run the referee loop over the configured seeds");
  loop_cmd->add_option("--config", loop_config)->required();
  loop_cmd->add_option("--out", loop_out)->required();
  loop_cmd->add_option("--dsm", loop_dsm, "none or true_dsm");
  loop_cmd->add_flag("--compare-dsm", loop_compare, "also run with true_dsm and compare per class");

  // eval
  std::string eval_pred, eval_truth, eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "confusion matrix of a prediction");
  eval_cmd->add_option("--pred", eval_pred, "label or probability raster")->required();
  eval_cmd->add_option("--truth", eval_truth, "ground-truth labels")->required();
  eval_cmd->add_option("--out", eval_out, "metrics JSON");

  // raster check
  std::string check_path;
  auto* raster_cmd = app.add_subcommand("raster", "raster utilities");
  raster_cmd->require_subcommand(1);
  auto* check_cmd = raster_cmd->add_subcommand("check", "validate a raster file");
  check_cmd->add_option("path", check_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const ClassSet& classes = default_classes();

    if (*synth) {
      std::tie(spec.height, spec.width) = parse_size(synth_size);
      std::tie(spec.road_width_min, spec.road_width_max) = road_width;
      std::tie(spec.building_min, spec.building_max) = building_size;
      std::tie(spec.shadow_min, spec.shadow_max) = shadow_length;
      std::tie(spec.pond_radius_min, spec.pond_radius_max) = pond_radius;
      const auto scene = generate_scene(spec);
      save_scene(synth_out, scene);
      std::cout << "wrote scene seed " << spec.seed << " (" << spec.height << "x" << spec.width
                << ") to " << synth_out << "\n";
    } else if (*train_cmd) {
      if (!train_channels.empty() && train_channels.size() != train_scenes.size()) {
        throw Error("--channels must be given once per --scene");
      }
      std::vector<TrainingSample> samples;
      std::vector<double> freq(cls::count, 0.0);
      for (std::size_t i = 0; i < train_scenes.size(); ++i) {
        auto labels = load_label_raster(fs::path(train_scenes[i]) / "labels.srraster", cls::count);
        const auto f = class_frequencies(labels);
        for (int k = 0; k < cls::count; ++k) freq[k] += f[k] / static_cast<double>(train_scenes.size());
        samples.push_back({scene_input(train_scenes[i], train_channels.empty() ? "" : train_channels[i]),
                           std::move(labels),
                           {}});
      }
      const auto model = train_init.empty() ? ClassifierModel::initialize(arch, init_seed) : load_model(train_init);
      const auto result = train(model, samples, median_frequency_weights(freq), train_cfg);
      save_model(train_out, result.model);
      std::ostringstream history;
      history << "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
      for (const auto& e : result.history) {
        history << e.epoch << "," << e.train_loss << "," << e.train_accuracy << "," << e.val_loss << ","
                << e.val_accuracy << "\n";
      }
      if (!train_history.empty()) write_text(train_history, history.str());
      std::cout << "epochs " << result.history.size() << ", best epoch " << result.best_epoch
                << ", validation accuracy " << format_percent(result.best_val_accuracy) << "\n";
    } else if (*predict_cmd) {
      const auto model = load_model(pred_model);
      MultiChannelRaster input = !pred_scene.empty()  ? scene_input(pred_scene, pred_channels)
                                 : !pred_input.empty() ? load_channel_raster(pred_input)
                                                       : throw Error("predict needs --scene or --input");
      const auto probs = predict(model, input);
      save_raster(pred_out, probs);
      if (!pred_labels_out.empty()) save_raster(pred_labels_out, probs.argmax_labels());
    } else if (*regions_cmd) {
      json manifest{{"labels", fs::absolute(reg_labels).string()},
                    {"probs", fs::absolute(reg_probs).string()},
                    {"threshold", reg_threshold},
                    {"connectivity", reg_conn}};
      const auto scored = score_from_manifest(manifest);
      json rows = json::array();
      for (const auto& r : scored.regions.regions) {
        rows.push_back({{"id", r.id},
                        {"class", classes.name(r.label)},
                        {"predicted", classes.name(r.predicted)},
                        {"certainty", std::round(r.certainty * 1e6) / 1e6},
                        {"misclassified", scored.partition.is_misclassified[r.id] != 0},
                        {"bbox", {r.bbox.r0, r.bbox.c0, r.bbox.r1, r.bbox.c1}},
                        {"area", r.area}});
      }
      manifest["height"] = scored.regions.height;
      manifest["width"] = scored.regions.width;
      manifest["misclassified"] = scored.partition.misclassified.size();
      manifest["regions"] = rows;
      write_text(reg_out, manifest.dump(2) + "\n");
      std::cout << rows.size() << " regions, " << scored.partition.misclassified.size()
                << " below certainty " << reg_threshold << "\n";
    } else if (*rcc_cmd) {
      const json manifest = read_json(rcc_regions);
      const auto labels = load_label_raster(manifest.at("labels").get<std::string>());
      const auto regions = extract_regions(labels, connectivity_of(manifest.at("connectivity").get<int>()));
      std::vector<PairRelation> pairs;
      if (rcc_touching) {
        pairs = relate_touching(regions.regions);
      } else {
        auto grid = grid_segments(regions.height, regions.width, rcc_grid);
        grid.assign(regions.regions);
        pairs = relate_in_segments(grid, regions.regions);
      }
      std::ostringstream csv;
      csv << "region_a,region_b,relation\n";
      for (const auto& p : pairs) csv << p.a << "," << p.b << "," << to_string(p.relation) << "\n";
      write_text(rcc_out, csv.str());
      std::cout << pairs.size() << " relations\n";
    } else if (*referee_cmd) {
      const json manifest = read_json(ref_regions);
      const auto scored = score_from_manifest(manifest);
      const auto ontology = load_ontology(ref_ontology);
      RelationTable known;
      if (!ref_relations.empty()) {
        std::ifstream in(ref_relations);
        if (!in) throw Error("cannot open " + ref_relations);
        std::string line;
        std::getline(in, line);
        if (line != "region_a,region_b,relation") throw FormatError(ref_relations + ": unexpected header");
        int row = 1;
        while (std::getline(in, line)) {
          ++row;
          if (line.empty()) continue;
          std::stringstream fields(line);
          std::string a, b, rel;
          std::getline(fields, a, ',');
          std::getline(fields, b, ',');
          std::getline(fields, rel, ',');
          const auto parsed = parse_rcc8(rel);
          if (!parsed) throw FormatError(ref_relations + " line " + std::to_string(row) + ": unknown relation '" + rel + "'");
          known.insert(std::stoi(a), std::stoi(b), *parsed);
        }
      }
      std::optional<MultiChannelRaster> dsm;
      if (!ref_dsm.empty()) dsm = load_channel_raster(ref_dsm);
      auto grid = grid_segments(scored.regions.height, scored.regions.width, ref_grid);
      grid.assign(scored.regions.regions);
      const auto pairs = relate_errors(grid, scored.partition, scored.regions.regions, &known);
      const auto characterization = characterize_errors(pairs, scored.regions.regions, ontology);
      const auto verdicts = infer_region_verdicts(scored.partition, scored.regions.regions, pairs, ontology);
      ChannelOptions options{ref_thresholds, ref_zero};
      const auto channels = synthesize_channels(verdicts, scored.regions, scored.partition, ontology,
                                                dsm ? &*dsm : nullptr, options);
      validate_feedback(channels.raster);
      save_raster(ref_out, channels.raster);
      int shadow = 0, inconsistent = 0;
      for (const auto& v : verdicts) {
        shadow += v.verdict == VerdictKind::shadow;
        inconsistent += v.verdict == VerdictKind::inconsistent;
      }
      if (!ref_report.empty()) {
        json report{{"regions", scored.regions.regions.size()},
                    {"misclassified", scored.partition.misclassified.size()},
                    {"shadow", shadow},
                    {"inconsistent", inconsistent},
                    {"characterization", characterization_json(characterization)},
                    {"verdicts", verdicts_json(verdicts)}};
        write_text(ref_report, report.dump(2) + "\n");
      }
      if (!ref_csv.empty()) write_text(ref_csv, histogram_csv(characterization.histogram));
      std::cout << verdicts.size() << " misclassified regions: " << shadow << " shadow, " << inconsistent
                << " inconsistent\n";
    } else if (*loop_cmd) {
      LoopConfig config = load_loop_config(loop_config);
      if (!loop_dsm.empty()) config.dsm = loop_dsm == "none" ? "" : loop_dsm;
      config.validate();
      const auto ontology = load_ontology(config.ontology_path);
      fs::create_directories(loop_out);
      if (loop_compare) {
        const auto cmp = run_dsm_comparison(config, ontology);
        write_text(fs::path(loop_out) / "report.json", dsm_comparison_json(cmp, classes).dump(2) + "\n");
        const std::string text = benchmark_text(cmp.prior, classes) + "\n" + benchmark_text(cmp.dsm, classes) +
                                 "\nper-class accuracy by elevation source:\n" + dsm_comparison_text(cmp, classes);
        write_text(fs::path(loop_out) / "summary.txt", text);
        std::cout << text;
      } else {
        const auto bench = run_benchmark(config, ontology);
        write_text(fs::path(loop_out) / "report.json", benchmark_json(bench, classes).dump(2) + "\n");
        std::string csv;
        for (const auto& s : bench.seeds) {
          std::istringstream rows(loop_metrics_csv(s.report, classes));
          std::string line;
          bool header = true;
          while (std::getline(rows, line)) {
            if (header) {
              if (csv.empty()) csv += "seed," + line + "\n";
              header = false;
              continue;
            }
            csv += std::to_string(s.seed) + "," + line + "\n";
          }
        }
        write_text(fs::path(loop_out) / "metrics.csv", csv);
        const std::string text = benchmark_text(bench, classes);
        write_text(fs::path(loop_out) / "summary.txt", text);
        std::cout << text;
      }
    } else if (*eval_cmd) {
      const auto truth = load_label_raster(eval_truth, cls::count);
      const auto header = read_raster_header(eval_pred);
      const LabelRaster pred = header.kind == RasterKind::probability
                                   ? load_probability_raster(eval_pred).argmax_labels()
                                   : load_label_raster(eval_pred, cls::count);
      const auto metrics = confusion_metrics(pred, truth);
      std::cout << format_confusion(metrics, classes);
      if (!eval_out.empty()) write_text(eval_out, metrics_json(metrics, classes).dump(2) + "\n");
    } else if (*check_cmd) {
      const auto header = read_raster_header(check_path);
      load_raster(check_path, header.kind);
      std::cout << check_path << ": ok, " << to_string(header.kind) << " " << header.height << "x"
                << header.width << "x" << header.channels << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "semref: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#include "semref/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace semref {

using nlohmann::json;

namespace {

// Rounded so reports compare byte for byte and read cleanly.
double r4(double v) { return std::round(v * 1e4) / 1e4; }

std::string signed_delta(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1f", v);
  return buf;
}

}  // namespace

json metrics_json(const Metrics& m, const ClassSet& classes) {
  json rows = json::array();
  for (int t = 0; t < m.classes; ++t) {
    json row{{"class", classes.name(static_cast<ClassId>(t))}, {"pixels", m.support[t]}};
    if (!m.present[t]) {
      row["absent"] = true;
    } else {
      json cells = json::array();
      for (int p = 0; p < m.classes; ++p) cells.push_back(format_percent(m.percent[t][p]));
      row["percent"] = cells;
      row["accuracy"] = r4(m.class_accuracy(t));
    }
    rows.push_back(row);
  }
  return {{"overall", r4(m.overall)}, {"pixels", m.pixels}, {"rows", rows}};
}

json histogram_json(const RelationHistogram& h) {
  json rows = json::array();
  for (const auto& [key, n] : h.counts) {
    rows.push_back({{"relation", to_string(key.relation)},
                    {"concept", key.concept_name},
                    {"count", n},
                    {"regions", h.distinct(key.relation, key.concept_name)}});
  }
  return rows;
}

json characterization_json(const ErrorCharacterization& c) {
  json out{{"total", c.histogram.total()}, {"histogram", histogram_json(c.histogram)}};
  if (c.dominant) {
    out["dominant"] = {{"relation", to_string(c.dominant->relation)},
                       {"concept", c.dominant->concept_name}};
    out["concepts"] = c.concepts;
  } else {
    out["dominant"] = nullptr;
    out["concepts"] = json::array();
  }
  return out;
}

json verdicts_json(const std::vector<RegionVerdict>& verdicts) {
  json rows = json::array();
  for (const auto& v : verdicts) {
    json row{{"region", v.region_id}, {"verdict", to_string(v.verdict)}};
    if (v.verdict == VerdictKind::shadow) row["concept"] = v.inferred_concept;
    if (!v.violations.empty()) {
      json viol = json::array();
      for (const auto& x : v.violations) {
        json item{{"rule", x.rule}, {"restriction", x.restriction_id}};
        if (x.witness) {
          item["witness"] = {{"relation", to_string(x.witness->relation)},
                             {"region", x.witness->neighbor_id},
                             {"concept", x.witness->neighbor_concept}};
        }
        viol.push_back(item);
      }
      row["violations"] = viol;
    }
    rows.push_back(row);
  }
  return rows;
}

json referee_summary_json(const RefereeSummary& s) {
  return {{"regions", s.regions},
          {"misclassified", s.misclassified},
          {"shadow", s.shadow},
          {"inconsistent", s.inconsistent},
          {"none", s.none},
          {"short_circuit", s.short_circuit},
          {"characterization", characterization_json(s.characterization)}};
}

json loop_report_json(const LoopReport& report, const ClassSet& classes) {
  json rounds = json::array();
  for (const auto& r : report.rounds) {
    json train = json::array();
    for (const auto& s : r.train_referee) train.push_back(referee_summary_json(s));
    json test = json::array();
    for (const auto& s : r.test_referee) test.push_back(referee_summary_json(s));
    rounds.push_back({{"round", r.round},
                      {"val_accuracy", r4(r.val_accuracy)},
                      {"epochs", r.epochs},
                      {"best_epoch", r.best_epoch},
                      {"validation", metrics_json(r.validation, classes)},
                      {"test", metrics_json(r.test, classes)},
                      {"train_referee", train},
                      {"test_referee", test}});
  }
  return {{"train_rounds", report.train_rounds},
          {"test_rounds", report.test_rounds},
          {"rounds_match", report.train_rounds == report.test_rounds},
          {"stop_reason", report.stop_reason},
          {"baseline_accuracy", r4(report.baseline().overall)},
          {"final_accuracy", r4(report.final_metrics().overall)},
          {"rounds", rounds}};
}

json benchmark_json(const BenchmarkReport& report, const ClassSet& classes) {
  json seeds = json::array();
  for (const auto& s : report.seeds) {
    seeds.push_back({{"seed", s.seed},
                     {"baseline", r4(s.report.baseline().overall)},
                     {"final", r4(s.report.final_metrics().overall)},
                     {"delta", r4(s.report.final_metrics().overall - s.report.baseline().overall)},
                     {"loop", loop_report_json(s.report, classes)}});
  }
  return {{"elevation", report.dsm ? "true_dsm" : "class_prior"},
          {"mean_baseline", r4(report.mean_baseline)},
          {"mean_final", r4(report.mean_final)},
          {"mean_delta", r4(report.mean_final - report.mean_baseline)},
          {"pooled_baseline", metrics_json(report.pooled_baseline, classes)},
          {"pooled_final", metrics_json(report.pooled_final, classes)},
          {"seeds", seeds}};
}

json dsm_comparison_json(const DsmComparison& c, const ClassSet& classes) {
  json rows = json::array();
  for (int k = 0; k < classes.size(); ++k) {
    const bool present = c.prior.pooled_final.present[k] && c.dsm.pooled_final.present[k];
    json row{{"class", classes.name(static_cast<ClassId>(k))}};
    if (present) {
      row["class_prior"] = format_percent(c.prior.pooled_final.class_accuracy(k));
      row["true_dsm"] = format_percent(c.dsm.pooled_final.class_accuracy(k));
    } else {
      row["absent"] = true;
    }
    rows.push_back(row);
  }
  return {{"class_prior_final", r4(c.prior.mean_final)},
          {"true_dsm_final", r4(c.dsm.mean_final)},
          {"difference", r4(c.dsm.mean_final - c.prior.mean_final)},
          {"per_class", rows},
          {"class_prior", benchmark_json(c.prior, classes)},
          {"true_dsm", benchmark_json(c.dsm, classes)}};
}

std::string histogram_csv(const RelationHistogram& h) {
  std::ostringstream out;
  out << "relation,concept,count,regions\n";
  for (const auto& [key, n] : h.counts) {
    out << to_string(key.relation) << "," << key.concept_name << "," << n << ","
        << h.distinct(key.relation, key.concept_name) << "\n";
  }
  return out.str();
}

std::string loop_metrics_csv(const LoopReport& report, const ClassSet& classes) {
  std::ostringstream out;
  out << "round,split,overall";
  for (int k = 0; k < classes.size(); ++k) out << "," << classes.name(static_cast<ClassId>(k));
  out << "\n";
  auto row = [&](int round, const char* split, const Metrics& m) {
    out << round << "," << split << "," << format_percent(m.overall);
    for (int k = 0; k < m.classes; ++k) {
      out << "," << (m.present[k] ? format_percent(m.class_accuracy(k)) : "absent");
    }
    out << "\n";
  };
  for (const auto& r : report.rounds) {
    row(r.round, "validation", r.validation);
    row(r.round, "test", r.test);
  }
  return out.str();
}

std::string benchmark_text(const BenchmarkReport& report, const ClassSet& classes) {
  std::ostringstream out;
  out << "elevation source: " << (report.dsm ? "true_dsm" : "class prior") << "\n";
  out << "seed  baseline  final  delta  rounds\n";
  for (const auto& s : report.seeds) {
    char line[128];
    std::snprintf(line, sizeof line, "%-5llu %8s %6s %6s %7d\n",
                  static_cast<unsigned long long>(s.seed),
                  format_percent(s.report.baseline().overall).c_str(),
                  format_percent(s.report.final_metrics().overall).c_str(),
                  signed_delta(s.report.final_metrics().overall - s.report.baseline().overall).c_str(),
                  s.report.train_rounds);
    out << line;
  }
  out << "mean  " << format_percent(report.mean_baseline) << " -> " << format_percent(report.mean_final)
      << " (" << signed_delta(report.mean_final - report.mean_baseline) << ")\n\n";
  out << "pooled confusion, round 0:\n" << format_confusion(report.pooled_baseline, classes);
  out << "\npooled confusion, final round:\n" << format_confusion(report.pooled_final, classes);
  return out.str();
}

std::string dsm_comparison_text(const DsmComparison& c, const ClassSet& classes) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%-12s %12s %10s\n", "class", "class prior", "true dsm");
  out << line;
  for (int k = 0; k < classes.size(); ++k) {
    const auto name = classes.name(static_cast<ClassId>(k));
    if (!c.prior.pooled_final.present[k] || !c.dsm.pooled_final.present[k]) {
      std::snprintf(line, sizeof line, "%-12s %12s %10s\n", name.c_str(), "absent", "absent");
    } else {
      std::snprintf(line, sizeof line, "%-12s %12s %10s\n", name.c_str(),
                    format_percent(c.prior.pooled_final.class_accuracy(k)).c_str(),
                    format_percent(c.dsm.pooled_final.class_accuracy(k)).c_str());
    }
    out << line;
  }
  std::snprintf(line, sizeof line, "%-12s %12s %10s\n", "overall", format_percent(c.prior.mean_final).c_str(),
                format_percent(c.dsm.mean_final).c_str());
  out << line;
  return out.str();
}

}  // namespace semref

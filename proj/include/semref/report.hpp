#pragma once

#include <string>

#include <json.hpp>

#include "semref/metrics.hpp"
#include "semref/pipeline.hpp"
#include "semref/referee.hpp"
#include "semref/regions.hpp"

namespace semref {

nlohmann::json metrics_json(const Metrics& metrics, const ClassSet& classes);
nlohmann::json histogram_json(const RelationHistogram& histogram);
nlohmann::json characterization_json(const ErrorCharacterization& c);
nlohmann::json verdicts_json(const std::vector<RegionVerdict>& verdicts);
nlohmann::json referee_summary_json(const RefereeSummary& summary);
nlohmann::json loop_report_json(const LoopReport& report, const ClassSet& classes);
nlohmann::json benchmark_json(const BenchmarkReport& report, const ClassSet& classes);
nlohmann::json dsm_comparison_json(const DsmComparison& comparison, const ClassSet& classes);

// relation,concept,count,regions
std::string histogram_csv(const RelationHistogram& histogram);
// round,split,overall,<class accuracies>
std::string loop_metrics_csv(const LoopReport& report, const ClassSet& classes);

std::string benchmark_text(const BenchmarkReport& report, const ClassSet& classes);
// Per-class accuracy of the class-prior run next to the surface-model run.
std::string dsm_comparison_text(const DsmComparison& comparison, const ClassSet& classes);

}  // namespace semref

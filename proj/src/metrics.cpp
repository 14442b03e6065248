#include "semref/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "semref/error.hpp"

namespace semref {

namespace {

Metrics from_counts(const std::vector<std::vector<long long>>& counts) {
  const int K = static_cast<int>(counts.size());
  Metrics m;
  m.classes = K;
  m.counts = counts;
  m.percent.assign(K, std::vector<double>(K, 0.0));
  m.support.assign(K, 0);
  m.present.assign(K, false);
  long long hits = 0;
  for (int t = 0; t < K; ++t) {
    for (int p = 0; p < K; ++p) m.support[t] += counts[t][p];
    hits += counts[t][t];
    m.pixels += m.support[t];
    m.present[t] = m.support[t] > 0;
    if (!m.present[t]) continue;
    for (int p = 0; p < K; ++p) {
      m.percent[t][p] = 100.0 * static_cast<double>(counts[t][p]) / static_cast<double>(m.support[t]);
    }
  }
  if (m.pixels > 0) m.overall = 100.0 * static_cast<double>(hits) / static_cast<double>(m.pixels);
  return m;
}

}  // namespace

Metrics confusion_metrics(const LabelRaster& predicted, const LabelRaster& truth,
                          std::span<const std::uint8_t> mask) {
  if (predicted.height() != truth.height() || predicted.width() != truth.width()) {
    throw DimensionError("prediction is " + std::to_string(predicted.height()) + "x" +
                         std::to_string(predicted.width()) + ", ground truth is " +
                         std::to_string(truth.height()) + "x" + std::to_string(truth.width()));
  }
  if (!mask.empty() && mask.size() != truth.size()) throw DimensionError("mask does not match rasters");
  const int K = std::max(predicted.class_count(), truth.class_count());
  std::vector<std::vector<long long>> counts(K, std::vector<long long>(K, 0));
  const auto p = predicted.cells();
  const auto t = truth.cells();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    ++counts[t[i]][p[i]];
  }
  return from_counts(counts);
}

Metrics merge_metrics(std::span<const Metrics> parts) {
  if (parts.empty()) return {};
  const int K = parts.front().classes;
  std::vector<std::vector<long long>> counts(K, std::vector<long long>(K, 0));
  for (const auto& m : parts) {
    if (m.classes != K) throw DimensionError("cannot merge metrics over different class counts");
    for (int t = 0; t < K; ++t) {
      for (int p = 0; p < K; ++p) {
        counts[t][p] += m.counts[t][p];
      }
    }
  }
  return from_counts(counts);
}

std::string format_percent(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", value);
  return buf;
}

std::string format_confusion(const Metrics& metrics, const ClassSet& classes) {
  std::ostringstream out;
  char cell[64];
  std::snprintf(cell, sizeof cell, "%-12s", "truth\\pred");
  out << cell;
  for (int p = 0; p < metrics.classes; ++p) {
    std::snprintf(cell, sizeof cell, "%10s", classes.name(static_cast<ClassId>(p)).c_str());
    out << cell;
  }
  out << "\n";
  for (int t = 0; t < metrics.classes; ++t) {
    std::snprintf(cell, sizeof cell, "%-12s", classes.name(static_cast<ClassId>(t)).c_str());
    out << cell;
    if (!metrics.present[t]) {
      out << "    absent\n";
      continue;
    }
    for (int p = 0; p < metrics.classes; ++p) {
      std::snprintf(cell, sizeof cell, "%10s", format_percent(metrics.percent[t][p]).c_str());
      out << cell;
    }
    out << "\n";
  }
  out << "overall " << format_percent(metrics.overall) << "\n";
  return out.str();
}

}  // namespace semref

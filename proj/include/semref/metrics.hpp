#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "semref/raster.hpp"

namespace semref {

struct Metrics {
  int classes = 0;
  std::vector<std::vector<long long>> counts;  // row = truth, column = prediction
  std::vector<std::vector<double>> percent;    // counts as row percentages
  std::vector<long long> support;            // ground-truth pixels per class
  std::vector<bool> present;
  double overall = 0.0;  // percent of pixels correct
  long long pixels = 0;

  // Diagonal entry; absent rows have no accuracy.
  double class_accuracy(int c) const { return percent[c][c]; }
};

// Optional mask selects the pixels to score.
Metrics confusion_metrics(const LabelRaster& predicted, const LabelRaster& truth,
                          std::span<const std::uint8_t> mask = {});

// Pixel-weighted merge of several evaluations.
Metrics merge_metrics(std::span<const Metrics> parts);

// One decimal, e.g. "84.2"; absent rows print "absent".
std::string format_percent(double value);
std::string format_confusion(const Metrics& metrics, const ClassSet& classes);

}  // namespace semref

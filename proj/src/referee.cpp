#include "semref/referee.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "semref/error.hpp"

namespace semref {

void RelationHistogram::add(Rcc8 relation, const std::string& concept_name, int misclassified_id) {
  RelationKey key{relation, concept_name};
  ++counts[key];
  witnesses[key].push_back(misclassified_id);
}

int RelationHistogram::total() const {
  int sum = 0;
  for (const auto& [_, n] : counts) sum += n;
  return sum;
}

int RelationHistogram::count(Rcc8 relation, const std::string& concept_name) const {
  auto it = counts.find({relation, concept_name});
  return it == counts.end() ? 0 : it->second;
}

int RelationHistogram::distinct(Rcc8 relation, const std::string& concept_name) const {
  auto it = witnesses.find({relation, concept_name});
  if (it == witnesses.end()) return 0;
  return static_cast<int>(std::set<int>(it->second.begin(), it->second.end()).size());
}

std::vector<SegmentPair> relate_errors(const SegmentGrid& grid, const RegionPartition& partition,
                                       std::span<const Region> regions,
                                       const RelationTable* known) {
  if (grid.region_tiles.size() != regions.size() ||
      partition.is_misclassified.size() != regions.size()) {
    throw Error("relate_errors: grid, partition and regions disagree");
  }
  RelationTable cache;
  std::vector<SegmentPair> out;
  for (std::size_t s = 0; s < grid.tile_regions.size(); ++s) {
    std::vector<int> in_p;
    std::vector<int> in_r;
    for (int id : grid.tile_regions[s]) {
      (partition.is_misclassified[id] ? in_p : in_r).push_back(id);
    }
    for (int r : in_r) {
      for (int p : in_p) {
        std::optional<Rcc8> rel = known ? known->find(p, r) : std::nullopt;
        if (!rel) rel = cache.find(p, r);
        if (!rel) {
          rel = compute_rcc8(regions[p], regions[r]);
          cache.insert(p, r, *rel);
        }
        out.push_back({static_cast<int>(s), p, r, *rel});
      }
    }
  }
  return out;
}

std::optional<RelationKey> dominant_pair(const RelationHistogram& histogram) {
  std::optional<RelationKey> best;
  int best_count = 0;
  // Ties go to the smaller relation name, then the smaller concept name.
  auto before = [](const RelationKey& a, const RelationKey& b) {
    const auto ra = to_string(a.relation);
    const auto rb = to_string(b.relation);
    return ra != rb ? ra < rb : a.concept_name < b.concept_name;
  };
  for (const auto& [key, n] : histogram.counts) {
    if (key.relation == Rcc8::dc) continue;
    if (n > best_count || (n == best_count && best && before(key, *best))) {
      best = key;
      best_count = n;
    }
  }
  return best;
}

ErrorCharacterization characterize_histogram(RelationHistogram histogram,
                                             const Ontology& ontology) {
  ErrorCharacterization out;
  out.histogram = std::move(histogram);
  out.dominant = dominant_pair(out.histogram);
  if (out.dominant) {
    out.concepts =
        query_exists(ontology, to_string(out.dominant->relation), out.dominant->concept_name);
  }
  return out;
}

ErrorCharacterization characterize_errors(std::span<const SegmentPair> pairs,
                                          std::span<const Region> regions,
                                          const Ontology& ontology) {
  RelationHistogram histogram;
  for (const auto& pair : pairs) {
    histogram.add(pair.relation, ontology.concept_for(regions[pair.classified].predicted),
                  pair.misclassified);
  }
  return characterize_histogram(std::move(histogram), ontology);
}

ErrorCharacterization characterize_errors(const SegmentGrid& grid,
                                          const RegionPartition& partition,
                                          std::span<const Region> regions,
                                          const Ontology& ontology) {
  const auto pairs = relate_errors(grid, partition, regions);
  return characterize_errors(pairs, regions, ontology);
}

std::string_view to_string(VerdictKind kind) {
  switch (kind) {
    case VerdictKind::none:
      return "none";
    case VerdictKind::shadow:
      return "shadow";
    case VerdictKind::inconsistent:
      return "inconsistent";
  }
  return "?";
}

std::vector<RegionVerdict> infer_region_verdicts(const RegionPartition& partition,
                                                 std::span<const Region> regions,
                                                 std::span<const SegmentPair> pairs,
                                                 const Ontology& ontology) {
  // Unique classified neighbors per misclassified region, in id order.
  std::map<int, std::map<int, Rcc8>> neighborhoods;
  for (const auto& pair : pairs) neighborhoods[pair.misclassified][pair.classified] = pair.relation;

  const bool has_nonflat = ontology.has_concept("NonFlatRegion");
  std::vector<RegionVerdict> out;
  for (int id : partition.misclassified) {
    const Region& region = regions[id];
    RegionVerdict verdict;
    verdict.region_id = id;

    std::vector<Neighbor> neighbors;
    for (const auto& [other, relation] : neighborhoods[id]) {
      neighbors.push_back({relation, ontology.concept_for(regions[other].predicted), other});
    }
    const RegionFacts facts{ontology.concept_for(region.predicted), region.area, region.interior(),
                            id};
    verdict.violations = check_region_consistency(ontology, facts, neighbors);
    if (!verdict.violations.empty()) {
      verdict.verdict = VerdictKind::inconsistent;
    } else if (has_nonflat) {
      for (const auto& n : neighbors) {
        if (n.relation == Rcc8::dc || !ontology.subsumes("NonFlatRegion", n.concept_name)) continue;
        auto concepts = query_exists(ontology, to_string(n.relation), n.concept_name);
        if (concepts.empty()) continue;
        verdict.verdict = VerdictKind::shadow;
        verdict.inferred_concept = concepts.front();
        break;
      }
    }
    out.push_back(std::move(verdict));
  }
  return out;
}

FeedbackChannels FeedbackChannels::zeros(int height, int width) {
  return {MultiChannelRaster(height, width, 3)};
}

void validate_feedback(const MultiChannelRaster& channels) {
  if (channels.channels() != 3) throw DimensionError("feedback rasters carry exactly 3 channels");
  for (int r = 0; r < channels.height(); ++r) {
    for (int c = 0; c < channels.width(); ++c) {
      const float s = channels.at(r, c, kShadowChannel);
      const float e = channels.at(r, c, kElevationChannel);
      const float u = channels.at(r, c, kUncertaintyChannel);
      const bool ok = (s == -1.0f || s == 0.0f || s == 1.0f) &&
                      (e == -1.0f || e == 0.0f || e == 1.0f || e == 2.0f) &&
                      (u == 0.0f || u == 1.0f);
      if (!ok) {
        throw Error("feedback channel value out of domain at pixel (row " + std::to_string(r) +
                    ", col " + std::to_string(c) + ")");
      }
    }
  }
}

int prior_elevation(const Ontology& ontology, const std::string& concept_name) {
  if (ontology.has_concept("NonFlatRegion") && ontology.subsumes("NonFlatRegion", concept_name)) {
    return 2;
  }
  if (ontology.has_concept("VegetationArea") && ontology.subsumes("VegetationArea", concept_name)) {
    return 1;
  }
  return 0;
}

FeedbackChannels synthesize_channels(std::span<const RegionVerdict> verdicts,
                                     const RegionSet& regions, const RegionPartition& partition,
                                     const Ontology& ontology, const MultiChannelRaster* dsm,
                                     const ChannelOptions& options) {
  auto out = FeedbackChannels::zeros(regions.height, regions.width);
  if (options.zero_all) return out;
  if (dsm && (dsm->height() != regions.height || dsm->width() != regions.width ||
              dsm->channels() < 1)) {
    throw DimensionError("dsm is " + std::to_string(dsm->height()) + "x" +
                         std::to_string(dsm->width()) + ", scene is " +
                         std::to_string(regions.height) + "x" + std::to_string(regions.width));
  }
  if (partition.is_misclassified.size() != regions.regions.size()) {
    throw Error("synthesize_channels: partition does not match regions");
  }

  std::vector<VerdictKind> kind(regions.regions.size(), VerdictKind::none);
  for (const auto& v : verdicts) kind.at(v.region_id) = v.verdict;

  auto& raster = out.raster;
  for (const Region& region : regions.regions) {
    const bool confident = !partition.is_misclassified[region.id];
    const VerdictKind verdict = kind[region.id];

    float shadow = 0.0f;
    if (verdict == VerdictKind::shadow) {
      shadow = 1.0f;
    } else if (confident) {
      shadow = -1.0f;
    }

    float elevation = 0.0f;
    if (verdict == VerdictKind::inconsistent) {
      elevation = -1.0f;
    } else if (dsm) {
      double sum = 0.0;
      for (const Pixel& p : region.pixels) sum += dsm->at(p.row, p.col, 0);
      const double mean = sum / region.area;
      elevation = mean < options.thresholds.low ? 0.0f : mean < options.thresholds.high ? 1.0f : 2.0f;
    } else {
      elevation = static_cast<float>(prior_elevation(ontology, ontology.concept_for(region.predicted)));
    }

    const float uncertainty = verdict == VerdictKind::inconsistent ? 1.0f : 0.0f;
    for (const Pixel& p : region.pixels) {
      raster.at(p.row, p.col, kShadowChannel) = shadow;
      raster.at(p.row, p.col, kElevationChannel) = elevation;
      raster.at(p.row, p.col, kUncertaintyChannel) = uncertainty;
    }
  }
  return out;
}

RefereeOutcome run_referee(const ProbabilityRaster& probs, const Ontology& ontology,
                           const RefereeConfig& config, const MultiChannelRaster* dsm,
                           const RegionSet* fixed_regions) {
  if (fixed_regions && (fixed_regions->height != probs.height() || fixed_regions->width != probs.width())) {
    throw DimensionError("fixed regions do not match the probability raster");
  }
  RefereeOutcome out{fixed_regions ? *fixed_regions
                                   : extract_regions(probs.argmax_labels(), config.connectivity),
                     {}, {}, {}, FeedbackChannels::zeros(probs.height(), probs.width())};
  out.partition = score_regions(out.regions.regions, probs, config.threshold);
  auto grid = grid_segments(probs.height(), probs.width(), config.tile_size);
  grid.assign(out.regions.regions);
  const auto pairs = relate_errors(grid, out.partition, out.regions.regions);
  out.characterization = characterize_errors(pairs, out.regions.regions, ontology);
  out.verdicts = infer_region_verdicts(out.partition, out.regions.regions, pairs, ontology);
  out.channels = synthesize_channels(out.verdicts, out.regions, out.partition, ontology, dsm,
                                     config.channel_options);
  return out;
}

}  // namespace semref

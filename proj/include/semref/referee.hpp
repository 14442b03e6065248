#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semref/ontology.hpp"
#include "semref/raster.hpp"
#include "semref/rcc8.hpp"
#include "semref/regions.hpp"

namespace semref {

struct RelationKey {
  Rcc8 relation = Rcc8::dc;
  std::string concept_name;
  friend auto operator<=>(const RelationKey&, const RelationKey&) = default;
};

// Algorithm's W: (relation, neighbor concept) -> how often a misclassified
// region was seen in that relation, with the region ids behind each count.
struct RelationHistogram {
  std::map<RelationKey, int> counts;
  std::map<RelationKey, std::vector<int>> witnesses;

  void add(Rcc8 relation, const std::string& concept_name, int misclassified_id);
  int total() const;
  int count(Rcc8 relation, const std::string& concept_name) const;
  // Distinct misclassified regions behind a key.
  int distinct(Rcc8 relation, const std::string& concept_name) const;
};

// One (segment, misclassified p, classified r) visit.
struct SegmentPair {
  int segment = 0;
  int misclassified = 0;
  int classified = 0;
  Rcc8 relation = Rcc8::dc;
};

// Enumerates every co-segment (p, r) pair with p misclassified and r
// classified. Relations found in `known` are reused, the rest computed.
std::vector<SegmentPair> relate_errors(const SegmentGrid& grid, const RegionPartition& partition,
                                       std::span<const Region> regions,
                                       const RelationTable* known = nullptr);

struct ErrorCharacterization {
  RelationHistogram histogram;
  // Most frequent connecting pair; dc never dominates.
  std::optional<RelationKey> dominant;
  std::vector<std::string> concepts;  // query_exists(dominant)
};

// Picks the most frequent non-dc key; ties go to the smaller relation name,
// then the smaller concept name.
std::optional<RelationKey> dominant_pair(const RelationHistogram& histogram);

ErrorCharacterization characterize_histogram(RelationHistogram histogram,
                                             const Ontology& ontology);

ErrorCharacterization characterize_errors(std::span<const SegmentPair> pairs,
                                          std::span<const Region> regions,
                                          const Ontology& ontology);

ErrorCharacterization characterize_errors(const SegmentGrid& grid,
                                          const RegionPartition& partition,
                                          std::span<const Region> regions,
                                          const Ontology& ontology);

enum class VerdictKind { none, shadow, inconsistent };

std::string_view to_string(VerdictKind kind);

struct RegionVerdict {
  int region_id = 0;
  VerdictKind verdict = VerdictKind::none;
  std::string inferred_concept;  // set for shadow verdicts
  std::vector<Violation> violations;
};

// Per misclassified region: inconsistent when its neighborhood contradicts the
// ontology, shadow when it meets a non-flat neighbor, none otherwise.
std::vector<RegionVerdict> infer_region_verdicts(const RegionPartition& partition,
                                                 std::span<const Region> regions,
                                                 std::span<const SegmentPair> pairs,
                                                 const Ontology& ontology);

struct ElevationThresholds {
  double low = 1.0;   // mean below -> 0
  double high = 6.0;  // mean below -> 1, otherwise 2
};

struct ChannelOptions {
  ElevationThresholds thresholds;
  bool zero_all = false;
};

inline constexpr int kShadowChannel = 0;
inline constexpr int kElevationChannel = 1;
inline constexpr int kUncertaintyChannel = 2;

// shadow ∈ {-1,0,1}, elevation ∈ {-1,0,1,2}, uncertainty ∈ {0,1}.
struct FeedbackChannels {
  MultiChannelRaster raster;

  static FeedbackChannels zeros(int height, int width);
  float shadow(int r, int c) const { return raster.at(r, c, kShadowChannel); }
  float elevation(int r, int c) const { return raster.at(r, c, kElevationChannel); }
  float uncertainty(int r, int c) const { return raster.at(r, c, kUncertaintyChannel); }
};

// Throws if a channel holds a value outside its encoding.
void validate_feedback(const MultiChannelRaster& channels);

// Class-prior elevation code of a concept: non-flat 2, vegetation 1, else 0.
int prior_elevation(const Ontology& ontology, const std::string& concept_name);

FeedbackChannels synthesize_channels(std::span<const RegionVerdict> verdicts,
                                     const RegionSet& regions, const RegionPartition& partition,
                                     const Ontology& ontology,
                                     const MultiChannelRaster* dsm = nullptr,
                                     const ChannelOptions& options = {});

// Everything the referee concludes about one prediction.
struct RefereeOutcome {
  RegionSet regions;
  RegionPartition partition;
  ErrorCharacterization characterization;
  std::vector<RegionVerdict> verdicts;
  FeedbackChannels channels;
};

struct RefereeConfig {
  double threshold = 0.7;
  int tile_size = 64;
  Connectivity connectivity = Connectivity::four;
  ChannelOptions channel_options;
};

// With `fixed_regions`, those pixel sets are rescored instead of re-extracting
// regions from the argmax labels.
RefereeOutcome run_referee(const ProbabilityRaster& probs, const Ontology& ontology,
                           const RefereeConfig& config, const MultiChannelRaster* dsm = nullptr,
                           const RegionSet* fixed_regions = nullptr);

}  // namespace semref

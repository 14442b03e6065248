#pragma once

#include <array>
#include <bitset>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semref/regions.hpp"

namespace semref {

enum class Rcc8 : std::uint8_t { dc, ec, po, eq, tpp, ntpp, tppi, ntppi };

inline constexpr std::array<Rcc8, 8> kAllRcc8 = {Rcc8::dc,  Rcc8::ec,   Rcc8::po,   Rcc8::eq,
                                                 Rcc8::tpp, Rcc8::ntpp, Rcc8::tppi, Rcc8::ntppi};

std::string_view to_string(Rcc8 relation);
std::optional<Rcc8> parse_rcc8(std::string_view name);
Rcc8 inverse(Rcc8 relation);

// Relation between two regions of the same frame, decided on discrete masks:
// containment is tested against the hole-filled mask, contact uses
// 8-adjacency.
Rcc8 compute_rcc8(const Region& a, const Region& b);

using RelationSet = std::bitset<8>;

// Named relations over the eight base relations. Base relations subsume only
// themselves; a named relation subsumes every base relation below it.
class RelationHierarchy {
 public:
  // The eight base relations plus `intersects` over everything except dc.
  static RelationHierarchy standard();

  // Registers a relation. Base relation names are recognized automatically.
  void declare(const std::string& name);
  void add_parent(const std::string& name, const std::string& parent);

  bool contains(std::string_view name) const;
  // Reflexive-transitive closure over parent edges.
  bool subsumes(std::string_view super, std::string_view sub) const;
  // Base relations subsumed by `name`.
  RelationSet children(std::string_view name) const;
  std::vector<std::string> names() const;
  // Throws if a parent edge points at an undeclared relation or the graph
  // has a cycle.
  void validate() const;

 private:
  const std::vector<std::string>& parents_of(std::string_view name) const;

  std::map<std::string, std::vector<std::string>, std::less<>> parents_;
};

// True iff `sub` is among the base relations `super` subsumes. Throws on an
// unknown relation name.
bool relation_subsumes(const RelationHierarchy& hierarchy, std::string_view super, Rcc8 sub);

struct PairRelation {
  int a = 0;
  int b = 0;
  Rcc8 relation = Rcc8::dc;
  friend bool operator==(const PairRelation&, const PairRelation&) = default;
};

// Relations for every unordered pair (a < b) sharing at least one tile.
std::vector<PairRelation> relate_in_segments(const SegmentGrid& grid,
                                             std::span<const Region> regions);

// Relations for every unordered pair whose bounding boxes overlap or touch;
// any pair left out is dc.
std::vector<PairRelation> relate_touching(std::span<const Region> regions);

// Lookup over a relation list, answering in either order.
class RelationTable {
 public:
  RelationTable() = default;
  explicit RelationTable(std::span<const PairRelation> relations);

  std::optional<Rcc8> find(int a, int b) const;
  void insert(int a, int b, Rcc8 relation);
  std::size_t size() const { return table_.size(); }

 private:
  std::map<std::pair<int, int>, Rcc8> table_;
};

}  // namespace semref

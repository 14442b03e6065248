#include "semref/rcc8.hpp"

#include <algorithm>
#include <set>

#include "semref/error.hpp"

namespace semref {

namespace {

constexpr std::array<std::string_view, 8> kNames = {"dc",  "ec",   "po",   "eq",
                                                     "tpp", "ntpp", "tppi", "ntppi"};

bool subset_of_filled(const Region& inner, const Region& outer) {
  if (inner.area > 0 && !outer.bbox.intersects(inner.bbox)) return false;
  for (const Pixel& p : inner.pixels) {
    if (!outer.filled_contains(p.row, p.col)) return false;
  }
  return true;
}

// Some pixel of `inner` is 8-adjacent to a pixel outside `outer`'s filled mask.
bool touches_exterior(const Region& inner, const Region& outer) {
  for (const Pixel& p : inner.pixels) {
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        if (dr == 0 && dc == 0) continue;
        if (!outer.filled_contains(p.row + dr, p.col + dc)) return true;
      }
    }
  }
  return false;
}

bool shares_pixel(const Region& a, const Region& b) {
  if (!a.bbox.intersects(b.bbox)) return false;
  const Region& small = a.area <= b.area ? a : b;
  const Region& large = a.area <= b.area ? b : a;
  for (const Pixel& p : small.pixels) {
    if (large.contains(p.row, p.col)) return true;
  }
  return false;
}

bool adjacent(const Region& a, const Region& b) {
  if (!a.bbox.within_one(b.bbox)) return false;
  const Region& small = a.area <= b.area ? a : b;
  const Region& large = a.area <= b.area ? b : a;
  for (const Pixel& p : small.pixels) {
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        if (dr == 0 && dc == 0) continue;
        if (large.contains(p.row + dr, p.col + dc)) return true;
      }
    }
  }
  return false;
}

}  // namespace

std::string_view to_string(Rcc8 relation) { return kNames[static_cast<int>(relation)]; }

std::optional<Rcc8> parse_rcc8(std::string_view name) {
  for (int i = 0; i < 8; ++i) {
    if (kNames[i] == name) return static_cast<Rcc8>(i);
  }
  return std::nullopt;
}

Rcc8 inverse(Rcc8 relation) {
  switch (relation) {
    case Rcc8::tpp:
      return Rcc8::tppi;
    case Rcc8::ntpp:
      return Rcc8::ntppi;
    case Rcc8::tppi:
      return Rcc8::tpp;
    case Rcc8::ntppi:
      return Rcc8::ntpp;
    default:
      return relation;
  }
}

Rcc8 compute_rcc8(const Region& a, const Region& b) {
  if (a.frame_height != b.frame_height || a.frame_width != b.frame_width) {
    throw DimensionError("compute_rcc8: regions " + std::to_string(a.id) + " and " +
                         std::to_string(b.id) + " come from different frames");
  }
  if (!a.bbox.within_one(b.bbox)) return Rcc8::dc;
  if (a.area == b.area && a.bbox == b.bbox && a.pixels == b.pixels) return Rcc8::eq;
  if (subset_of_filled(a, b)) return touches_exterior(a, b) ? Rcc8::tpp : Rcc8::ntpp;
  if (subset_of_filled(b, a)) return touches_exterior(b, a) ? Rcc8::tppi : Rcc8::ntppi;
  if (!shares_pixel(a, b)) return adjacent(a, b) ? Rcc8::ec : Rcc8::dc;
  return Rcc8::po;
}

RelationHierarchy RelationHierarchy::standard() {
  RelationHierarchy h;
  h.declare("intersects");
  for (Rcc8 r : kAllRcc8) {
    h.declare(std::string(to_string(r)));
    if (r != Rcc8::dc) h.add_parent(std::string(to_string(r)), "intersects");
  }
  return h;
}

void RelationHierarchy::declare(const std::string& name) {
  parents_.try_emplace(name);
}

void RelationHierarchy::add_parent(const std::string& name, const std::string& parent) {
  auto& list = parents_[name];
  if (std::find(list.begin(), list.end(), parent) == list.end()) list.push_back(parent);
}

bool RelationHierarchy::contains(std::string_view name) const {
  return parents_.find(name) != parents_.end();
}

const std::vector<std::string>& RelationHierarchy::parents_of(std::string_view name) const {
  auto it = parents_.find(name);
  if (it == parents_.end()) throw OntologyError("unknown relation '" + std::string(name) + "'", 0);
  return it->second;
}

bool RelationHierarchy::subsumes(std::string_view super, std::string_view sub) const {
  parents_of(super);
  std::vector<std::string_view> stack{sub};
  std::set<std::string_view> seen;
  while (!stack.empty()) {
    const auto current = stack.back();
    stack.pop_back();
    if (current == super) return true;
    if (!seen.insert(current).second) continue;
    for (const auto& p : parents_of(current)) stack.push_back(p);
  }
  return false;
}

RelationSet RelationHierarchy::children(std::string_view name) const {
  RelationSet out;
  if (auto base = parse_rcc8(name)) {
    parents_of(name);
    out.set(static_cast<int>(*base));
    return out;
  }
  for (Rcc8 r : kAllRcc8) {
    const auto base_name = to_string(r);
    if (contains(base_name) && subsumes(name, base_name)) out.set(static_cast<int>(r));
  }
  return out;
}

std::vector<std::string> RelationHierarchy::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : parents_) out.push_back(name);
  return out;
}

void RelationHierarchy::validate() const {
  for (const auto& [name, parents] : parents_) {
    for (const auto& p : parents) {
      if (!contains(p)) {
        throw OntologyError("relation '" + name + "' has undeclared parent '" + p + "'", 0);
      }
    }
    if (parse_rcc8(name) && std::any_of(parents.begin(), parents.end(),
                                        [](const std::string& p) { return parse_rcc8(p).has_value(); })) {
      throw OntologyError("base relation '" + name + "' cannot specialize another base relation",
                          0);
    }
  }
  // A cycle makes some relation reachable from one of its own parents.
  for (const auto& [name, parents] : parents_) {
    for (const auto& p : parents) {
      if (subsumes(name, p)) throw OntologyError("cyclic relation hierarchy at '" + name + "'", 0);
    }
  }
}

bool relation_subsumes(const RelationHierarchy& hierarchy, std::string_view super, Rcc8 sub) {
  return hierarchy.children(super).test(static_cast<int>(sub));
}

std::vector<PairRelation> relate_in_segments(const SegmentGrid& grid,
                                             std::span<const Region> regions) {
  if (grid.region_tiles.size() != regions.size()) {
    throw Error("relate_in_segments: segment grid was not assigned these regions");
  }
  std::set<std::pair<int, int>> pairs;
  for (const auto& ids : grid.tile_regions) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t j = i + 1; j < ids.size(); ++j) pairs.emplace(ids[i], ids[j]);
    }
  }
  std::vector<PairRelation> out;
  out.reserve(pairs.size());
  for (const auto& [a, b] : pairs) out.push_back({a, b, compute_rcc8(regions[a], regions[b])});
  return out;
}

std::vector<PairRelation> relate_touching(std::span<const Region> regions) {
  std::vector<PairRelation> out;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    for (std::size_t j = i + 1; j < regions.size(); ++j) {
      if (!regions[i].bbox.within_one(regions[j].bbox)) continue;
      out.push_back({regions[i].id, regions[j].id, compute_rcc8(regions[i], regions[j])});
    }
  }
  return out;
}

RelationTable::RelationTable(std::span<const PairRelation> relations) {
  for (const auto& r : relations) insert(r.a, r.b, r.relation);
}

void RelationTable::insert(int a, int b, Rcc8 relation) {
  if (a > b) {
    std::swap(a, b);
    relation = inverse(relation);
  }
  table_[{a, b}] = relation;
}

std::optional<Rcc8> RelationTable::find(int a, int b) const {
  const bool swapped = a > b;
  auto it = table_.find(swapped ? std::pair{b, a} : std::pair{a, b});
  if (it == table_.end()) return std::nullopt;
  return swapped ? inverse(it->second) : it->second;
}

}  // namespace semref

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semref/raster.hpp"
#include "semref/rcc8.hpp"

namespace semref {

struct Concept {
  std::string name;
  std::vector<std::string> parents;
  int line = 0;
};

enum class RestrictionKind { some, only, no };

std::string_view to_string(RestrictionKind kind);

// subject ⊑ (∃ | ∀ | ¬∃) relation.(target₁ ⊔ target₂ ...)
struct Restriction {
  int id = 0;
  std::string subject;
  RestrictionKind kind = RestrictionKind::some;
  std::string relation;
  std::vector<std::string> targets;
  // `define` statements describe what a concept is and answer existential
  // queries; `constraint` statements are checked against observed regions.
  bool definitional = false;
  int line = 0;

  std::string text() const;
};

struct SizeRule {
  std::string concept_name;
  std::optional<double> min_area;
  std::optional<double> max_area;
  int line = 0;
};

class Ontology {
 public:
  const std::vector<Concept>& concepts() const { return concepts_; }
  const std::vector<Restriction>& restrictions() const { return restrictions_; }
  const std::vector<SizeRule>& size_rules() const { return size_rules_; }
  const RelationHierarchy& relations() const { return relations_; }
  const std::map<ClassId, std::string>& bindings() const { return bindings_; }

  bool has_concept(std::string_view name) const;
  const Concept& concept_named(std::string_view name) const;
  // Reflexive: true iff `ancestor` is reachable from `descendant` via parents.
  bool subsumes(std::string_view ancestor, std::string_view descendant) const;
  bool subsumes_any(std::span<const std::string> ancestors, std::string_view descendant) const;
  // Breadth-first superclass chain, nearest first, excluding the concept.
  std::vector<std::string> ancestors(std::string_view name) const;
  // Longest parent path to a root.
  int depth(std::string_view name) const;

  const std::string& concept_for(ClassId id) const;
  bool has_binding(ClassId id) const { return bindings_.count(id) != 0; }

 private:
  friend Ontology parse_ontology(std::string_view text);

  const Concept& require(std::string_view name) const;

  std::vector<Concept> concepts_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::vector<Restriction> restrictions_;
  std::vector<SizeRule> size_rules_;
  RelationHierarchy relations_;
  std::map<ClassId, std::string> bindings_;
};

// Line-oriented DSL:
//   relation <name> [< parent...]
//   concept <Name> [< Parent...]
//   define <Name> some <rel> <Concept[|Concept...]>
//   constraint <Name> (some|only|no) <rel> <Concept[|Concept...]>
//   size <Name> [min <px>] [max <px>]
//   bind <class-id> <Concept>
// `#` starts a comment. Errors carry the offending line number.
Ontology parse_ontology(std::string_view text);
Ontology load_ontology(const std::filesystem::path& path);

// Concepts defined as being in at least one `relation` relation with
// `target`, generalizing both through their hierarchies. Direct answers come
// first (most specific first), followed by their superclass chains.
std::vector<std::string> query_exists(const Ontology& ontology, std::string_view relation,
                                      std::string_view target);

struct Neighbor {
  Rcc8 relation = Rcc8::dc;  // region -> neighbor
  std::string concept_name;
  int region_id = -1;
};

struct Witness {
  Rcc8 relation;
  int neighbor_id;
  std::string neighbor_concept;
};

struct Violation {
  int region_id = -1;
  int restriction_id = -1;  // -1 for size rules
  std::string rule;         // human-readable restriction or size rule
  std::optional<Witness> witness;
};

struct RegionFacts {
  std::string concept_name;
  int area = 0;
  // Existential restrictions are only enforced for regions whose bbox is
  // strictly inside the raster; their required neighbors may lie outside.
  bool interior = false;
  int region_id = -1;
};

// Checks a region against its own restrictions and size rules, and against
// its neighbors' negative and universal restrictions seen from their side.
// At most one violation is emitted per restriction.
std::vector<Violation> check_region_consistency(const Ontology& ontology, const RegionFacts& region,
                                                std::span<const Neighbor> neighbors);

}  // namespace semref

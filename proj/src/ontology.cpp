#include "semref/ontology.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "semref/error.hpp"

namespace semref {

namespace {

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string token;
  while (in >> token) out.push_back(token);
  return out;
}

std::vector<std::string> split_union(const std::string& token, int line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto bar = token.find('|', start);
    auto part = token.substr(start, bar == std::string::npos ? std::string::npos : bar - start);
    if (part.empty()) throw OntologyError("empty concept in union '" + token + "'", line);
    out.push_back(std::move(part));
    if (bar == std::string::npos) break;
    start = bar + 1;
  }
  return out;
}

double parse_number(const std::string& token, int line) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(token, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != token.size() || value < 0.0) {
    throw OntologyError("expected a non-negative number, got '" + token + "'", line);
  }
  return value;
}

std::string join_union(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += '|';
    out += parts[i];
  }
  return out;
}

}  // namespace

std::string_view to_string(RestrictionKind kind) {
  switch (kind) {
    case RestrictionKind::some:
      return "some";
    case RestrictionKind::only:
      return "only";
    case RestrictionKind::no:
      return "no";
  }
  return "?";
}

std::string Restriction::text() const {
  return std::string(definitional ? "define " : "constraint ") + subject + " " +
         std::string(to_string(kind)) + " " + relation + " " + join_union(targets);
}

bool Ontology::has_concept(std::string_view name) const { return index_.find(name) != index_.end(); }

const Concept& Ontology::require(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw OntologyError("unknown concept '" + std::string(name) + "'", 0);
  return concepts_[it->second];
}

const Concept& Ontology::concept_named(std::string_view name) const { return require(name); }

bool Ontology::subsumes(std::string_view ancestor, std::string_view descendant) const {
  require(ancestor);
  std::vector<std::string_view> stack{require(descendant).name};
  std::set<std::string_view> seen;
  while (!stack.empty()) {
    const auto current = stack.back();
    stack.pop_back();
    if (current == ancestor) return true;
    if (!seen.insert(current).second) continue;
    for (const auto& p : require(current).parents) stack.push_back(p);
  }
  return false;
}

bool Ontology::subsumes_any(std::span<const std::string> ancestors,
                            std::string_view descendant) const {
  return std::any_of(ancestors.begin(), ancestors.end(),
                     [&](const std::string& a) { return subsumes(a, descendant); });
}

std::vector<std::string> Ontology::ancestors(std::string_view name) const {
  std::vector<std::string> out;
  std::set<std::string, std::less<>> seen{std::string(name)};
  std::vector<std::string> frontier{std::string(name)};
  while (!frontier.empty()) {
    std::vector<std::string> next;
    for (const auto& current : frontier) {
      for (const auto& p : require(current).parents) {
        if (seen.insert(p).second) {
          out.push_back(p);
          next.push_back(p);
        }
      }
    }
    frontier = std::move(next);
  }
  return out;
}

int Ontology::depth(std::string_view name) const {
  int best = 0;
  for (const auto& p : require(name).parents) best = std::max(best, 1 + depth(p));
  return best;
}

const std::string& Ontology::concept_for(ClassId id) const {
  auto it = bindings_.find(id);
  if (it == bindings_.end()) {
    throw OntologyError("class id " + std::to_string(id) + " is not bound to a concept", 0);
  }
  return it->second;
}

Ontology parse_ontology(std::string_view text) {
  Ontology onto;
  std::map<std::string, int, std::less<>> relation_lines;
  struct PendingParent {
    std::string child;
    std::string parent;
    int line;
  };
  std::vector<PendingParent> relation_parents;
  std::map<ClassId, int> bind_lines;

  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const auto tok = split_ws(raw);
    if (tok.empty()) continue;
    const std::string& keyword = tok[0];

    if (keyword == "relation") {
      if (tok.size() < 2 || (tok.size() > 2 && (tok[2] != "<" || tok.size() < 4))) {
        throw OntologyError("expected 'relation <name> [< parent...]'", line_no);
      }
      if (relation_lines.count(tok[1])) {
        throw OntologyError("duplicate relation '" + tok[1] + "'", line_no);
      }
      relation_lines[tok[1]] = line_no;
      onto.relations_.declare(tok[1]);
      for (std::size_t i = 3; i < tok.size(); ++i) relation_parents.push_back({tok[1], tok[i], line_no});
    } else if (keyword == "concept") {
      if (tok.size() < 2 || (tok.size() > 2 && (tok[2] != "<" || tok.size() < 4))) {
        throw OntologyError("expected 'concept <Name> [< Parent...]'", line_no);
      }
      if (onto.index_.count(tok[1])) throw OntologyError("duplicate concept '" + tok[1] + "'", line_no);
      Concept c{tok[1], {}, line_no};
      for (std::size_t i = 3; i < tok.size(); ++i) c.parents.push_back(tok[i]);
      onto.index_[c.name] = onto.concepts_.size();
      onto.concepts_.push_back(std::move(c));
    } else if (keyword == "define" || keyword == "constraint") {
      const bool definitional = keyword == "define";
      if (tok.size() != 5) {
        throw OntologyError("expected '" + keyword + " <Name> " +
                                (definitional ? "some" : "(some|only|no)") +
                                " <relation> <Concept[|Concept...]>'",
                            line_no);
      }
      Restriction r;
      r.id = static_cast<int>(onto.restrictions_.size());
      r.subject = tok[1];
      if (tok[2] == "some") {
        r.kind = RestrictionKind::some;
      } else if (tok[2] == "only" && !definitional) {
        r.kind = RestrictionKind::only;
      } else if (tok[2] == "no" && !definitional) {
        r.kind = RestrictionKind::no;
      } else {
        throw OntologyError("unsupported quantifier '" + tok[2] + "' in " + keyword, line_no);
      }
      r.relation = tok[3];
      r.targets = split_union(tok[4], line_no);
      r.definitional = definitional;
      r.line = line_no;
      onto.restrictions_.push_back(std::move(r));
    } else if (keyword == "size") {
      if (tok.size() < 4 || tok.size() % 2 != 0) {
        throw OntologyError("expected 'size <Name> [min <px>] [max <px>]'", line_no);
      }
      SizeRule rule{tok[1], std::nullopt, std::nullopt, line_no};
      for (std::size_t i = 2; i < tok.size(); i += 2) {
        const double value = parse_number(tok[i + 1], line_no);
        if (tok[i] == "min" && !rule.min_area) {
          rule.min_area = value;
        } else if (tok[i] == "max" && !rule.max_area) {
          rule.max_area = value;
        } else {
          throw OntologyError("unexpected '" + tok[i] + "' in size rule", line_no);
        }
      }
      if (rule.min_area && rule.max_area && *rule.min_area > *rule.max_area) {
        throw OntologyError("size rule for '" + rule.concept_name + "' has min > max", line_no);
      }
      onto.size_rules_.push_back(std::move(rule));
    } else if (keyword == "bind") {
      if (tok.size() != 3) throw OntologyError("expected 'bind <class-id> <Concept>'", line_no);
      const double id = parse_number(tok[1], line_no);
      if (id != static_cast<int>(id) || id > 255) {
        throw OntologyError("class id must be an integer in 0..255", line_no);
      }
      const auto cls = static_cast<ClassId>(id);
      if (onto.bindings_.count(cls)) {
        throw OntologyError("class id " + tok[1] + " bound twice", line_no);
      }
      onto.bindings_[cls] = tok[2];
      bind_lines[cls] = line_no;
    } else {
      throw OntologyError("unknown statement '" + keyword + "'", line_no);
    }
  }

  // Reference checks, reported at the referencing line.
  for (const auto& p : relation_parents) {
    if (!onto.relations_.contains(p.parent)) {
      throw OntologyError("undeclared relation '" + p.parent + "'", p.line);
    }
    onto.relations_.add_parent(p.child, p.parent);
  }
  try {
    onto.relations_.validate();
  } catch (const OntologyError& e) {
    throw OntologyError(e.what(), 0);
  }
  for (const auto& c : onto.concepts_) {
    for (const auto& p : c.parents) {
      if (!onto.has_concept(p)) throw OntologyError("unknown parent '" + p + "' of '" + c.name + "'", c.line);
    }
  }
  // Cycle check by iterative DFS with colors.
  {
    std::vector<int> color(onto.concepts_.size(), 0);
    for (std::size_t start = 0; start < onto.concepts_.size(); ++start) {
      if (color[start]) continue;
      std::vector<std::pair<std::size_t, std::size_t>> stack{{start, 0}};
      color[start] = 1;
      while (!stack.empty()) {
        auto& [node, next] = stack.back();
        const auto& parents = onto.concepts_[node].parents;
        if (next == parents.size()) {
          color[node] = 2;
          stack.pop_back();
          continue;
        }
        const std::size_t parent = onto.index_.find(parents[next++])->second;
        if (color[parent] == 1) {
          throw OntologyError("cyclic taxonomy through '" + onto.concepts_[parent].name + "'",
                              onto.concepts_[node].line);
        }
        if (color[parent] == 0) {
          color[parent] = 1;
          stack.push_back({parent, 0});
        }
      }
    }
  }
  for (const auto& r : onto.restrictions_) {
    if (!onto.has_concept(r.subject)) throw OntologyError("unknown concept '" + r.subject + "'", r.line);
    if (!onto.relations_.contains(r.relation)) {
      throw OntologyError("undeclared relation '" + r.relation + "'", r.line);
    }
    for (const auto& t : r.targets) {
      if (!onto.has_concept(t)) throw OntologyError("unknown concept '" + t + "'", r.line);
    }
  }
  for (const auto& s : onto.size_rules_) {
    if (!onto.has_concept(s.concept_name)) {
      throw OntologyError("unknown concept '" + s.concept_name + "'", s.line);
    }
  }
  for (const auto& [cls, name] : onto.bindings_) {
    if (!onto.has_concept(name)) {
      throw OntologyError("unknown concept '" + name + "'", bind_lines[cls]);
    }
  }
  return onto;
}

Ontology load_ontology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open ontology " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_ontology(text.str());
  } catch (const OntologyError& e) {
    throw OntologyError(path.string() + ": " + e.what(), e.line());
  }
}

std::vector<std::string> query_exists(const Ontology& ontology, std::string_view relation,
                                      std::string_view target) {
  const RelationSet wanted = ontology.relations().children(relation);
  ontology.concept_named(target);

  std::vector<std::string> direct;
  for (const auto& r : ontology.restrictions()) {
    if (!r.definitional || r.kind != RestrictionKind::some) continue;
    // A base query relation must sit below the restriction's relation; a
    // wider query relation matches any restriction it overlaps.
    if ((ontology.relations().children(r.relation) & wanted).none()) continue;
    if (!std::any_of(r.targets.begin(), r.targets.end(),
                     [&](const std::string& t) { return ontology.subsumes(t, target); })) {
      continue;
    }
    if (std::find(direct.begin(), direct.end(), r.subject) == direct.end()) {
      direct.push_back(r.subject);
    }
  }
  std::sort(direct.begin(), direct.end(), [&](const std::string& a, const std::string& b) {
    const int da = ontology.depth(a);
    const int db = ontology.depth(b);
    return da != db ? da > db : a < b;
  });

  std::vector<std::string> out = direct;
  for (const auto& d : direct) {
    for (auto& a : ontology.ancestors(d)) {
      if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(std::move(a));
    }
  }
  return out;
}

std::vector<Violation> check_region_consistency(const Ontology& ontology, const RegionFacts& region,
                                                std::span<const Neighbor> neighbors) {
  ontology.concept_named(region.concept_name);
  for (const auto& n : neighbors) ontology.concept_named(n.concept_name);
  const auto& relations = ontology.relations();

  std::vector<Violation> out;
  std::set<int> reported;
  auto emit = [&](const Restriction& r, std::optional<Witness> witness) {
    if (!reported.insert(r.id).second) return;
    out.push_back({region.region_id, r.id, r.text(), std::move(witness)});
  };
  auto witness_of = [](const Neighbor& n) {
    return std::optional<Witness>(Witness{n.relation, n.region_id, n.concept_name});
  };

  for (const auto& r : ontology.restrictions()) {
    if (r.definitional) continue;
    if (ontology.subsumes(r.subject, region.concept_name)) {
      switch (r.kind) {
        case RestrictionKind::no:
          for (const auto& n : neighbors) {
            if (relation_subsumes(relations, r.relation, n.relation) &&
                ontology.subsumes_any(r.targets, n.concept_name)) {
              emit(r, witness_of(n));
              break;
            }
          }
          break;
        case RestrictionKind::only:
          for (const auto& n : neighbors) {
            if (relation_subsumes(relations, r.relation, n.relation) &&
                !ontology.subsumes_any(r.targets, n.concept_name)) {
              emit(r, witness_of(n));
              break;
            }
          }
          break;
        case RestrictionKind::some:
          if (region.interior &&
              std::none_of(neighbors.begin(), neighbors.end(), [&](const Neighbor& n) {
                return relation_subsumes(relations, r.relation, n.relation) &&
                       ontology.subsumes_any(r.targets, n.concept_name);
              })) {
            emit(r, std::nullopt);
          }
          break;
      }
    }
    if (r.kind == RestrictionKind::some) continue;
    // The same restriction seen from a neighbor that falls under its subject.
    for (const auto& n : neighbors) {
      if (!ontology.subsumes(r.subject, n.concept_name)) continue;
      if (!relation_subsumes(relations, r.relation, inverse(n.relation))) continue;
      const bool in_targets = ontology.subsumes_any(r.targets, region.concept_name);
      if ((r.kind == RestrictionKind::no && in_targets) ||
          (r.kind == RestrictionKind::only && !in_targets)) {
        emit(r, witness_of(n));
        break;
      }
    }
  }

  for (const auto& rule : ontology.size_rules()) {
    if (!ontology.subsumes(rule.concept_name, region.concept_name)) continue;
    const double area = region.area;
    if ((rule.min_area && area < *rule.min_area) || (rule.max_area && area > *rule.max_area)) {
      std::ostringstream text;
      text << "size " << rule.concept_name;
      if (rule.min_area) text << " min " << *rule.min_area;
      if (rule.max_area) text << " max " << *rule.max_area;
      text << " (area " << region.area << ")";
      out.push_back({region.region_id, -1, text.str(), std::nullopt});
    }
  }
  return out;
}

}  // namespace semref

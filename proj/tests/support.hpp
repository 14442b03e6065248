#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls the library's relation or histogram code; the
// oracles work on full-frame boolean masks with plain loops.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "semref/classifier.hpp"
#include "semref/ontology.hpp"
#include "semref/rcc8.hpp"
#include "semref/referee.hpp"
#include "semref/regions.hpp"
#include "semref/rng.hpp"
#include "semref/synth.hpp"

namespace testing {

using semref::Rcc8;

struct Mask {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> on;

  Mask(int height, int width) : h(height), w(width), on(static_cast<std::size_t>(height) * width, 0) {}
  bool at(int r, int c) const { return r >= 0 && c >= 0 && r < h && c < w && on[r * w + c] != 0; }
  void set(int r, int c) { on[r * w + c] = 1; }
  bool empty() const { return std::none_of(on.begin(), on.end(), [](auto v) { return v != 0; }); }
};

inline Mask mask_of(const semref::Region& region) {
  Mask m(region.frame_height, region.frame_width);
  for (const auto& p : region.pixels) m.set(p.row, p.col);
  return m;
}

// Complement of the background reachable from outside the frame. Background
// moves with the dual of the foreground connectivity.
inline Mask fill_holes(const Mask& m, semref::Connectivity fg = semref::Connectivity::four) {
  const int H = m.h + 2, W = m.w + 2;
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(H) * W, 0);
  auto fgp = [&](int r, int c) { return m.at(r - 1, c - 1); };
  std::vector<std::pair<int, int>> stack{{0, 0}};
  seen[0] = 1;
  const bool diag = fg == semref::Connectivity::four;
  while (!stack.empty()) {
    auto [r, c] = stack.back();
    stack.pop_back();
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        if ((dr == 0 && dc == 0) || (!diag && dr != 0 && dc != 0)) continue;
        const int nr = r + dr, nc = c + dc;
        if (nr < 0 || nc < 0 || nr >= H || nc >= W) continue;
        auto& s = seen[nr * W + nc];
        if (s || fgp(nr, nc)) continue;
        s = 1;
        stack.push_back({nr, nc});
      }
    }
  }
  Mask out(m.h, m.w);
  for (int r = 0; r < m.h; ++r) {
    for (int c = 0; c < m.w; ++c) {
      if (!seen[(r + 1) * W + (c + 1)]) out.set(r, c);
    }
  }
  return out;
}

// Set predicates evaluated over every pixel, no pruning.
inline Rcc8 naive_rcc8(const Mask& a, const Mask& b) {
  const Mask fa = fill_holes(a), fb = fill_holes(b);
  bool equal = true, a_in_fb = true, b_in_fa = true, overlap = false, touch = false;
  bool a_edge = false, b_edge = false;  // a pixel next to the other's filled exterior
  for (int r = 0; r < a.h; ++r) {
    for (int c = 0; c < a.w; ++c) {
      const bool ia = a.at(r, c), ib = b.at(r, c);
      if (ia != ib) equal = false;
      if (ia && !fb.at(r, c)) a_in_fb = false;
      if (ib && !fa.at(r, c)) b_in_fa = false;
      if (ia && ib) overlap = true;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          if (ia && b.at(r + dr, c + dc)) touch = true;
          if (ia && !fb.at(r + dr, c + dc)) a_edge = true;
          if (ib && !fa.at(r + dr, c + dc)) b_edge = true;
        }
      }
    }
  }
  if (equal) return Rcc8::eq;
  if (a_in_fb) return a_edge ? Rcc8::tpp : Rcc8::ntpp;
  if (b_in_fa) return b_edge ? Rcc8::tppi : Rcc8::ntppi;
  if (overlap) return Rcc8::po;
  return touch ? Rcc8::ec : Rcc8::dc;
}

// Random blobby label raster: a few seeded rectangles and discs painted over
// a background, so components have holes, corners and diagonal contacts.
inline semref::LabelRaster random_labels(semref::Rng& rng, int h, int w, int classes) {
  semref::LabelRaster labels(h, w, classes, 0);
  const int shapes = rng.uniform_int(2, 8);
  for (int s = 0; s < shapes; ++s) {
    const auto cls = static_cast<semref::ClassId>(rng.uniform_int(0, classes - 1));
    const int r0 = rng.uniform_int(0, h - 1), c0 = rng.uniform_int(0, w - 1);
    const int rh = rng.uniform_int(1, std::max(1, h / 2)), cw = rng.uniform_int(1, std::max(1, w / 2));
    const bool disc = rng.uniform() < 0.4;
    for (int r = r0; r < std::min(h, r0 + rh); ++r) {
      for (int c = c0; c < std::min(w, c0 + cw); ++c) {
        if (disc) {
          const double y = (r - r0 - rh / 2.0) / (rh / 2.0 + 0.5);
          const double x = (c - c0 - cw / 2.0) / (cw / 2.0 + 0.5);
          if (x * x + y * y > 1.0) continue;
        }
        labels.set(r, c, cls);
      }
    }
  }
  // Salt so single pixels and diagonal-only contacts show up.
  const int salt = rng.uniform_int(0, h * w / 40 + 1);
  for (int i = 0; i < salt; ++i) {
    labels.set(rng.uniform_int(0, h - 1), rng.uniform_int(0, w - 1),
               static_cast<semref::ClassId>(rng.uniform_int(0, classes - 1)));
  }
  return labels;
}

struct PairCount {
  std::map<semref::RelationKey, int> counts;
  int total = 0;
};

// Every (tile, misclassified p, classified r) triple whose boxes both meet
// the tile, related by the naive oracle.
inline PairCount brute_force_histogram(const std::vector<semref::Region>& regions,
                                       const std::vector<std::uint8_t>& misclassified, int height,
                                       int width, int tile, const semref::Ontology& ontology) {
  PairCount out;
  std::vector<Mask> masks;
  for (const auto& r : regions) masks.push_back(mask_of(r));
  std::map<std::pair<int, int>, Rcc8> memo;
  for (int tr = 0; tr < height; tr += tile) {
    for (int tc = 0; tc < width; tc += tile) {
      const int tr1 = std::min(height, tr + tile) - 1, tc1 = std::min(width, tc + tile) - 1;
      auto meets = [&](const semref::Region& g) {
        int r0 = height, c0 = width, r1 = -1, c1 = -1;
        for (const auto& p : g.pixels) {
          r0 = std::min(r0, p.row);
          c0 = std::min(c0, p.col);
          r1 = std::max(r1, p.row);
          c1 = std::max(c1, p.col);
        }
        return r0 <= tr1 && tr <= r1 && c0 <= tc1 && tc <= c1;
      };
      for (std::size_t p = 0; p < regions.size(); ++p) {
        if (!misclassified[p] || !meets(regions[p])) continue;
        for (std::size_t r = 0; r < regions.size(); ++r) {
          if (misclassified[r] || !meets(regions[r])) continue;
          auto key = std::make_pair(static_cast<int>(p), static_cast<int>(r));
          auto it = memo.find(key);
          if (it == memo.end()) it = memo.emplace(key, naive_rcc8(masks[p], masks[r])).first;
          ++out.counts[{it->second, ontology.concept_for(regions[r].predicted)}];
          ++out.total;
        }
      }
    }
  }
  return out;
}

// Ground-truth regions of a scene checked against the ontology, each region
// seeing all of its non-dc neighbors.
inline std::vector<semref::Violation> scene_violations(const semref::SceneBundle& scene,
                                                        const semref::Ontology& ontology) {
  auto set = semref::extract_regions(scene.labels);
  for (auto& r : set.regions) r.predicted = r.label;
  const auto rel = semref::relate_touching(set.regions);
  std::vector<std::vector<semref::Neighbor>> neighbors(set.regions.size());
  for (const auto& pr : rel) {
    if (pr.relation == Rcc8::dc) continue;
    neighbors[pr.a].push_back({pr.relation, ontology.concept_for(set.regions[pr.b].label), pr.b});
    neighbors[pr.b].push_back(
        {semref::inverse(pr.relation), ontology.concept_for(set.regions[pr.a].label), pr.a});
  }
  std::vector<semref::Violation> out;
  for (const auto& r : set.regions) {
    const semref::RegionFacts facts{ontology.concept_for(r.label), r.area, r.interior(), r.id};
    auto v = semref::check_region_consistency(ontology, facts, neighbors[r.id]);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

// 3 inputs, 2 classes, 2 and 3 filters: 299 parameters.
inline semref::Architecture tiny_arch() { return {3, 2, 2, 3}; }

// Zero biases put many pre-activations exactly on the ReLU kink, where a
// central difference straddles two slopes; a small seeded jitter moves them off.
inline semref::ClassifierModel jittered(const semref::Architecture& arch, std::uint64_t seed) {
  auto model = semref::ClassifierModel::initialize(arch, seed);
  semref::Rng rng(seed + 100);
  for (auto& p : model.parameters) p += rng.uniform(-0.05, 0.05);
  return model;
}

inline semref::GradientSample random_patch(int size, int channels, int classes, std::uint64_t seed) {
  semref::Rng rng(seed);
  semref::GradientSample s{semref::MultiChannelRaster(size, size, channels), std::vector<int>(size * size)};
  for (auto& v : s.input.data()) v = static_cast<float>(rng.uniform());
  for (auto& l : s.labels) l = rng.uniform_int(0, classes - 1);
  s.labels[3] = -1;  // ignored pixel
  return s;
}

inline std::filesystem::path source_dir() { return SEMREF_SOURCE_DIR; }
inline std::filesystem::path shipped_ontology() {
  return source_dir() / "ontologies" / "ontocity_subset.onto";
}

}  // namespace testing

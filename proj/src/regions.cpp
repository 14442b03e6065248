#include "semref/regions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>

#include "semref/error.hpp"

namespace semref {

namespace {

// Clockwise on screen (rows grow downward), starting west.
constexpr std::array<std::array<int, 2>, 8> kRing = {{
    {0, -1}, {-1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1},
}};

constexpr std::array<std::array<int, 2>, 4> kFour = {{{-1, 0}, {0, -1}, {0, 1}, {1, 0}}};

int ring_index(int dr, int dc) {
  for (int i = 0; i < 8; ++i) {
    if (kRing[i][0] == dr && kRing[i][1] == dc) return i;
  }
  return -1;
}

// Marks everything reachable from the padding ring through non-member cells.
// `padded` holds membership on a (h+2)x(w+2) grid.
std::vector<std::uint8_t> flood_exterior(const std::vector<std::uint8_t>& padded, int h, int w,
                                         bool eight) {
  std::vector<std::uint8_t> exterior(padded.size(), 0);
  std::vector<int> stack{0};
  exterior[0] = 1;
  while (!stack.empty()) {
    const int at = stack.back();
    stack.pop_back();
    const int r = at / w;
    const int c = at % w;
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        if ((dr == 0 && dc == 0) || (!eight && dr != 0 && dc != 0)) continue;
        const int nr = r + dr;
        const int nc = c + dc;
        if (nr < 0 || nc < 0 || nr >= h || nc >= w) continue;
        const int n = nr * w + nc;
        if (exterior[n] || padded[n]) continue;
        exterior[n] = 1;
        stack.push_back(n);
      }
    }
  }
  return exterior;
}

std::vector<Pixel> trace_outer_boundary(const Region& region) {
  const Pixel start = region.pixels.front();
  std::vector<Pixel> chain{start};
  auto inside = [&](int r, int c) { return region.contains(r, c); };

  Pixel current = start;
  int backtrack = 0;  // west of the first pixel is always outside
  bool have_first_move = false;
  Pixel first_move{};
  const std::size_t guard = 4 * region.pixels.size() + 16;
  for (std::size_t step = 0; step < guard; ++step) {
    int found = -1;
    for (int i = 1; i <= 8; ++i) {
      const int d = (backtrack + i) % 8;
      if (inside(current.row + kRing[d][0], current.col + kRing[d][1])) {
        found = d;
        break;
      }
    }
    if (found < 0) break;  // isolated pixel
    const Pixel next{current.row + kRing[found][0], current.col + kRing[found][1]};
    if (current == start && have_first_move && next == first_move) break;
    if (!have_first_move) {
      have_first_move = true;
      first_move = next;
    }
    const int prev = (found + 7) % 8;
    const Pixel before{current.row + kRing[prev][0], current.col + kRing[prev][1]};
    backtrack = ring_index(before.row - next.row, before.col - next.col);
    current = next;
    if (current != start) chain.push_back(current);
  }
  return chain;
}

Region build_region(int id, ClassId label, std::vector<Pixel> pixels, int frame_height,
                    int frame_width, Connectivity connectivity) {
  if (pixels.empty()) throw Error("region " + std::to_string(id) + " has no pixels");
  std::sort(pixels.begin(), pixels.end());
  pixels.erase(std::unique(pixels.begin(), pixels.end()), pixels.end());

  Region region;
  region.id = id;
  region.label = label;
  region.predicted = label;
  region.frame_height = frame_height;
  region.frame_width = frame_width;
  BBox box{pixels.front().row, pixels.front().col, pixels.front().row, pixels.front().col};
  for (const Pixel& p : pixels) {
    if (p.row < 0 || p.col < 0 || p.row >= frame_height || p.col >= frame_width) {
      throw DimensionError("region pixel outside its frame");
    }
    box.r0 = std::min(box.r0, p.row);
    box.r1 = std::max(box.r1, p.row);
    box.c0 = std::min(box.c0, p.col);
    box.c1 = std::max(box.c1, p.col);
  }
  region.bbox = box;
  region.area = static_cast<int>(pixels.size());
  const int bh = box.height();
  const int bw = box.width();
  region.mask.assign(static_cast<std::size_t>(bh) * bw, 0);
  const int ph = bh + 2;
  const int pw = bw + 2;
  std::vector<std::uint8_t> padded(static_cast<std::size_t>(ph) * pw, 0);
  for (const Pixel& p : pixels) {
    const int lr = p.row - box.r0;
    const int lc = p.col - box.c0;
    region.mask[static_cast<std::size_t>(lr) * bw + lc] = 1;
    padded[static_cast<std::size_t>(lr + 1) * pw + lc + 1] = 1;
  }
  // Holes of a 4-connected set are 8-connected background and vice versa.
  const auto exterior = flood_exterior(padded, ph, pw, connectivity == Connectivity::four);
  region.filled.assign(region.mask.size(), 0);
  for (int r = 0; r < bh; ++r) {
    for (int c = 0; c < bw; ++c) {
      region.filled[static_cast<std::size_t>(r) * bw + c] =
          exterior[static_cast<std::size_t>(r + 1) * pw + c + 1] ? 0 : 1;
    }
  }
  region.pixels = std::move(pixels);
  region.outer_boundary = trace_outer_boundary(region);
  return region;
}

}  // namespace

std::vector<Pixel> Region::filled_pixels() const {
  std::vector<Pixel> out;
  for (int r = bbox.r0; r <= bbox.r1; ++r) {
    for (int c = bbox.c0; c <= bbox.c1; ++c) {
      if (filled_contains(r, c)) out.push_back({r, c});
    }
  }
  return out;
}

Region make_region(int id, ClassId label, std::vector<Pixel> pixels, int frame_height,
                   int frame_width, Connectivity connectivity) {
  return build_region(id, label, std::move(pixels), frame_height, frame_width, connectivity);
}

RegionSet extract_regions(const LabelRaster& labels, Connectivity connectivity) {
  const int h = labels.height();
  const int w = labels.width();
  RegionSet set;
  set.height = h;
  set.width = w;
  set.owner.assign(labels.size(), -1);
  const bool eight = connectivity == Connectivity::eight;

  std::deque<Pixel> queue;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (set.owner[static_cast<std::size_t>(r) * w + c] >= 0) continue;
      const int id = static_cast<int>(set.regions.size());
      const ClassId label = labels.at(r, c);
      std::vector<Pixel> pixels;
      set.owner[static_cast<std::size_t>(r) * w + c] = id;
      queue.push_back({r, c});
      while (!queue.empty()) {
        const Pixel p = queue.front();
        queue.pop_front();
        pixels.push_back(p);
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            if ((dr == 0 && dc == 0) || (!eight && dr != 0 && dc != 0)) continue;
            const int nr = p.row + dr;
            const int nc = p.col + dc;
            if (!labels.in_bounds(nr, nc)) continue;
            auto& owner = set.owner[static_cast<std::size_t>(nr) * w + nc];
            if (owner >= 0 || labels.at(nr, nc) != label) continue;
            owner = id;
            queue.push_back({nr, nc});
          }
        }
      }
      set.regions.push_back(build_region(id, label, std::move(pixels), h, w, connectivity));
    }
  }
  return set;
}

SegmentGrid grid_segments(int height, int width, int tile_size) {
  if (tile_size < 1) throw Error("tile size must be >= 1");
  if (height <= 0 || width <= 0) throw DimensionError("grid dimensions must be positive");
  SegmentGrid grid;
  grid.height = height;
  grid.width = width;
  grid.tile_size = tile_size;
  grid.tile_rows = (height + tile_size - 1) / tile_size;
  grid.tile_cols = (width + tile_size - 1) / tile_size;
  for (int tr = 0; tr < grid.tile_rows; ++tr) {
    for (int tc = 0; tc < grid.tile_cols; ++tc) {
      const int r0 = tr * tile_size;
      const int c0 = tc * tile_size;
      grid.tiles.push_back(
          {r0, c0, std::min(r0 + tile_size, height) - 1, std::min(c0 + tile_size, width) - 1});
    }
  }
  grid.tile_regions.assign(grid.tiles.size(), {});
  return grid;
}

void SegmentGrid::assign(std::span<const Region> regions) {
  tile_regions.assign(tiles.size(), {});
  region_tiles.assign(regions.size(), {});
  for (const Region& region : regions) {
    if (region.frame_height != height || region.frame_width != width) {
      throw DimensionError("region frame does not match the segment grid");
    }
    const int tr0 = region.bbox.r0 / tile_size;
    const int tr1 = region.bbox.r1 / tile_size;
    const int tc0 = region.bbox.c0 / tile_size;
    const int tc1 = region.bbox.c1 / tile_size;
    for (int tr = tr0; tr <= tr1; ++tr) {
      for (int tc = tc0; tc <= tc1; ++tc) {
        const int tile = tr * tile_cols + tc;
        tile_regions[tile].push_back(region.id);
        region_tiles[region.id].push_back(tile);
      }
    }
  }
  for (auto& ids : tile_regions) std::sort(ids.begin(), ids.end());
}

RegionPartition score_regions(std::span<Region> regions, const ProbabilityRaster& probs,
                              double threshold) {
  RegionPartition partition;
  partition.threshold = threshold;
  partition.is_misclassified.assign(regions.size(), 0);
  // Fixed-point accumulation keeps the mean independent of pixel order.
  constexpr double kScale = 1099511627776.0;  // 2^40
  std::vector<long long> votes(probs.classes());
  for (Region& region : regions) {
    if (region.frame_height != probs.height() || region.frame_width != probs.width()) {
      throw DimensionError("score_regions: probability raster is " +
                           std::to_string(probs.height()) + "x" + std::to_string(probs.width()) +
                           ", regions come from " + std::to_string(region.frame_height) + "x" +
                           std::to_string(region.frame_width));
    }
    std::fill(votes.begin(), votes.end(), 0);
    for (const Pixel& p : region.pixels) ++votes[probs.argmax(p.row, p.col)];
    const auto best = std::max_element(votes.begin(), votes.end()) - votes.begin();
    region.predicted = static_cast<ClassId>(best);
    long long total = 0;
    for (const Pixel& p : region.pixels) {
      total += std::llround(static_cast<double>(probs.at(p.row, p.col, static_cast<int>(best))) *
                            kScale);
    }
    region.certainty =
        std::clamp(static_cast<double>(total) / kScale / static_cast<double>(region.pixels.size()),
                   0.0, 1.0);
    if (region.certainty < threshold) {
      partition.misclassified.push_back(region.id);
      partition.is_misclassified[region.id] = 1;
    } else {
      partition.classified.push_back(region.id);
    }
  }
  return partition;
}

}  // namespace semref

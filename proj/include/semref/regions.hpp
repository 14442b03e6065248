#pragma once

#include <span>
#include <vector>

#include "semref/raster.hpp"

namespace semref {

enum class Connectivity { four = 4, eight = 8 };

// Inclusive pixel rectangle.
struct BBox {
  int r0 = 0;
  int c0 = 0;
  int r1 = -1;
  int c1 = -1;

  int height() const { return r1 - r0 + 1; }
  int width() const { return c1 - c0 + 1; }
  bool contains(int row, int col) const { return row >= r0 && row <= r1 && col >= c0 && col <= c1; }
  bool intersects(const BBox& o) const {
    return r0 <= o.r1 && o.r0 <= r1 && c0 <= o.c1 && o.c0 <= c1;
  }
  // True when the boxes overlap or touch, diagonals included.
  bool within_one(const BBox& o) const {
    return r0 <= o.r1 + 1 && o.r0 <= r1 + 1 && c0 <= o.c1 + 1 && o.c0 <= c1 + 1;
  }
  friend bool operator==(const BBox&, const BBox&) = default;
};

// A connected pixel set. Masks are stored local to the bounding box.
struct Region {
  int id = 0;
  ClassId label = 0;      // class of the source label raster
  ClassId predicted = 0;  // set by score_regions
  double certainty = 1.0;
  int frame_height = 0;
  int frame_width = 0;
  BBox bbox;
  int area = 0;
  std::vector<Pixel> pixels;          // row-major order
  std::vector<Pixel> outer_boundary;  // clockwise Moore trace from the top-left pixel
  std::vector<std::uint8_t> mask;     // bbox-local membership
  std::vector<std::uint8_t> filled;   // bbox-local membership with holes filled

  bool contains(int row, int col) const {
    return bbox.contains(row, col) && mask[local(row, col)] != 0;
  }
  bool filled_contains(int row, int col) const {
    return bbox.contains(row, col) && filled[local(row, col)] != 0;
  }
  // Bbox does not touch the frame border.
  bool interior() const {
    return bbox.r0 > 0 && bbox.c0 > 0 && bbox.r1 < frame_height - 1 && bbox.c1 < frame_width - 1;
  }
  std::vector<Pixel> filled_pixels() const;

 private:
  std::size_t local(int row, int col) const {
    return static_cast<std::size_t>(row - bbox.r0) * bbox.width() + (col - bbox.c0);
  }
};

// Builds a region from an arbitrary connected pixel list. `connectivity` is
// the connectivity the pixels were grouped under; holes are filled with the
// dual connectivity.
Region make_region(int id, ClassId label, std::vector<Pixel> pixels, int frame_height,
                   int frame_width, Connectivity connectivity = Connectivity::four);

struct RegionSet {
  int height = 0;
  int width = 0;
  std::vector<Region> regions;  // ids equal positions
  std::vector<int> owner;       // region id per pixel, row-major

  int owner_at(int row, int col) const { return owner[static_cast<std::size_t>(row) * width + col]; }
};

// Connected components in raster-scan order of their first pixel.
RegionSet extract_regions(const LabelRaster& labels,
                          Connectivity connectivity = Connectivity::four);

struct SegmentGrid {
  int height = 0;
  int width = 0;
  int tile_size = 0;
  int tile_rows = 0;
  int tile_cols = 0;
  std::vector<BBox> tiles;                    // row-major
  std::vector<std::vector<int>> tile_regions;  // tile -> region ids (ascending)
  std::vector<std::vector<int>> region_tiles;  // region id -> tile ids (ascending)

  // A region belongs to every tile its bbox intersects.
  void assign(std::span<const Region> regions);
};

SegmentGrid grid_segments(int height, int width, int tile_size);

struct RegionPartition {
  double threshold = 0.7;
  std::vector<int> classified;     // set R
  std::vector<int> misclassified;  // set P, certainty < threshold
  std::vector<std::uint8_t> is_misclassified;  // indexed by region id
};

// Sets predicted class (mode of per-pixel argmax, ties to the smallest id)
// and certainty (mean probability of that class) on every region.
RegionPartition score_regions(std::span<Region> regions, const ProbabilityRaster& probs,
                              double threshold);

}  // namespace semref

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace semref {

using ClassId = std::uint8_t;

struct ClassInfo {
  ClassId id;
  std::string name;
};

// Ordered set of classifier labels; ids are dense 0..size()-1.
class ClassSet {
 public:
  explicit ClassSet(std::vector<std::string> names);

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(ClassId id) const;
  ClassId id(std::string_view name) const;
  std::vector<ClassInfo> entries() const;

 private:
  std::vector<std::string> names_;
};

// vegetation, road, building, water, railroad
const ClassSet& default_classes();

namespace cls {
inline constexpr ClassId vegetation = 0;
inline constexpr ClassId road = 1;
inline constexpr ClassId building = 2;
inline constexpr ClassId water = 3;
inline constexpr ClassId railroad = 4;
inline constexpr int count = 5;
}  // namespace cls

struct Pixel {
  int row = 0;
  int col = 0;
  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

class LabelRaster {
 public:
  LabelRaster(int height, int width, int class_count, ClassId fill = 0);
  LabelRaster(int height, int width, int class_count, std::vector<ClassId> cells);

  int height() const { return height_; }
  int width() const { return width_; }
  int class_count() const { return class_count_; }
  std::size_t size() const { return cells_.size(); }

  ClassId at(int row, int col) const { return cells_[index(row, col)]; }
  void set(int row, int col, ClassId value);
  bool in_bounds(int row, int col) const {
    return row >= 0 && col >= 0 && row < height_ && col < width_;
  }
  std::span<const ClassId> cells() const { return cells_; }

  friend bool operator==(const LabelRaster&, const LabelRaster&) = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * width_ + col;
  }

  int height_;
  int width_;
  int class_count_;
  std::vector<ClassId> cells_;
};

// Row-major, channel-minor planes of 32-bit reals.
class MultiChannelRaster {
 public:
  MultiChannelRaster(int height, int width, int channels, float fill = 0.0f);
  MultiChannelRaster(int height, int width, int channels, std::vector<float> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }

  float at(int row, int col, int channel) const { return data_[index(row, col, channel)]; }
  float& at(int row, int col, int channel) { return data_[index(row, col, channel)]; }
  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  friend bool operator==(const MultiChannelRaster&, const MultiChannelRaster&) = default;

 private:
  std::size_t index(int row, int col, int channel) const {
    return (static_cast<std::size_t>(row) * width_ + col) * channels_ + channel;
  }

  int height_;
  int width_;
  int channels_;
  std::vector<float> data_;
};

// Per-pixel class distributions. Construction validates that every pixel is
// a point of the probability simplex.
class ProbabilityRaster {
 public:
  static constexpr double kSumTolerance = 1e-5;

  ProbabilityRaster(int height, int width, int classes, std::vector<float> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int classes() const { return classes_; }

  float at(int row, int col, int cls) const {
    return data_[(static_cast<std::size_t>(row) * width_ + col) * classes_ + cls];
  }
  std::span<const float> pixel(int row, int col) const {
    return std::span<const float>(data_).subspan(
        (static_cast<std::size_t>(row) * width_ + col) * classes_, classes_);
  }
  std::span<const float> data() const { return data_; }

  // Ties break toward the smallest class id.
  ClassId argmax(int row, int col) const;
  LabelRaster argmax_labels() const;

  friend bool operator==(const ProbabilityRaster&, const ProbabilityRaster&) = default;

 private:
  int height_;
  int width_;
  int classes_;
  std::vector<float> data_;
};

MultiChannelRaster concat_channels(const MultiChannelRaster& base, const MultiChannelRaster& extra);

// Extracts channel range [first, first + count).
MultiChannelRaster slice_channels(const MultiChannelRaster& raster, int first, int count);

enum class RasterKind { label, channels, probability };

std::string_view to_string(RasterKind kind);

using AnyRaster = std::variant<LabelRaster, MultiChannelRaster, ProbabilityRaster>;

// File layout:
//   SRRASTER v1
//   <kind> <height> <width> <channels>
//   payload, row-major, channel-minor, little-endian
// Labels are u8 with one channel, everything else f32.
void save_raster(const std::filesystem::path& path, const LabelRaster& raster);
void save_raster(const std::filesystem::path& path, const MultiChannelRaster& raster);
void save_raster(const std::filesystem::path& path, const ProbabilityRaster& raster);

AnyRaster load_raster(const std::filesystem::path& path, RasterKind kind, int class_count = 256);
LabelRaster load_label_raster(const std::filesystem::path& path, int class_count = 256);
MultiChannelRaster load_channel_raster(const std::filesystem::path& path);
ProbabilityRaster load_probability_raster(const std::filesystem::path& path);

// Reads only the header; used by `semref raster check`.
struct RasterHeader {
  RasterKind kind;
  int height;
  int width;
  int channels;
};
RasterHeader read_raster_header(const std::filesystem::path& path);

}  // namespace semref

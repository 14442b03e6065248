#include "semref/raster.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "semref/error.hpp"

namespace semref {

namespace {

constexpr std::string_view kMagic = "SRRASTER v1";

std::string pixel_where(int row, int col) {
  return "pixel (row " + std::to_string(row) + ", col " + std::to_string(col) + ")";
}

void check_dims(int height, int width) {
  if (height <= 0 || width <= 0) {
    throw DimensionError("raster dimensions must be positive, got " + std::to_string(height) +
                         "x" + std::to_string(width));
  }
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

void write_floats(std::ostream& out, std::span<const float> values) {
  std::vector<std::uint32_t> words(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    words[i] = to_le(std::bit_cast<std::uint32_t>(values[i]));
  }
  out.write(reinterpret_cast<const char*>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
}

std::vector<float> read_floats(std::istream& in, std::size_t count, const std::string& path) {
  std::vector<std::uint32_t> words(count);
  in.read(reinterpret_cast<char*>(words.data()),
          static_cast<std::streamsize>(count * sizeof(std::uint32_t)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(std::uint32_t)) {
    throw FormatError(path + ": payload truncated, expected " + std::to_string(count) + " floats");
  }
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = std::bit_cast<float>(to_le(words[i]));
  return out;
}

void write_header(std::ostream& out, RasterKind kind, int h, int w, int c) {
  out << kMagic << '\n' << to_string(kind) << ' ' << h << ' ' << w << ' ' << c << '\n';
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  return out;
}

RasterHeader parse_header(std::istream& in, const std::string& path) {
  std::string magic;
  if (!std::getline(in, magic) || magic != kMagic) {
    throw FormatError(path + ": malformed header, expected magic '" + std::string(kMagic) + "'");
  }
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": malformed header, missing shape line");
  std::istringstream fields(line);
  std::string kind_name;
  long long h = 0, w = 0, c = 0;
  std::string extra;
  if (!(fields >> kind_name >> h >> w >> c) || (fields >> extra)) {
    throw FormatError(path + ": malformed header line '" + line + "'");
  }
  RasterHeader header{};
  if (kind_name == "label") {
    header.kind = RasterKind::label;
  } else if (kind_name == "channels") {
    header.kind = RasterKind::channels;
  } else if (kind_name == "probability") {
    header.kind = RasterKind::probability;
  } else {
    throw FormatError(path + ": malformed header, unknown kind '" + kind_name + "'");
  }
  constexpr long long kMaxSide = 1 << 20;
  if (h <= 0 || w <= 0 || c <= 0 || h > kMaxSide || w > kMaxSide || c > 4096) {
    throw FormatError(path + ": malformed header, invalid shape " + line);
  }
  if (header.kind == RasterKind::label && c != 1) {
    throw FormatError(path + ": label rasters carry exactly one channel, header says " +
                      std::to_string(c));
  }
  header.height = static_cast<int>(h);
  header.width = static_cast<int>(w);
  header.channels = static_cast<int>(c);
  return header;
}

void expect_eof(std::istream& in, const std::string& path) {
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(path + ": dimension mismatch, trailing bytes after payload");
  }
}

}  // namespace

ClassSet::ClassSet(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty() || names_.size() > 256) throw Error("class set must hold 1..256 names");
  auto sorted = names_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error("class names must be unique");
  }
}

const std::string& ClassSet::name(ClassId id) const {
  if (id >= names_.size()) throw Error("class id " + std::to_string(id) + " out of range");
  return names_[id];
}

ClassId ClassSet::id(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw Error("unknown class '" + std::string(name) + "'");
  return static_cast<ClassId>(it - names_.begin());
}

std::vector<ClassInfo> ClassSet::entries() const {
  std::vector<ClassInfo> out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    out.push_back({static_cast<ClassId>(i), names_[i]});
  }
  return out;
}

const ClassSet& default_classes() {
  static const ClassSet classes({"vegetation", "road", "building", "water", "railroad"});
  return classes;
}

LabelRaster::LabelRaster(int height, int width, int class_count, ClassId fill)
    : height_(height), width_(width), class_count_(class_count) {
  check_dims(height, width);
  if (class_count < 1 || class_count > 256) throw Error("class count must be in 1..256");
  if (fill >= class_count) throw Error("fill class out of range");
  cells_.assign(static_cast<std::size_t>(height) * width, fill);
}

LabelRaster::LabelRaster(int height, int width, int class_count, std::vector<ClassId> cells)
    : height_(height), width_(width), class_count_(class_count), cells_(std::move(cells)) {
  check_dims(height, width);
  if (class_count < 1 || class_count > 256) throw Error("class count must be in 1..256");
  if (cells_.size() != static_cast<std::size_t>(height) * width) {
    throw DimensionError("label payload has " + std::to_string(cells_.size()) +
                         " cells, expected " + std::to_string(height * width));
  }
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (cells_[i] >= class_count) {
      throw FormatError("class id " + std::to_string(cells_[i]) + " out of range at " +
                        pixel_where(static_cast<int>(i / width), static_cast<int>(i % width)));
    }
  }
}

void LabelRaster::set(int row, int col, ClassId value) {
  if (value >= class_count_) throw Error("class id out of range at " + pixel_where(row, col));
  cells_[index(row, col)] = value;
}

MultiChannelRaster::MultiChannelRaster(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  check_dims(height, width);
  if (channels < 0) throw DimensionError("negative channel count");
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

MultiChannelRaster::MultiChannelRaster(int height, int width, int channels,
                                       std::vector<float> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_dims(height, width);
  if (channels < 0) throw DimensionError("negative channel count");
  if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw DimensionError("channel payload size mismatch");
  }
}

ProbabilityRaster::ProbabilityRaster(int height, int width, int classes, std::vector<float> data)
    : height_(height), width_(width), classes_(classes), data_(std::move(data)) {
  check_dims(height, width);
  if (classes < 1) throw DimensionError("probability raster needs at least one class");
  if (data_.size() != static_cast<std::size_t>(height) * width * classes) {
    throw DimensionError("probability payload size mismatch");
  }
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      double sum = 0.0;
      for (float p : pixel(r, c)) {
        if (!(p >= 0.0f) || !std::isfinite(p)) {
          throw FormatError("negative or non-finite probability at " + pixel_where(r, c));
        }
        sum += p;
      }
      if (std::abs(sum - 1.0) > kSumTolerance) {
        std::ostringstream msg;
        msg << "probabilities not normalized at " << pixel_where(r, c) << ": sum " << sum;
        throw FormatError(msg.str());
      }
    }
  }
}

ClassId ProbabilityRaster::argmax(int row, int col) const {
  auto px = pixel(row, col);
  int best = 0;
  for (int k = 1; k < classes_; ++k) {
    if (px[k] > px[best]) best = k;
  }
  return static_cast<ClassId>(best);
}

LabelRaster ProbabilityRaster::argmax_labels() const {
  LabelRaster out(height_, width_, classes_);
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) out.set(r, c, argmax(r, c));
  }
  return out;
}

MultiChannelRaster concat_channels(const MultiChannelRaster& base,
                                   const MultiChannelRaster& extra) {
  if (base.height() != extra.height() || base.width() != extra.width()) {
    throw DimensionError("concat_channels: " + std::to_string(base.height()) + "x" +
                         std::to_string(base.width()) + " vs " + std::to_string(extra.height()) +
                         "x" + std::to_string(extra.width()));
  }
  const int channels = base.channels() + extra.channels();
  MultiChannelRaster out(base.height(), base.width(), channels);
  for (int r = 0; r < base.height(); ++r) {
    for (int c = 0; c < base.width(); ++c) {
      for (int k = 0; k < base.channels(); ++k) out.at(r, c, k) = base.at(r, c, k);
      for (int k = 0; k < extra.channels(); ++k) {
        out.at(r, c, base.channels() + k) = extra.at(r, c, k);
      }
    }
  }
  return out;
}

MultiChannelRaster slice_channels(const MultiChannelRaster& raster, int first, int count) {
  if (first < 0 || count < 0 || first + count > raster.channels()) {
    throw DimensionError("slice_channels: range out of bounds");
  }
  MultiChannelRaster out(raster.height(), raster.width(), count);
  for (int r = 0; r < raster.height(); ++r) {
    for (int c = 0; c < raster.width(); ++c) {
      for (int k = 0; k < count; ++k) out.at(r, c, k) = raster.at(r, c, first + k);
    }
  }
  return out;
}

std::string_view to_string(RasterKind kind) {
  switch (kind) {
    case RasterKind::label:
      return "label";
    case RasterKind::channels:
      return "channels";
    case RasterKind::probability:
      return "probability";
  }
  return "?";
}

void save_raster(const std::filesystem::path& path, const LabelRaster& raster) {
  auto out = open_out(path);
  write_header(out, RasterKind::label, raster.height(), raster.width(), 1);
  out.write(reinterpret_cast<const char*>(raster.cells().data()),
            static_cast<std::streamsize>(raster.cells().size()));
  if (!out) throw Error("write failed: " + path.string());
}

void save_raster(const std::filesystem::path& path, const MultiChannelRaster& raster) {
  if (raster.channels() == 0) throw Error("cannot save a raster with zero channels");
  auto out = open_out(path);
  write_header(out, RasterKind::channels, raster.height(), raster.width(), raster.channels());
  write_floats(out, raster.data());
  if (!out) throw Error("write failed: " + path.string());
}

void save_raster(const std::filesystem::path& path, const ProbabilityRaster& raster) {
  auto out = open_out(path);
  write_header(out, RasterKind::probability, raster.height(), raster.width(), raster.classes());
  write_floats(out, raster.data());
  if (!out) throw Error("write failed: " + path.string());
}

RasterHeader read_raster_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return parse_header(in, path.string());
}

AnyRaster load_raster(const std::filesystem::path& path, RasterKind kind, int class_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::string name = path.string();
  const RasterHeader header = parse_header(in, name);
  if (header.kind != kind) {
    throw FormatError(name + ": expected a " + std::string(to_string(kind)) + " raster, found " +
                      std::string(to_string(header.kind)));
  }
  const auto cells = static_cast<std::size_t>(header.height) * header.width;
  switch (kind) {
    case RasterKind::label: {
      std::vector<ClassId> payload(cells);
      in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(cells));
      if (static_cast<std::size_t>(in.gcount()) != cells) {
        throw FormatError(name + ": payload truncated, expected " + std::to_string(cells) +
                          " label bytes");
      }
      expect_eof(in, name);
      for (std::size_t i = 0; i < cells; ++i) {
        if (payload[i] >= class_count) {
          throw FormatError(name + ": class id " + std::to_string(payload[i]) +
                            " out of range at " +
                            pixel_where(static_cast<int>(i / header.width),
                                        static_cast<int>(i % header.width)));
        }
      }
      return LabelRaster(header.height, header.width, class_count, std::move(payload));
    }
    case RasterKind::channels: {
      auto payload = read_floats(in, cells * header.channels, name);
      expect_eof(in, name);
      return MultiChannelRaster(header.height, header.width, header.channels, std::move(payload));
    }
    case RasterKind::probability: {
      auto payload = read_floats(in, cells * header.channels, name);
      expect_eof(in, name);
      try {
        return ProbabilityRaster(header.height, header.width, header.channels,
                                 std::move(payload));
      } catch (const FormatError& e) {
        throw FormatError(name + ": " + e.what());
      }
    }
  }
  throw FormatError(name + ": unsupported raster kind");
}

LabelRaster load_label_raster(const std::filesystem::path& path, int class_count) {
  return std::get<LabelRaster>(load_raster(path, RasterKind::label, class_count));
}

MultiChannelRaster load_channel_raster(const std::filesystem::path& path) {
  return std::get<MultiChannelRaster>(load_raster(path, RasterKind::channels));
}

ProbabilityRaster load_probability_raster(const std::filesystem::path& path) {
  return std::get<ProbabilityRaster>(load_raster(path, RasterKind::probability));
}

}  // namespace semref

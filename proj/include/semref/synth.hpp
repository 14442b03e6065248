#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "semref/raster.hpp"

namespace semref {

struct ClassColor {
  std::array<double, 3> mean{};
  double noise = 0.06;
};

struct SceneSpec {
  std::uint64_t seed = 1;
  int height = 256;
  int width = 256;
  int buildings = 20;
  int road_strips = 3;  // the first one beyond the first horizontal is vertical
  int water_bodies = 3;
  int railroads = 1;
  // Index into the 8 compass offsets N, NE, E, SE, S, SW, W, NW that
  // shadows extend along; -1 draws a diagonal from the seed.
  int light_direction = -1;
  double shadow_factor = 0.45;
  int shadow_min = 6;
  int shadow_max = 14;
  // Inclusive size ranges in pixels.
  int road_width_min = 10;
  int road_width_max = 16;
  int building_min = 12;
  int building_max = 28;
  double pond_radius_min = 6.0;
  double pond_radius_max = 14.0;
  double pond_near_road = 0.6;  // share of ponds centered on a road edge
  std::array<ClassColor, cls::count> palette{{
      {{0.25, 0.45, 0.20}, 0.06},  // vegetation
      {{0.50, 0.50, 0.50}, 0.06},  // road
      {{0.62, 0.58, 0.55}, 0.06},  // building
      {{0.223, 0.225, 0.228}, 0.027},  // water: a shadowed road, statistically
      {{0.35, 0.28, 0.25}, 0.06},  // railroad
  }};

  void validate() const;
  // Euclidean distance from a shadowed road mean to the water mean.
  double shadowed_road_gap() const;
};

inline constexpr std::array<std::array<int, 2>, 8> kCompass{
    {{-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1}}};

struct SceneBundle {
  SceneSpec spec;
  int light_direction = 0;  // resolved compass index
  MultiChannelRaster rgb;
  LabelRaster labels;
  LabelRaster true_shadow;  // 0/1
  MultiChannelRaster true_dsm;
};

SceneBundle generate_scene(const SceneSpec& spec);

// rgb.srraster, labels.srraster, shadow.srraster, dsm.srraster, manifest.json
void save_scene(const std::filesystem::path& dir, const SceneBundle& scene);
SceneBundle load_scene(const std::filesystem::path& dir);

std::string spec_to_json(const SceneSpec& spec, int resolved_direction);

}  // namespace semref

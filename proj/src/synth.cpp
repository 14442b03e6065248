#include "semref/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "semref/error.hpp"
#include "semref/rng.hpp"

namespace semref {

namespace {

using json = nlohmann::json;

struct Rect {
  int r0, c0, r1, c1;  // inclusive
};

struct Road {
  bool vertical;
  int lo, hi;  // rows (horizontal) or cols (vertical), inclusive
};

class Canvas {
 public:
  Canvas(int h, int w) : h_(h), w_(w), labels_(static_cast<std::size_t>(h) * w, cls::vegetation) {}

  bool inside(int r, int c) const { return r >= 0 && c >= 0 && r < h_ && c < w_; }
  ClassId& at(int r, int c) { return labels_[static_cast<std::size_t>(r) * w_ + c]; }
  ClassId at(int r, int c) const { return labels_[static_cast<std::size_t>(r) * w_ + c]; }

  void fill(const Rect& rect, ClassId id) {
    for (int r = rect.r0; r <= rect.r1; ++r) {
      for (int c = rect.c0; c <= rect.c1; ++c) at(r, c) = id;
    }
  }

  // True if no pixel within `margin` (Chebyshev) of `rect` carries any of `ids`.
  bool clear_of(const Rect& rect, int margin, std::initializer_list<ClassId> ids) const {
    for (int r = std::max(0, rect.r0 - margin); r <= std::min(h_ - 1, rect.r1 + margin); ++r) {
      for (int c = std::max(0, rect.c0 - margin); c <= std::min(w_ - 1, rect.c1 + margin); ++c) {
        if (std::find(ids.begin(), ids.end(), at(r, c)) != ids.end()) return false;
      }
    }
    return true;
  }

  bool all_of(const Rect& rect, ClassId id) const {
    for (int r = rect.r0; r <= rect.r1; ++r) {
      for (int c = rect.c0; c <= rect.c1; ++c) {
        if (at(r, c) != id) return false;
      }
    }
    return true;
  }

  const std::vector<ClassId>& cells() const { return labels_; }

 private:
  int h_, w_;
  std::vector<ClassId> labels_;
};

int attempts_for(int count) { return 400 + 200 * count; }

std::vector<Road> lay_roads(const SceneSpec& spec, Rng& rng, Canvas& canvas) {
  std::vector<Road> roads;
  if (spec.road_strips == 0) return roads;
  const int vertical = spec.road_strips >= 2 ? 1 : 0;
  const int horizontal = spec.road_strips - vertical;
  const int band = spec.height / (horizontal + 1);
  if (band < spec.road_width_max + 24) throw Error("canvas too small for " + std::to_string(horizontal) + " horizontal roads");
  for (int i = 0; i < horizontal; ++i) {
    const int width = rng.uniform_int(spec.road_width_min, spec.road_width_max);
    const int center = (i + 1) * band + rng.uniform_int(-band / 6, band / 6);
    roads.push_back({false, center - width / 2, center - width / 2 + width - 1});
  }
  if (vertical) {
    if (spec.width < 96) throw Error("canvas too small for a vertical road");
    const int width = rng.uniform_int(spec.road_width_min, spec.road_width_max);
    const int center = static_cast<int>(spec.width * rng.uniform(0.35, 0.65));
    roads.push_back({true, center - width / 2, center - width / 2 + width - 1});
  }
  for (const Road& road : roads) {
    if (road.vertical) {
      canvas.fill({0, road.lo, spec.height - 1, road.hi}, cls::road);
    } else {
      canvas.fill({road.lo, 0, road.hi, spec.width - 1}, cls::road);
    }
  }
  return roads;
}

// Horizontal strip starting at the left or right border, inside vegetation.
void lay_railroads(const SceneSpec& spec, Rng& rng, Canvas& canvas) {
  constexpr int kWidth = 9;
  constexpr int kMargin = 2;
  for (int placed = 0, tries = 0; placed < spec.railroads; ++tries) {
    if (tries > attempts_for(spec.railroads)) {
      throw Error("canvas too small for " + std::to_string(spec.railroads) + " railroads");
    }
    const bool from_left = rng.uniform() < 0.5;
    const int row = rng.uniform_int(0, spec.height - kWidth);
    // Extend from the border until vegetation ends, keeping the margin.
    int reach = 0;
    for (int i = 0; i < spec.width; ++i) {
      const int c = from_left ? i : spec.width - 1 - i;
      const Rect probe{row, c, row + kWidth - 1, c};
      if (!canvas.all_of(probe, cls::vegetation)) break;
      if (!canvas.clear_of(probe, kMargin,
                           {cls::road, cls::building, cls::water, cls::railroad})) {
        break;
      }
      ++reach;
    }
    reach -= kMargin;
    if (reach < spec.width / 4) continue;
    const int length = static_cast<int>(reach * rng.uniform(0.7, 1.0));
    const Rect rect = from_left ? Rect{row, 0, row + kWidth - 1, length - 1}
                                : Rect{row, spec.width - length, row + kWidth - 1, spec.width - 1};
    if (!canvas.clear_of(rect, kMargin, {cls::road, cls::building, cls::water, cls::railroad})) {
      continue;
    }
    canvas.fill(rect, cls::railroad);
    ++placed;
  }
}

// Rectangles flush against a road edge, preferring the side whose shadow falls
// onto the road.
std::vector<Rect> lay_buildings(const SceneSpec& spec, const std::vector<Road>& roads,
                                std::array<int, 2> dir, Rng& rng, Canvas& canvas) {
  std::vector<Rect> out;
  if (spec.buildings > 0 && roads.empty()) throw Error("buildings need at least one road strip");
  for (int tries = 0; static_cast<int>(out.size()) < spec.buildings; ++tries) {
    if (tries > attempts_for(spec.buildings)) {
      throw Error("canvas too small for " + std::to_string(spec.buildings) + " buildings");
    }
    const Road& road = roads[rng.uniform_int(0, static_cast<int>(roads.size()) - 1)];
    const int h = rng.uniform_int(spec.building_min, spec.building_max);
    const int w = rng.uniform_int(spec.building_min, spec.building_max);
    const int toward = road.vertical ? dir[1] : dir[0];
    bool before = rng.uniform() < 0.5;  // north or west of the road
    if (toward != 0 && rng.uniform() < 0.8) before = toward > 0;
    Rect rect{};
    if (road.vertical) {
      const int r0 = rng.uniform_int(1, spec.height - h - 1);
      const int c0 = before ? road.lo - w : road.hi + 1;
      rect = {r0, c0, r0 + h - 1, c0 + w - 1};
    } else {
      const int c0 = rng.uniform_int(1, spec.width - w - 1);
      const int r0 = before ? road.lo - h : road.hi + 1;
      rect = {r0, c0, r0 + h - 1, c0 + w - 1};
    }
    if (rect.r0 < 1 || rect.c0 < 1 || rect.r1 > spec.height - 2 || rect.c1 > spec.width - 2) continue;
    if (!canvas.all_of(rect, cls::vegetation)) continue;
    if (!canvas.clear_of(rect, 3, {cls::building})) continue;
    if (!canvas.clear_of(rect, 2, {cls::railroad, cls::water})) continue;
    canvas.fill(rect, cls::building);
    out.push_back(rect);
  }
  return out;
}

// Ellipses clipped to vegetation, so a pond may sit flush against a road.
// Ponds keep clear of buildings, railroads and cast shadows.
void lay_water(const SceneSpec& spec, const std::vector<Road>& roads,
               const std::vector<std::uint8_t>& shadow, Rng& rng, Canvas& canvas) {
  const int H = spec.height;
  const int W = spec.width;
  auto near_shadow = [&](int r, int c) {
    for (int rr = std::max(0, r - 3); rr <= std::min(H - 1, r + 3); ++rr) {
      for (int cc = std::max(0, c - 3); cc <= std::min(W - 1, c + 3); ++cc) {
        if (shadow[static_cast<std::size_t>(rr) * W + cc]) return true;
      }
    }
    return false;
  };
  for (int placed = 0, tries = 0; placed < spec.water_bodies; ++tries) {
    if (tries > attempts_for(spec.water_bodies)) {
      throw Error("canvas too small for " + std::to_string(spec.water_bodies) + " water bodies");
    }
    const double a = rng.uniform(spec.pond_radius_min, spec.pond_radius_max);
    const double b = rng.uniform(spec.pond_radius_min, spec.pond_radius_max);
    double cy = rng.uniform(0.0, H - 1.0);
    double cx = rng.uniform(0.0, W - 1.0);
    if (!roads.empty() && rng.uniform() < spec.pond_near_road) {
      // Centered just off a road edge.
      const Road& road = roads[rng.uniform_int(0, static_cast<int>(roads.size()) - 1)];
      const bool before = rng.uniform() < 0.5;
      const double edge = before ? road.lo - 0.5 : road.hi + 0.5;
      const double offset = (before ? -1.0 : 1.0) * rng.uniform(0.0, 0.5) * (road.vertical ? b : a);
      if (road.vertical) {
        cx = edge + offset;
      } else {
        cy = edge + offset;
      }
    }
    std::vector<std::pair<int, int>> pixels;
    bool ok = true;
    for (int r = static_cast<int>(cy - a) - 1; ok && r <= static_cast<int>(cy + a) + 1; ++r) {
      for (int c = static_cast<int>(cx - b) - 1; c <= static_cast<int>(cx + b) + 1; ++c) {
        const double y = (r - cy) / a;
        const double x = (c - cx) / b;
        if (y * y + x * x > 1.0 || !canvas.inside(r, c)) continue;
        const ClassId here = canvas.at(r, c);
        if (here == cls::road) continue;
        if (here != cls::vegetation || near_shadow(r, c) ||
            !canvas.clear_of({r, c, r, c}, 2, {cls::building, cls::railroad})) {
          ok = false;
          break;
        }
        pixels.emplace_back(r, c);
      }
    }
    if (!ok || pixels.size() < 40) continue;
    for (auto [r, c] : pixels) canvas.at(r, c) = cls::water;
    ++placed;
  }
}

json color_json(const ClassColor& color) {
  return {{"mean", color.mean}, {"noise", color.noise}};
}

}  // namespace

void SceneSpec::validate() const {
  if (height < 64 || width < 64) throw Error("scenes must be at least 64x64");
  if (buildings < 0 || road_strips < 0 || water_bodies < 0 || railroads < 0) {
    throw Error("feature counts must be non-negative");
  }
  if (light_direction < -1 || light_direction > 7) throw Error("light direction must be -1 or 0..7");
  if (!(shadow_factor > 0.0 && shadow_factor < 1.0)) throw Error("shadow factor must lie in (0, 1)");
  if (shadow_min < 1 || shadow_max < shadow_min) throw Error("invalid shadow length range");
  if (road_width_min < 1 || road_width_max < road_width_min) throw Error("invalid road width range");
  if (building_min < 1 || building_max < building_min) throw Error("invalid building size range");
  if (!(pond_radius_min >= 1.0 && pond_radius_max >= pond_radius_min)) {
    throw Error("invalid pond radius range");
  }
  if (!(pond_near_road >= 0.0 && pond_near_road <= 1.0)) throw Error("pond_near_road must lie in [0, 1]");
  for (const auto& color : palette) {
    if (!(color.noise >= 0.0)) throw Error("palette noise must be non-negative");
  }
  if (!(shadowed_road_gap() < palette[cls::road].noise)) {
    throw Error("shadowed road is not ambiguous with water: gap " +
                std::to_string(shadowed_road_gap()) + " >= road noise " +
                std::to_string(palette[cls::road].noise));
  }
}

double SceneSpec::shadowed_road_gap() const {
  double sum = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double d = shadow_factor * palette[cls::road].mean[k] - palette[cls::water].mean[k];
    sum += d * d;
  }
  return std::sqrt(sum);
}

SceneBundle generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int H = spec.height;
  const int W = spec.width;

  int direction = spec.light_direction;
  if (direction < 0) direction = 1 + 2 * rng.uniform_int(0, 3);
  const auto dir = kCompass[direction];

  Canvas canvas(H, W);
  const auto roads = lay_roads(spec, rng, canvas);
  lay_railroads(spec, rng, canvas);
  const auto buildings = lay_buildings(spec, roads, dir, rng, canvas);

  // Footprints shifted k steps along the light offset, k = 1..length.
  std::vector<std::uint8_t> shadow(static_cast<std::size_t>(H) * W, 0);
  std::vector<float> height(static_cast<std::size_t>(H) * W, 0.0f);
  for (const Rect& b : buildings) {
    const float top = static_cast<float>(rng.uniform(8.0, 20.0));
    const int length = rng.uniform_int(spec.shadow_min, spec.shadow_max);
    for (int r = b.r0; r <= b.r1; ++r) {
      for (int c = b.c0; c <= b.c1; ++c) {
        height[static_cast<std::size_t>(r) * W + c] = top;
        for (int k = 1; k <= length; ++k) {
          const int rr = r + k * dir[0];
          const int cc = c + k * dir[1];
          if (canvas.inside(rr, cc) && canvas.at(rr, cc) != cls::building) {
            shadow[static_cast<std::size_t>(rr) * W + cc] = 1;
          }
        }
      }
    }
  }
  lay_water(spec, roads, shadow, rng, canvas);

  SceneBundle out{spec,
                  direction,
                  MultiChannelRaster(H, W, 3),
                  LabelRaster(H, W, cls::count, canvas.cells()),
                  LabelRaster(H, W, 2, shadow),
                  MultiChannelRaster(H, W, 1, height)};

  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const ClassId label = canvas.at(r, c);
      if (label == cls::vegetation) out.true_dsm.at(r, c, 0) = 3.0f;
      const ClassColor& color = spec.palette[label];
      const double shade = out.true_shadow.at(r, c) ? spec.shadow_factor : 1.0;
      for (int k = 0; k < 3; ++k) {
        const double v = shade * rng.normal(color.mean[k], color.noise);
        out.rgb.at(r, c, k) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return out;
}

std::string spec_to_json(const SceneSpec& spec, int resolved_direction) {
  json palette = json::object();
  for (int k = 0; k < cls::count; ++k) {
    palette[default_classes().name(static_cast<ClassId>(k))] = color_json(spec.palette[k]);
  }
  json j{{"seed", spec.seed},
         {"height", spec.height},
         {"width", spec.width},
         {"buildings", spec.buildings},
         {"road_strips", spec.road_strips},
         {"water_bodies", spec.water_bodies},
         {"railroads", spec.railroads},
         {"light_direction", resolved_direction},
         {"shadow_factor", spec.shadow_factor},
         {"shadow_min", spec.shadow_min},
         {"shadow_max", spec.shadow_max},
         {"road_width", {spec.road_width_min, spec.road_width_max}},
         {"building_size", {spec.building_min, spec.building_max}},
         {"pond_radius", {spec.pond_radius_min, spec.pond_radius_max}},
         {"pond_near_road", spec.pond_near_road},
         {"palette", palette},
         {"files",
          {{"rgb", "rgb.srraster"},
           {"labels", "labels.srraster"},
           {"true_shadow", "shadow.srraster"},
           {"true_dsm", "dsm.srraster"}}}};
  return j.dump(2);
}

void save_scene(const std::filesystem::path& dir, const SceneBundle& scene) {
  std::filesystem::create_directories(dir);
  save_raster(dir / "rgb.srraster", scene.rgb);
  save_raster(dir / "labels.srraster", scene.labels);
  save_raster(dir / "shadow.srraster", scene.true_shadow);
  save_raster(dir / "dsm.srraster", scene.true_dsm);
  std::ofstream manifest(dir / "manifest.json");
  manifest << spec_to_json(scene.spec, scene.light_direction) << "\n";
  if (!manifest) throw Error("cannot write " + (dir / "manifest.json").string());
}

SceneBundle load_scene(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error("missing " + (dir / "manifest.json").string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
  SceneSpec spec;
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.height = j.at("height").get<int>();
  spec.width = j.at("width").get<int>();
  spec.buildings = j.at("buildings").get<int>();
  spec.road_strips = j.at("road_strips").get<int>();
  spec.water_bodies = j.at("water_bodies").get<int>();
  spec.railroads = j.at("railroads").get<int>();
  spec.light_direction = j.at("light_direction").get<int>();
  spec.shadow_factor = j.at("shadow_factor").get<double>();
  spec.shadow_min = j.at("shadow_min").get<int>();
  spec.shadow_max = j.at("shadow_max").get<int>();
  spec.road_width_min = j.at("road_width").at(0).get<int>();
  spec.road_width_max = j.at("road_width").at(1).get<int>();
  spec.building_min = j.at("building_size").at(0).get<int>();
  spec.building_max = j.at("building_size").at(1).get<int>();
  spec.pond_radius_min = j.at("pond_radius").at(0).get<double>();
  spec.pond_radius_max = j.at("pond_radius").at(1).get<double>();
  spec.pond_near_road = j.at("pond_near_road").get<double>();
  for (int k = 0; k < cls::count; ++k) {
    const auto& color = j.at("palette").at(default_classes().name(static_cast<ClassId>(k)));
    spec.palette[k].mean = color.at("mean").get<std::array<double, 3>>();
    spec.palette[k].noise = color.at("noise").get<double>();
  }
  SceneBundle scene{spec,
                    spec.light_direction,
                    load_channel_raster(dir / "rgb.srraster"),
                    load_label_raster(dir / "labels.srraster", cls::count),
                    load_label_raster(dir / "shadow.srraster", 2),
                    load_channel_raster(dir / "dsm.srraster")};
  if (scene.rgb.channels() != 3 || scene.true_dsm.channels() != 1) {
    throw FormatError(dir.string() + ": scene rasters have unexpected channel counts");
  }
  return scene;
}

}  // namespace semref

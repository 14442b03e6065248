#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "semref/classifier.hpp"
#include "semref/error.hpp"
#include "semref/ontology.hpp"
#include "semref/synth.hpp"
#include "support.hpp"

using namespace semref;

namespace {

double dist(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

SceneSpec small_spec(std::uint64_t seed) {
  SceneSpec s;
  s.seed = seed;
  s.height = 128;
  s.width = 128;
  s.buildings = 8;
  return s;
}

}  // namespace

TEST_CASE("the same seed gives bitwise identical scenes") {
  SceneSpec spec;
  spec.seed = 7;
  const auto a = generate_scene(spec);
  const auto b = generate_scene(spec);
  CHECK(a.rgb == b.rgb);
  CHECK(a.labels == b.labels);
  CHECK(a.true_shadow == b.true_shadow);
  CHECK(a.true_dsm == b.true_dsm);
  CHECK(a.light_direction == b.light_direction);
  spec.seed = 8;
  CHECK_FALSE(generate_scene(spec).rgb == a.rgb);
}

TEST_CASE("no buildings means no shadows") {
  auto spec = small_spec(3);
  spec.buildings = 0;
  const auto scene = generate_scene(spec);
  for (ClassId v : scene.true_shadow.cells()) CHECK(v == 0);
  for (ClassId v : scene.labels.cells()) CHECK(v != cls::building);
}

TEST_CASE("shadowed road looks more like water than like road") {
  SceneSpec spec;
  CHECK(spec.shadowed_road_gap() < dist(spec.palette[cls::road].mean, spec.palette[cls::water].mean));
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    spec.seed = seed;
    const auto scene = generate_scene(spec);
    std::array<double, 3> sum{};
    long n = 0;
    for (int r = 0; r < scene.labels.height(); ++r) {
      for (int c = 0; c < scene.labels.width(); ++c) {
        if (scene.labels.at(r, c) != cls::road || !scene.true_shadow.at(r, c)) continue;
        for (int k = 0; k < 3; ++k) sum[k] += scene.rgb.at(r, c, k);
        ++n;
      }
    }
    CAPTURE(seed);
    REQUIRE(n > 0);
    for (auto& v : sum) v /= static_cast<double>(n);
    CHECK(dist(sum, spec.palette[cls::water].mean) < dist(sum, spec.palette[cls::road].mean));
  }
}

TEST_CASE("scene properties over 24 seeds") {
  const auto onto = load_ontology(testing::shipped_ontology());
  for (std::uint64_t seed = 100; seed < 124; ++seed) {
    const auto spec = small_spec(seed);
    const auto scene = generate_scene(spec);
    CAPTURE(seed);
    CHECK(scene.rgb.channels() == 3);
    CHECK(scene.true_dsm.channels() == 1);
    for (float v : scene.rgb.data()) CHECK((v >= 0.0f && v <= 1.0f));
    // Labels partition the frame into the five classes.
    std::vector<long> count(cls::count, 0);
    for (ClassId v : scene.labels.cells()) {
      REQUIRE(v < cls::count);
      ++count[v];
    }
    for (int k = 0; k < cls::count; ++k) CHECK(count[k] > 0);
    // Railroad stays the rare class.
    CHECK(count[cls::railroad] * 10 < static_cast<long>(scene.labels.size()));
    // Shadows fall outside buildings and only buildings stand tall.
    for (int r = 0; r < scene.labels.height(); ++r) {
      for (int c = 0; c < scene.labels.width(); ++c) {
        if (scene.true_shadow.at(r, c)) CHECK(scene.labels.at(r, c) != cls::building);
        if (scene.labels.at(r, c) == cls::building) CHECK(scene.true_dsm.at(r, c, 0) >= 6.0f);
      }
    }
    CHECK(testing::scene_violations(scene, onto).empty());
  }
}

TEST_CASE("scenes round-trip through disk") {
  const auto scene = generate_scene(small_spec(5));
  const auto dir = std::filesystem::temp_directory_path() / "semref_scene_test";
  std::filesystem::remove_all(dir);
  save_scene(dir, scene);
  const auto back = load_scene(dir);
  CHECK(back.rgb == scene.rgb);
  CHECK(back.labels == scene.labels);
  CHECK(back.true_shadow == scene.true_shadow);
  CHECK(back.true_dsm == scene.true_dsm);
  CHECK(back.spec.seed == scene.spec.seed);
  CHECK(back.spec.road_width_max == scene.spec.road_width_max);
  CHECK(back.light_direction == scene.light_direction);
}

TEST_CASE("a fixed light direction casts shadows along that compass offset") {
  auto spec = small_spec(9);
  spec.light_direction = 2;  // east
  const auto scene = generate_scene(spec);
  CHECK(scene.light_direction == 2);
  for (int r = 0; r < scene.labels.height(); ++r) {
    for (int c = 1; c < scene.labels.width(); ++c) {
      // A shadow pixel's run starts at a building or another shadow pixel.
      if (scene.true_shadow.at(r, c)) {
        const bool fed = scene.true_shadow.at(r, c - 1) || scene.labels.at(r, c - 1) == cls::building;
        CHECK(fed);
      }
    }
  }
}

TEST_CASE("invalid specs are rejected") {
  auto spec = small_spec(1);
  spec.road_width_min = 20;
  spec.road_width_max = 10;
  CHECK_THROWS_AS(generate_scene(spec), Error);
  spec = small_spec(1);
  spec.light_direction = 8;
  CHECK_THROWS_AS(generate_scene(spec), Error);
  spec = small_spec(1);
  spec.pond_near_road = 1.5;
  CHECK_THROWS_AS(generate_scene(spec), Error);
  spec = small_spec(1);
  spec.height = 32;
  spec.width = 32;
  spec.buildings = 40;
  CHECK_THROWS_AS(generate_scene(spec), Error);
}

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "semref/classifier.hpp"
#include "semref/error.hpp"
#include "semref/metrics.hpp"
#include "semref/rng.hpp"
#include "support.hpp"

using namespace semref;

namespace {

using testing::jittered;
using testing::random_patch;
using testing::tiny_arch;

// Two classes told apart by brightness, laid out as random rectangles.
TrainingSample separable_scene(std::uint64_t seed, int size = 64, double noise = 0.05) {
  Rng rng(seed);
  LabelRaster labels(size, size, 2, 0);
  for (int k = 0; k < 6; ++k) {
    const int r0 = rng.uniform_int(0, size - 16), c0 = rng.uniform_int(0, size - 16);
    const int h = rng.uniform_int(8, 24), w = rng.uniform_int(8, 24);
    for (int r = r0; r < std::min(size, r0 + h); ++r) {
      for (int c = c0; c < std::min(size, c0 + w); ++c) labels.set(r, c, 1);
    }
  }
  MultiChannelRaster input(size, size, 6);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double base = labels.at(r, c) ? 0.75 : 0.25;
      for (int ch = 0; ch < 3; ++ch) input.at(r, c, ch) = static_cast<float>(base + rng.normal(0.0, noise));
    }
  }
  return {input, labels, {}};
}

TrainConfig quick_config(int epochs, std::uint64_t seed = 1) {
  TrainConfig c;
  c.learning_rate = 0.01;
  c.max_epochs = epochs;
  c.patches_per_epoch = 16;
  c.patch_size = 32;
  c.batch_size = 4;
  c.patience = epochs + 1;
  c.validation_fraction = 0.1;
  c.validation_tile = 16;
  c.seed = seed;
  return c;
}

GradientSample as_gradient_sample(const TrainingSample& s) {
  GradientSample out{s.input, {}};
  for (ClassId v : s.labels.cells()) out.labels.push_back(v);
  return out;
}

ClassWeights uniform_weights(int classes) { return {std::vector<double>(classes, 1.0), {}}; }

double accuracy(const ClassifierModel& model, const TrainingSample& s) {
  return confusion_metrics(predict(model, s.input).argmax_labels(), s.labels).overall;
}

}  // namespace

TEST_CASE("median frequency weights on a skewed five-class distribution") {
  const std::vector<double> freq{7.6, 31.3, 35.4, 23.5, 2.2};
  const auto w = median_frequency_weights(freq);
  const std::vector<double> expect{23.5 / 7.6, 23.5 / 31.3, 23.5 / 35.4, 1.0, 23.5 / 2.2};
  for (int k = 0; k < 5; ++k) CHECK(w.weight[k] == doctest::Approx(expect[k]).epsilon(1e-12));
  CHECK(std::abs(w.weight[3] - 1.0) <= 1e-9);
  CHECK(std::abs(w.weight[4] - 10.682) <= 1e-3);
  CHECK(w.weight[0] == doctest::Approx(3.092).epsilon(1e-3));
}

TEST_CASE("median frequency weights: symmetric and absent cases") {
  for (double v : median_frequency_weights(std::vector<double>{0.2, 0.2, 0.2, 0.2, 0.2}).weight) CHECK(v == 1.0);
  for (double v : median_frequency_weights(std::vector<double>{0.5, 0.5}).weight) CHECK(v == 1.0);
  // An absent class drops out of the median and gets weight 0.
  const auto w = median_frequency_weights(std::vector<double>{0.5, 0.0, 0.3, 0.2});
  CHECK(w.weight[1] == 0.0);
  CHECK(w.absent == std::vector<ClassId>{1});
  CHECK(w.weight[2] == doctest::Approx(1.0));
  const std::vector<ClassId> present{0, 1};
  CHECK_THROWS_AS(median_frequency_weights(std::vector<double>{1.0, 0.0}, present), Error);
}

TEST_CASE("class frequencies honor a mask") {
  const LabelRaster labels(1, 4, 3, std::vector<ClassId>{0, 0, 1, 2});
  auto f = class_frequencies(labels);
  CHECK(f[0] == doctest::Approx(0.5));
  const std::vector<std::uint8_t> mask{0, 1, 1, 0};
  f = class_frequencies(labels, mask);
  CHECK(f[0] == doctest::Approx(0.5));
  CHECK(f[1] == doctest::Approx(0.5));
  CHECK(f[2] == 0.0);
}

TEST_CASE("tiny model gradients match central differences") {
  const auto arch = tiny_arch();
  REQUIRE(arch.parameter_count() <= 500);
  const auto model = jittered(arch, 1);
  const auto sample = random_patch(8, 3, 2, 1);
  const ClassWeights weights{{1.0, 2.5}, {}};
  const double err = gradient_check(model, sample, weights);
  MESSAGE("max relative gradient error " << err);
  CHECK(err <= 1e-4);
}

TEST_CASE("gradients agree with central differences on random fixtures at some step") {
  // At h = 1e-4 about one fixture in six has a parameter whose step crosses a
  // ReLU or max-pool switch, and smaller steps lose digits on tiny gradients.
  // Every parameter must agree at one of the three steps.
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto model = jittered(tiny_arch(), seed);
    const auto sample = random_patch(8, 3, 2, seed);
    const ClassWeights weights{{1.0, 2.5}, {}};
    const auto grad = loss_and_gradient(model, sample, weights).gradient;
    double worst = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      double best = 1e9;
      for (double h : {1e-4, 1e-5, 1e-6}) {
        auto probe = model;
        probe.parameters[i] += h;
        const double up = sample_loss(probe, sample, weights);
        probe.parameters[i] -= 2.0 * h;
        const double down = sample_loss(probe, sample, weights);
        const double numeric = (up - down) / (2.0 * h);
        best = std::min(best, std::abs(grad[i] - numeric) / std::max({std::abs(grad[i]), std::abs(numeric), 1e-8}));
      }
      worst = std::max(worst, best);
    }
    CAPTURE(seed);
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("a corrupted backward rule is caught") {
  const auto model = jittered(tiny_arch(), 1);
  const auto sample = random_patch(8, 3, 2, 1);
  const ClassWeights weights{{1.0, 4.0}, {}};
  // Test double: backward pass that forgets the class weights.
  const GradientFunction unweighted = [](const ClassifierModel& m, const GradientSample& s, const ClassWeights&) {
    return loss_and_gradient(m, s, ClassWeights{{1.0, 1.0}, {}}).gradient;
  };
  CHECK(gradient_check(model, sample, weights, unweighted) > 1e-1);
  // Sign slip on the head bias.
  const GradientFunction flipped = [](const ClassifierModel& m, const GradientSample& s, const ClassWeights& w) {
    auto g = loss_and_gradient(m, s, w).gradient;
    g.back() = -g.back();
    return g;
  };
  CHECK(gradient_check(model, sample, weights, flipped) > 1e-1);
}

TEST_CASE("zero class weights give zero loss and gradients") {
  const auto model = jittered(tiny_arch(), 2);
  const auto sample = random_patch(8, 3, 2, 2);
  const ClassWeights zero{{0.0, 0.0}, {}};
  const auto lg = loss_and_gradient(model, sample, zero);
  CHECK(lg.loss == 0.0);
  CHECK(std::all_of(lg.gradient.begin(), lg.gradient.end(), [](double g) { return g == 0.0; }));
  CHECK(gradient_check(model, sample, zero) == 0.0);
}

TEST_CASE("softmax output is a simplex on random inputs") {
  Architecture arch;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto model = ClassifierModel::initialize(arch, seed);
    Rng rng(seed);
    const int h = rng.uniform_int(5, 70), w = rng.uniform_int(5, 70);
    MultiChannelRaster input(h, w, 6);
    for (auto& v : input.data()) v = static_cast<float>(rng.normal(0.0, 5.0));
    const auto probs = predict(model, input);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        double sum = 0.0;
        for (float p : probs.pixel(r, c)) {
          CHECK(p >= 0.0f);
          sum += p;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-5);
      }
    }
  }
}

TEST_CASE("a dominant head bias decides every pixel") {
  Architecture arch;
  ClassifierModel model{arch, std::vector<double>(arch.parameter_count(), 0.0)};
  // All weights zero: every activation is zero and the logits are the head biases.
  model.parameters[model.parameters.size() - arch.classes + cls::water] = 5.0;
  const auto probs = predict(model, MultiChannelRaster(1, 1, 6, 0.3f));
  CHECK(probs.argmax(0, 0) == cls::water);
  const double expect = std::exp(5.0) / (std::exp(5.0) + (arch.classes - 1));
  CHECK(probs.at(0, 0, cls::water) == doctest::Approx(expect).epsilon(1e-6));

  MultiChannelRaster field(9, 11, 6);
  Rng rng(4);
  for (auto& v : field.data()) v = static_cast<float>(rng.uniform());
  const auto labels = predict(model, field).argmax_labels();
  for (ClassId v : labels.cells()) CHECK(v == cls::water);
}

TEST_CASE("prediction is bitwise repeatable and tile-seam free") {
  const auto model = ClassifierModel::initialize(Architecture{}, 9);
  MultiChannelRaster input(150, 130, 6);
  Rng rng(9);
  for (auto& v : input.data()) v = static_cast<float>(rng.uniform());
  const auto a = predict(model, input);
  const auto b = predict(model, input);
  CHECK(a == b);
  // A crop predicts like the same window of the full raster away from the
  // crop's own borders.
  MultiChannelRaster crop(40, 40, 6);
  for (int r = 0; r < 40; ++r) {
    for (int c = 0; c < 40; ++c) {
      for (int k = 0; k < 6; ++k) crop.at(r, c, k) = input.at(r + 50, c + 60, k);
    }
  }
  const auto pc = predict(model, crop);
  for (int r = 17; r < 23; ++r) {
    for (int c = 17; c < 23; ++c) {
      CHECK(pc.at(r, c, 0) == doctest::Approx(a.at(r + 50, c + 60, 0)).epsilon(1e-5));
    }
  }
}

TEST_CASE("predict rejects the wrong channel count") {
  const auto model = ClassifierModel::initialize(Architecture{}, 1);
  CHECK_THROWS_AS(predict(model, MultiChannelRaster(8, 8, 3)), DimensionError);
}

TEST_CASE("zero epochs return the initial model") {
  const auto model = ClassifierModel::initialize({6, 2, 4, 8}, 3);
  const std::vector<TrainingSample> samples{separable_scene(1)};
  const auto result = train(model, samples, uniform_weights(2), quick_config(0));
  CHECK(result.model == model);
  CHECK(result.history.empty());
}

TEST_CASE("separable two-class scene is learned within 50 epochs") {
  const auto model = ClassifierModel::initialize({6, 2, 4, 8}, 1);
  const std::vector<TrainingSample> samples{separable_scene(1)};
  const GradientSample whole = as_gradient_sample(samples[0]);
  const double before = sample_loss(model, whole, uniform_weights(2));
  const auto one = train(model, samples, uniform_weights(2), quick_config(1));
  REQUIRE(one.history.size() == 1);
  const double after = sample_loss(one.model, whole, uniform_weights(2));
  CHECK(after < before);

  const auto full = train(model, samples, uniform_weights(2), quick_config(50));
  CHECK(full.history.size() <= 50);
  CHECK(full.history.back().train_accuracy >= 0.0);
  CHECK(accuracy(full.model, samples[0]) >= 99.0);
}

TEST_CASE("training is reproducible from its seed") {
  const auto model = ClassifierModel::initialize({6, 2, 4, 8}, 5);
  const std::vector<TrainingSample> samples{separable_scene(2)};
  const auto a = train(model, samples, uniform_weights(2), quick_config(3, 7));
  const auto b = train(model, samples, uniform_weights(2), quick_config(3, 7));
  CHECK(a.model == b.model);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].val_loss == b.history[i].val_loss);
  const auto c = train(model, samples, uniform_weights(2), quick_config(3, 8));
  CHECK_FALSE(a.model == c.model);
}

// Left third class 0, right third class 1, and a middle band whose pixels all
// look alike but are class 1 with probability 0.4. Unweighted, the band goes
// to class 0; with class 1 weighted 2x the optimum flips it.
TrainingSample ambiguous_band(std::uint64_t seed, int size = 48) {
  Rng rng(seed);
  LabelRaster labels(size, size, 2, 0);
  MultiChannelRaster input(size, size, 6);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const int third = 3 * c / size;
      const bool one = third == 2 || (third == 1 && rng.uniform() < 0.4);
      labels.set(r, c, one ? 1 : 0);
      const double base = third == 0 ? 0.2 : third == 1 ? 0.5 : 0.8;
      for (int ch = 0; ch < 3; ++ch) input.at(r, c, ch) = static_cast<float>(base + rng.normal(0.0, 0.02));
    }
  }
  return {input, labels, {}};
}

TEST_CASE("doubling a class weight does not lower that class's recall") {
  // Paired seeds, compared in total: checkpoint selection on plain validation
  // accuracy can keep an early epoch in any single run.
  double base_recall = 0.0, heavy_recall = 0.0;
  for (std::uint64_t seed = 3; seed < 11; ++seed) {
    const auto model = ClassifierModel::initialize({6, 2, 4, 8}, seed + 8);
    const std::vector<TrainingSample> samples{ambiguous_band(seed)};
    const auto config = quick_config(60, seed);
    const auto base = train(model, samples, ClassWeights{{1.0, 1.0}, {}}, config);
    const auto heavy = train(model, samples, ClassWeights{{1.0, 2.0}, {}}, config);
    auto recall = [&](const ClassifierModel& m) {
      return confusion_metrics(predict(m, samples[0].input).argmax_labels(), samples[0].labels).class_accuracy(1);
    };
    base_recall += recall(base.model) / 8.0;
    heavy_recall += recall(heavy.model) / 8.0;
  }
  MESSAGE("mean recall " << base_recall << " -> " << heavy_recall);
  CHECK(heavy_recall >= base_recall);
}

TEST_CASE("held-out tiles are excluded from the loss and recorded") {
  const auto model = ClassifierModel::initialize({6, 2, 4, 8}, 1);
  const std::vector<TrainingSample> samples{separable_scene(4)};
  const auto result = train(model, samples, uniform_weights(2), quick_config(2));
  REQUIRE(result.validation_mask.size() == 1);
  const auto held = std::count(result.validation_mask[0].begin(), result.validation_mask[0].end(), 1);
  CHECK(held > 0);
  CHECK(held % (16 * 16) == 0);
  CHECK(result.best_epoch >= 0);
}

TEST_CASE("split seed pins the held-out tiles") {
  const auto model = ClassifierModel::initialize({6, 2, 4, 8}, 1);
  const std::vector<TrainingSample> samples{separable_scene(4)};
  auto a = quick_config(1, 1);
  auto b = quick_config(1, 2);
  a.split_seed = b.split_seed = 42;
  CHECK(train(model, samples, uniform_weights(2), a).validation_mask ==
        train(model, samples, uniform_weights(2), b).validation_mask);
}

TEST_CASE("training rejects bad input") {
  const auto model = ClassifierModel::initialize({6, 2, 4, 8}, 1);
  auto bad = quick_config(1);
  bad.learning_rate = 0.0;
  const std::vector<TrainingSample> samples{separable_scene(1)};
  CHECK_THROWS_AS(train(model, samples, uniform_weights(2), bad), Error);
  CHECK_THROWS_AS(train(model, samples, uniform_weights(3), quick_config(1)), DimensionError);
  const std::vector<TrainingSample> small{separable_scene(1, 16)};
  CHECK_THROWS_AS(train(model, small, uniform_weights(2), quick_config(1)), DimensionError);
  auto diverge = quick_config(3);
  diverge.learning_rate = 1e12;
  CHECK_THROWS_AS(train(model, samples, uniform_weights(2), diverge), TrainingError);
}

TEST_CASE("checkpoints round-trip exactly") {
  const auto model = jittered(Architecture{}, 6);
  const auto path = std::filesystem::temp_directory_path() / "semref_model_test.srmodel";
  save_model(path, model);
  CHECK(load_model(path) == model);
}

#include "semref/classifier.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "semref/error.hpp"
#include "semref/rng.hpp"

namespace semref {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// `batch` images of height x width stacked along the pixel axis.
struct Geometry {
  int batch = 1;
  int height = 0;
  int width = 0;

  int pixels() const { return batch * height * width; }
  int index(int b, int r, int c) const { return (b * height + r) * width + c; }
  Geometry half() const { return {batch, (height + 1) / 2, (width + 1) / 2}; }
};

struct LayerShape {
  int out;
  int in;
  int fan_in;
  int fan_out;
};

constexpr int kLayers = 6;

std::array<LayerShape, kLayers> layer_shapes(const Architecture& a) {
  return {{{a.f1, 9 * a.in_channels, 9 * a.in_channels, 9 * a.f1},
           {a.f2, 9 * a.f1, 9 * a.f1, 9 * a.f2},
           {a.f2, 9 * a.f2, 9 * a.f2, 9 * a.f2},
           {a.f2, 9 * a.f2, 9 * a.f2, 9 * a.f2},
           {a.f1, a.f1 + a.f2, a.f1 + a.f2, a.f1},
           {a.classes, a.f1, a.f1, a.classes}}};
}

// Weights (out x in, column-major) followed by biases, per layer.
std::array<std::size_t, kLayers + 1> layer_offsets(const Architecture& a) {
  std::array<std::size_t, kLayers + 1> off{};
  const auto shapes = layer_shapes(a);
  for (int i = 0; i < kLayers; ++i) {
    off[i + 1] = off[i] + static_cast<std::size_t>(shapes[i].out) * (shapes[i].in + 1);
  }
  return off;
}

template <typename T>
void im2col(const Mat<T>& x, const Geometry& g, Mat<T>& cols) {
  const int ch = static_cast<int>(x.rows());
  cols.setZero(9 * ch, g.pixels());
  for (int b = 0; b < g.batch; ++b) {
    for (int r = 0; r < g.height; ++r) {
      for (int c = 0; c < g.width; ++c) {
        const int n = g.index(b, r, c);
        for (int k = 0; k < 9; ++k) {
          const int rr = r + k / 3 - 1;
          const int cc = c + k % 3 - 1;
          if (rr < 0 || cc < 0 || rr >= g.height || cc >= g.width) continue;
          cols.col(n).segment(k * ch, ch) = x.col(g.index(b, rr, cc));
        }
      }
    }
  }
}

template <typename T>
void col2im(const Mat<T>& dcols, const Geometry& g, int ch, Mat<T>& dx) {
  dx.setZero(ch, g.pixels());
  for (int b = 0; b < g.batch; ++b) {
    for (int r = 0; r < g.height; ++r) {
      for (int c = 0; c < g.width; ++c) {
        const int n = g.index(b, r, c);
        for (int k = 0; k < 9; ++k) {
          const int rr = r + k / 3 - 1;
          const int cc = c + k % 3 - 1;
          if (rr < 0 || cc < 0 || rr >= g.height || cc >= g.width) continue;
          dx.col(g.index(b, rr, cc)) += dcols.col(n).segment(k * ch, ch);
        }
      }
    }
  }
}

// 2x2 windows, clipped at odd borders. `arg` keeps the winning source pixel.
template <typename T>
void maxpool(const Mat<T>& x, const Geometry& g, Mat<T>& y, std::vector<int>& arg) {
  const Geometry h = g.half();
  const int ch = static_cast<int>(x.rows());
  y.resize(ch, h.pixels());
  arg.assign(static_cast<std::size_t>(ch) * h.pixels(), 0);
  for (int b = 0; b < g.batch; ++b) {
    for (int r = 0; r < h.height; ++r) {
      for (int c = 0; c < h.width; ++c) {
        const int m = h.index(b, r, c);
        for (int k = 0; k < ch; ++k) {
          int best = g.index(b, 2 * r, 2 * c);
          for (int dr = 0; dr < 2; ++dr) {
            for (int dc = 0; dc < 2; ++dc) {
              const int rr = 2 * r + dr;
              const int cc = 2 * c + dc;
              if (rr >= g.height || cc >= g.width) continue;
              const int n = g.index(b, rr, cc);
              if (x(k, n) > x(k, best)) best = n;
            }
          }
          y(k, m) = x(k, best);
          arg[static_cast<std::size_t>(m) * ch + k] = best;
        }
      }
    }
  }
}

template <typename T>
struct Cache {
  Geometry full;
  Geometry low;
  Mat<T> cols1, a1, pooled, cols2, a2, cols3, a3, cols4, a4, cat, a5, probs;
  std::vector<int> arg;
};

// Per-layer copies in Eigen-owned storage. Mapping the flat buffer directly
// lets its heap alignment pick the vector code path, and with it the
// rounding of the products.
template <typename T>
struct Params {
  std::array<std::size_t, kLayers + 1> off;
  std::array<LayerShape, kLayers> shapes;
  std::array<Mat<T>, kLayers> weights;
  std::array<Vec<T>, kLayers> biases;

  const Mat<T>& w(int i) const { return weights[i]; }
  const Vec<T>& b(int i) const { return biases[i]; }
};

template <typename T>
void conv(const Params<T>& p, int layer, const Mat<T>& in, Mat<T>& out, bool relu) {
  out.noalias() = p.w(layer) * in;
  out.colwise() += p.b(layer);
  if (relu) out = out.cwiseMax(T(0));
}

template <typename T>
void forward(const Architecture& arch, const Params<T>& p, const Mat<T>& x, const Geometry& g,
             Cache<T>& cache) {
  cache.full = g;
  cache.low = g.half();
  const Geometry& h = cache.low;

  im2col(x, g, cache.cols1);
  conv(p, 0, cache.cols1, cache.a1, true);
  maxpool(cache.a1, g, cache.pooled, cache.arg);
  im2col(cache.pooled, h, cache.cols2);
  conv(p, 1, cache.cols2, cache.a2, true);
  im2col(cache.a2, h, cache.cols3);
  conv(p, 2, cache.cols3, cache.a3, true);
  im2col(cache.a3, h, cache.cols4);
  conv(p, 3, cache.cols4, cache.a4, true);

  cache.cat.resize(arch.f1 + arch.f2, g.pixels());
  cache.cat.topRows(arch.f1) = cache.a1;
  for (int b = 0; b < g.batch; ++b) {
    for (int r = 0; r < g.height; ++r) {
      for (int c = 0; c < g.width; ++c) {
        cache.cat.col(g.index(b, r, c)).tail(arch.f2) = cache.a4.col(h.index(b, r / 2, c / 2));
      }
    }
  }
  conv(p, 4, cache.cat, cache.a5, true);
  conv(p, 5, cache.a5, cache.probs, false);

  auto& z = cache.probs;
  for (Eigen::Index n = 0; n < z.cols(); ++n) {
    auto col = z.col(n);
    col.array() -= col.maxCoeff();
    col = col.array().exp().matrix();
    col /= col.sum();
  }
}

template <typename T>
void accumulate(Eigen::Map<Mat<T>> dw, Eigen::Map<Vec<T>> db, const Mat<T>& dz, const Mat<T>& in) {
  Mat<T> w = dz * in.transpose();
  Vec<T> b = dz.rowwise().sum();
  dw += w;
  db += b;
}

template <typename T>
void relu_backward(Mat<T>& d, const Mat<T>& activation) {
  d = (activation.array() > T(0)).select(d.array(), T(0)).matrix();
}

// dlogits holds d(loss)/d(logits); writes the parameter gradient into grad.
template <typename T>
void backward(const Architecture& arch, const Params<T>& p, const Cache<T>& cache,
              const Mat<T>& dlogits, T* grad) {
  const Geometry& g = cache.full;
  const Geometry& h = cache.low;
  auto gw = [&](int i) {
    return Eigen::Map<Mat<T>>(grad + p.off[i], p.shapes[i].out, p.shapes[i].in);
  };
  auto gb = [&](int i) {
    return Eigen::Map<Vec<T>>(grad + p.off[i] + static_cast<std::size_t>(p.shapes[i].out) * p.shapes[i].in,
                              p.shapes[i].out);
  };

  accumulate(gw(5), gb(5), dlogits, cache.a5);
  Mat<T> d5 = p.w(5).transpose() * dlogits;
  relu_backward(d5, cache.a5);
  accumulate(gw(4), gb(4), d5, cache.cat);
  const Mat<T> dcat = p.w(4).transpose() * d5;

  Mat<T> da1 = dcat.topRows(arch.f1);
  Mat<T> d4 = Mat<T>::Zero(arch.f2, h.pixels());
  for (int b = 0; b < g.batch; ++b) {
    for (int r = 0; r < g.height; ++r) {
      for (int c = 0; c < g.width; ++c) {
        d4.col(h.index(b, r / 2, c / 2)) += dcat.col(g.index(b, r, c)).tail(arch.f2);
      }
    }
  }

  Mat<T> dcols;
  Mat<T> dprev;
  relu_backward(d4, cache.a4);
  accumulate(gw(3), gb(3), d4, cache.cols4);
  dcols.noalias() = p.w(3).transpose() * d4;
  col2im(dcols, h, arch.f2, dprev);

  Mat<T> d3 = std::move(dprev);
  relu_backward(d3, cache.a3);
  accumulate(gw(2), gb(2), d3, cache.cols3);
  dcols.noalias() = p.w(2).transpose() * d3;
  col2im(dcols, h, arch.f2, dprev);

  Mat<T> d2 = std::move(dprev);
  relu_backward(d2, cache.a2);
  accumulate(gw(1), gb(1), d2, cache.cols2);
  dcols.noalias() = p.w(1).transpose() * d2;
  Mat<T> dpooled;
  col2im(dcols, h, arch.f1, dpooled);

  for (Eigen::Index m = 0; m < dpooled.cols(); ++m) {
    for (int k = 0; k < arch.f1; ++k) {
      da1(k, cache.arg[static_cast<std::size_t>(m) * arch.f1 + k]) += dpooled(k, m);
    }
  }
  relu_backward(da1, cache.a1);
  accumulate(gw(0), gb(0), da1, cache.cols1);
}

struct Batch {
  Geometry geometry;
  Mat<float> input;  // channels x pixels
  std::vector<int> labels;
};

template <typename T>
double weighted_loss(const Mat<T>& probs, std::span<const int> labels,
                     const std::vector<double>& class_weight, Mat<T>* dlogits) {
  double total = 0.0;
  for (int y : labels) {
    if (y >= 0) total += class_weight[y];
  }
  if (dlogits) dlogits->setZero(probs.rows(), probs.cols());
  if (total <= 0.0) return 0.0;
  double loss = 0.0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const int y = labels[n];
    if (y < 0 || class_weight[y] == 0.0) continue;
    const double w = class_weight[y];
    loss -= w * std::log(std::max(static_cast<double>(probs(y, n)), 1e-30));
    if (dlogits) {
      auto col = dlogits->col(n);
      col = probs.col(n) * static_cast<T>(w / total);
      col(y) -= static_cast<T>(w / total);
    }
  }
  return loss / total;
}

template <typename T>
Params<T> params_of(const Architecture& arch, const T* base) {
  Params<T> p{layer_offsets(arch), layer_shapes(arch), {}, {}};
  for (int i = 0; i < kLayers; ++i) {
    const auto& s = p.shapes[i];
    p.weights[i] = Eigen::Map<const Mat<T>>(base + p.off[i], s.out, s.in);
    p.biases[i] = Eigen::Map<const Vec<T>>(base + p.off[i] + static_cast<std::size_t>(s.out) * s.in, s.out);
  }
  return p;
}

void check_weights(const ClassWeights& weights, int classes) {
  if (static_cast<int>(weights.weight.size()) != classes) {
    throw DimensionError("class weights cover " + std::to_string(weights.weight.size()) +
                         " classes, model has " + std::to_string(classes));
  }
}

Mat<double> sample_matrix(const MultiChannelRaster& input) {
  Mat<double> x(input.channels(), input.height() * input.width());
  for (int r = 0; r < input.height(); ++r) {
    for (int c = 0; c < input.width(); ++c) {
      for (int k = 0; k < input.channels(); ++k) x(k, r * input.width() + c) = input.at(r, c, k);
    }
  }
  return x;
}

void check_sample(const ClassifierModel& model, const GradientSample& sample) {
  if (sample.input.channels() != model.arch.in_channels) {
    throw DimensionError("sample has " + std::to_string(sample.input.channels()) +
                         " channels, model expects " + std::to_string(model.arch.in_channels));
  }
  if (sample.labels.size() != static_cast<std::size_t>(sample.input.height()) * sample.input.width()) {
    throw DimensionError("sample labels do not match its raster");
  }
}

}  // namespace

std::size_t Architecture::parameter_count() const { return layer_offsets(*this).back(); }

std::string Architecture::descriptor() const {
  std::ostringstream out;
  out << "in=" << in_channels << " classes=" << classes << " f1=" << f1 << " f2=" << f2
      << " rf=" << receptive_field() << " params=" << parameter_count();
  return out.str();
}

ClassifierModel ClassifierModel::initialize(const Architecture& arch, std::uint64_t seed) {
  if (arch.in_channels < 1 || arch.classes < 2 || arch.f1 < 1 || arch.f2 < 1 ||
      arch.f1 + arch.f2 > 64) {
    throw Error("invalid architecture: " + arch.descriptor());
  }
  ClassifierModel model{arch, std::vector<double>(arch.parameter_count(), 0.0)};
  Rng rng(seed);
  const auto shapes = layer_shapes(arch);
  const auto off = layer_offsets(arch);
  for (int i = 0; i < kLayers; ++i) {
    const double a = std::sqrt(6.0 / (shapes[i].fan_in + shapes[i].fan_out));
    const std::size_t n = static_cast<std::size_t>(shapes[i].out) * shapes[i].in;
    for (std::size_t j = 0; j < n; ++j) model.parameters[off[i] + j] = rng.uniform(-a, a);
  }
  return model;
}

ClassWeights median_frequency_weights(std::span<const double> frequencies,
                                      std::span<const ClassId> present) {
  ClassWeights out;
  out.weight.assign(frequencies.size(), 0.0);
  std::vector<double> observed;
  for (std::size_t c = 0; c < frequencies.size(); ++c) {
    const double f = frequencies[c];
    if (!std::isfinite(f) || f < 0.0) {
      throw Error("class " + std::to_string(c) + " has invalid frequency " + std::to_string(f));
    }
    if (f == 0.0) {
      if (std::find(present.begin(), present.end(), static_cast<ClassId>(c)) != present.end()) {
        throw Error("class " + std::to_string(c) + " occurs in the labels but has zero frequency");
      }
      out.absent.push_back(static_cast<ClassId>(c));
    } else {
      observed.push_back(f);
    }
  }
  if (observed.empty()) throw Error("no class has a positive frequency");
  std::sort(observed.begin(), observed.end());
  const std::size_t mid = observed.size() / 2;
  const double median =
      observed.size() % 2 ? observed[mid] : 0.5 * (observed[mid - 1] + observed[mid]);
  for (std::size_t c = 0; c < frequencies.size(); ++c) {
    if (frequencies[c] > 0.0) out.weight[c] = median / frequencies[c];
  }
  return out;
}

std::vector<double> class_frequencies(const LabelRaster& labels, std::span<const std::uint8_t> mask) {
  if (!mask.empty() && mask.size() != labels.size()) throw DimensionError("mask does not match labels");
  std::vector<double> counts(labels.class_count(), 0.0);
  double total = 0.0;
  const auto cells = labels.cells();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    counts[cells[i]] += 1.0;
    total += 1.0;
  }
  if (total > 0.0) {
    for (double& c : counts) c /= total;
  }
  return counts;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
  if (batch_size < 1) throw Error("batch size must be at least 1");
  if (max_epochs < 0) throw Error("max epochs must be non-negative");
  if (patches_per_epoch < 1) throw Error("patches per epoch must be at least 1");
  if (patch_size < 2) throw Error("patch size must be at least 2");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw Error("validation fraction must lie in (0, 1)");
  }
  if (validation_tile < 1) throw Error("validation tile must be at least 1");
  if (patience < 1) throw Error("patience must be at least 1");
}

LossGradient loss_and_gradient(const ClassifierModel& model, const GradientSample& sample,
                               const ClassWeights& weights) {
  check_sample(model, sample);
  check_weights(weights, model.arch.classes);
  const auto p = params_of(model.arch, model.parameters.data());
  const Geometry g{1, sample.input.height(), sample.input.width()};
  Cache<double> cache;
  forward(model.arch, p, sample_matrix(sample.input), g, cache);
  Mat<double> dlogits;
  LossGradient out;
  out.loss = weighted_loss(cache.probs, sample.labels, weights.weight, &dlogits);
  out.gradient.assign(model.parameters.size(), 0.0);
  backward(model.arch, p, cache, dlogits, out.gradient.data());
  return out;
}

double sample_loss(const ClassifierModel& model, const GradientSample& sample,
                   const ClassWeights& weights) {
  check_sample(model, sample);
  check_weights(weights, model.arch.classes);
  const auto p = params_of(model.arch, model.parameters.data());
  Cache<double> cache;
  forward(model.arch, p, sample_matrix(sample.input),
          Geometry{1, sample.input.height(), sample.input.width()}, cache);
  return weighted_loss<double>(cache.probs, sample.labels, weights.weight, nullptr);
}

double gradient_check(const ClassifierModel& model, const GradientSample& sample,
                      const ClassWeights& weights) {
  return gradient_check(model, sample, weights,
                        [](const ClassifierModel& m, const GradientSample& s, const ClassWeights& w) {
                          return loss_and_gradient(m, s, w).gradient;
                        });
}

double gradient_check(const ClassifierModel& model, const GradientSample& sample,
                      const ClassWeights& weights, const GradientFunction& analytic) {
  constexpr double h = 1e-4;
  const auto grad = analytic(model, sample, weights);
  if (grad.size() != model.parameters.size()) throw Error("gradient has the wrong length");
  ClassifierModel probe = model;
  double worst = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double saved = probe.parameters[i];
    probe.parameters[i] = saved + h;
    const double up = sample_loss(probe, sample, weights);
    probe.parameters[i] = saved - h;
    const double down = sample_loss(probe, sample, weights);
    probe.parameters[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    if (!std::isfinite(grad[i]) || !std::isfinite(numeric)) {
      throw Error("non-finite gradient at parameter " + std::to_string(i));
    }
    const double scale = std::max({std::abs(grad[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(grad[i] - numeric) / scale);
  }
  return worst;
}

namespace {

constexpr int kHalo = 16;
constexpr int kPredictTile = 64;

// Forward pass over a window of the input; returns probabilities per window pixel.
Mat<float> forward_window(const ClassifierModel& model, const std::vector<float>& params,
                          const MultiChannelRaster& input, int r0, int c0, int h, int w,
                          Cache<float>& cache) {
  Mat<float> x(input.channels(), h * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int k = 0; k < input.channels(); ++k) x(k, r * w + c) = input.at(r0 + r, c0 + c, k);
    }
  }
  forward(model.arch, params_of(model.arch, params.data()), x, Geometry{1, h, w}, cache);
  return std::move(cache.probs);
}

// Tiles with an even-aligned halo wider than the receptive field, so each
// output pixel sees the same context as a whole-image pass.
std::vector<float> predict_floats(const ClassifierModel& model, const std::vector<float>& params,
                                  const MultiChannelRaster& input) {
  const int H = input.height();
  const int W = input.width();
  const int K = model.arch.classes;
  std::vector<float> out(static_cast<std::size_t>(H) * W * K);
  Cache<float> cache;
  for (int tr = 0; tr < H; tr += kPredictTile) {
    for (int tc = 0; tc < W; tc += kPredictTile) {
      const int r0 = std::max(0, tr - kHalo);
      const int c0 = std::max(0, tc - kHalo);
      const int r1 = std::min(H, tr + kPredictTile + kHalo);
      const int c1 = std::min(W, tc + kPredictTile + kHalo);
      const int h = r1 - r0;
      const int w = c1 - c0;
      const Mat<float> probs = forward_window(model, params, input, r0, c0, h, w, cache);
      for (int r = tr; r < std::min(H, tr + kPredictTile); ++r) {
        for (int c = tc; c < std::min(W, tc + kPredictTile); ++c) {
          const auto col = probs.col((r - r0) * w + (c - c0));
          float* dst = &out[(static_cast<std::size_t>(r) * W + c) * K];
          for (int k = 0; k < K; ++k) dst[k] = col(k);
        }
      }
    }
  }
  return out;
}

std::vector<float> to_float(const std::vector<double>& v) {
  return std::vector<float>(v.begin(), v.end());
}

}  // namespace

ProbabilityRaster predict(const ClassifierModel& model, const MultiChannelRaster& input) {
  if (input.channels() != model.arch.in_channels) {
    throw DimensionError("input has " + std::to_string(input.channels()) +
                         " channels, model expects " + std::to_string(model.arch.in_channels));
  }
  return ProbabilityRaster(input.height(), input.width(), model.arch.classes,
                           predict_floats(model, to_float(model.parameters), input));
}

namespace {

struct Split {
  // Per sample: 0 excluded, 1 training, 2 validation.
  std::vector<std::vector<std::uint8_t>> role;
};

Split split_validation(std::span<const TrainingSample> samples, const TrainConfig& config, Rng& rng) {
  struct Tile {
    int sample, r0, c0;
  };
  std::vector<Tile> tiles;
  Split split;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& sm = samples[s];
    auto& role = split.role.emplace_back(sm.labels.size(), 1);
    if (!sm.mask.empty()) {
      for (std::size_t i = 0; i < role.size(); ++i) role[i] = sm.mask[i] ? 1 : 0;
    }
    for (int r = 0; r < sm.labels.height(); r += config.validation_tile) {
      for (int c = 0; c < sm.labels.width(); c += config.validation_tile) {
        tiles.push_back({static_cast<int>(s), r, c});
      }
    }
  }
  const std::size_t count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.validation_fraction * tiles.size())));
  if (count >= tiles.size()) throw Error("too few tiles to hold out a validation set");
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(tiles.size() - i - 1)));
    std::swap(tiles[i], tiles[j]);
    const Tile& t = tiles[i];
    const auto& sm = samples[t.sample];
    auto& role = split.role[t.sample];
    for (int r = t.r0; r < std::min(sm.labels.height(), t.r0 + config.validation_tile); ++r) {
      for (int c = t.c0; c < std::min(sm.labels.width(), t.c0 + config.validation_tile); ++c) {
        auto& v = role[static_cast<std::size_t>(r) * sm.labels.width() + c];
        if (v) v = 2;
      }
    }
  }
  return split;
}

Batch draw_batch(std::span<const TrainingSample> samples, const Split& split,
                 const TrainConfig& config, Rng& rng) {
  const int P = config.patch_size;
  Batch batch;
  batch.geometry = {config.batch_size, P, P};
  const int C = samples[0].input.channels();
  batch.input.resize(C, batch.geometry.pixels());
  batch.labels.assign(batch.geometry.pixels(), -1);
  for (int b = 0; b < config.batch_size; ++b) {
    const int s = rng.uniform_int(0, static_cast<int>(samples.size()) - 1);
    const auto& sm = samples[s];
    const int r0 = rng.uniform_int(0, sm.labels.height() - P);
    const int c0 = rng.uniform_int(0, sm.labels.width() - P);
    const bool flip_h = config.augment && rng.uniform() < 0.5;
    const bool flip_v = config.augment && rng.uniform() < 0.5;
    for (int r = 0; r < P; ++r) {
      for (int c = 0; c < P; ++c) {
        const int sr = r0 + (flip_v ? P - 1 - r : r);
        const int sc = c0 + (flip_h ? P - 1 - c : c);
        const int n = batch.geometry.index(b, r, c);
        for (int k = 0; k < C; ++k) batch.input(k, n) = sm.input.at(sr, sc, k);
        const std::size_t i = static_cast<std::size_t>(sr) * sm.labels.width() + sc;
        if (split.role[s][i] == 1) batch.labels[n] = sm.labels.at(sr, sc);
      }
    }
  }
  return batch;
}

struct Evaluation {
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

Evaluation evaluate(const ClassifierModel& model, const std::vector<float>& params,
                    std::span<const TrainingSample> samples, const Split& split,
                    const ClassWeights& weights) {
  long long train_total = 0, train_hit = 0, val_total = 0, val_hit = 0;
  double val_loss = 0.0, val_weight = 0.0;
  const int K = model.arch.classes;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto probs = predict_floats(model, params, samples[s].input);
    const auto cells = samples[s].labels.cells();
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const std::uint8_t role = split.role[s][i];
      if (!role) continue;
      const float* p = &probs[i * K];
      const int guess = static_cast<int>(std::max_element(p, p + K) - p);
      const bool hit = guess == cells[i];
      if (role == 1) {
        ++train_total;
        train_hit += hit;
      } else {
        ++val_total;
        val_hit += hit;
        const double w = weights.weight[cells[i]];
        val_loss -= w * std::log(std::max(static_cast<double>(p[cells[i]]), 1e-30));
        val_weight += w;
      }
    }
  }
  Evaluation e;
  if (train_total) e.train_accuracy = 100.0 * train_hit / train_total;
  if (val_total) e.val_accuracy = 100.0 * val_hit / val_total;
  if (val_weight > 0.0) e.val_loss = val_loss / val_weight;
  return e;
}

}  // namespace

TrainResult train(const ClassifierModel& model, std::span<const TrainingSample> samples,
                  const ClassWeights& weights, const TrainConfig& config) {
  config.validate();
  check_weights(weights, model.arch.classes);
  if (samples.empty()) throw Error("no training samples");
  for (const auto& sm : samples) {
    if (sm.input.channels() != model.arch.in_channels) {
      throw DimensionError("training input has " + std::to_string(sm.input.channels()) +
                           " channels, model expects " + std::to_string(model.arch.in_channels));
    }
    if (sm.input.height() != sm.labels.height() || sm.input.width() != sm.labels.width()) {
      throw DimensionError("training input and labels differ in size");
    }
    if (sm.labels.height() < config.patch_size || sm.labels.width() < config.patch_size) {
      throw DimensionError("patch size " + std::to_string(config.patch_size) +
                           " exceeds raster dimensions");
    }
    if (!sm.mask.empty() && sm.mask.size() != sm.labels.size()) {
      throw DimensionError("training mask does not match labels");
    }
  }

  TrainResult result{model, {}, -1, 0.0, false, {}};
  if (config.max_epochs == 0) return result;

  Rng rng(config.seed);
  Rng split_rng(config.split_seed.value_or(config.seed));
  const Split split = split_validation(samples, config, config.split_seed ? split_rng : rng);
  for (const auto& role : split.role) {
    auto& mask = result.validation_mask.emplace_back(role.size());
    for (std::size_t i = 0; i < role.size(); ++i) mask[i] = role[i] == 2;
  }

  std::vector<double> params = model.parameters;
  std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0);
  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  long long step = 0;
  const int steps_per_epoch = (config.patches_per_epoch + config.batch_size - 1) / config.batch_size;

  std::vector<float> fparams;
  std::vector<float> grad(params.size());
  Cache<float> cache;
  Mat<float> dlogits;
  int stale = 0;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    for (int b = 0; b < steps_per_epoch; ++b) {
      const Batch batch = draw_batch(samples, split, config, rng);
      fparams = to_float(params);
      const auto p = params_of(model.arch, fparams.data());
      forward(model.arch, p, batch.input, batch.geometry, cache);
      const double loss = weighted_loss(cache.probs, batch.labels, weights.weight, &dlogits);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b));
      }
      loss_sum += loss;
      std::fill(grad.begin(), grad.end(), 0.0f);
      backward(model.arch, p, cache, dlogits, grad.data());

      ++step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        params[i] -= config.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + adam_eps);
      }
    }

    fparams = to_float(params);
    const Evaluation e = evaluate(model, fparams, samples, split, weights);
    result.history.push_back(
        {epoch, loss_sum / steps_per_epoch, e.train_accuracy, e.val_loss, e.val_accuracy});

    if (result.best_epoch < 0 || e.val_accuracy > result.best_val_accuracy) {
      result.best_epoch = epoch;
      result.best_val_accuracy = e.val_accuracy;
      result.model.parameters = params;
      stale = 0;
    } else if (++stale >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

void save_model(const std::filesystem::path& path, const ClassifierModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "SRMODEL v1\n" << model.arch.descriptor() << "\n";
  for (double value : model.parameters) {
    auto bits = std::bit_cast<std::uint64_t>(value);
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    out.write(bytes, 8);
  }
  if (!out) throw Error("failed writing " + path.string());
}

ClassifierModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string magic;
  std::getline(in, magic);
  if (magic != "SRMODEL v1") throw FormatError(path.string() + ": not an SRMODEL v1 file");
  std::string line;
  std::getline(in, line);
  Architecture arch;
  std::size_t declared = 0;
  int rf = 0;
  std::istringstream fields(line);
  std::string field;
  int seen = 0;
  while (fields >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw FormatError("malformed descriptor field '" + field + "'");
    const std::string key = field.substr(0, eq);
    const long long value = std::stoll(field.substr(eq + 1));
    if (key == "in") arch.in_channels = static_cast<int>(value);
    else if (key == "classes") arch.classes = static_cast<int>(value);
    else if (key == "f1") arch.f1 = static_cast<int>(value);
    else if (key == "f2") arch.f2 = static_cast<int>(value);
    else if (key == "rf") rf = static_cast<int>(value);
    else if (key == "params") declared = static_cast<std::size_t>(value);
    else throw FormatError("unknown descriptor field '" + key + "'");
    ++seen;
  }
  if (seen != 6 || rf != arch.receptive_field() || declared != arch.parameter_count()) {
    throw FormatError(path.string() + ": descriptor '" + line + "' is inconsistent");
  }
  ClassifierModel model{arch, std::vector<double>(declared)};
  for (double& value : model.parameters) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw FormatError(path.string() + ": truncated parameters");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    value = std::bit_cast<double>(bits);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes");
  return model;
}

}  // namespace semref

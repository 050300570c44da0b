#include "semstego/pipeline/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "semstego/core/error.hpp"

namespace semstego::pipeline {

namespace {

using Rgb = std::array<double, 3>;

class Canvas {
 public:
  explicit Canvas(std::size_t size) : n_(size), px_({3, size, size}) {}

  double size() const { return static_cast<double>(n_); }

  void vertical_gradient(const Rgb& top, const Rgb& bottom) {
    for (std::size_t y = 0; y < n_; ++y) {
      const double t = static_cast<double>(y) / static_cast<double>(n_ - 1);
      for (std::size_t x = 0; x < n_; ++x) {
        for (std::size_t c = 0; c < 3; ++c) at(c, y, x) = (1 - t) * top[c] + t * bottom[c];
      }
    }
  }

  // Coverage-weighted paint; `coverage` maps pixel centres to [0, 1].
  template <typename F>
  void paint(const Rgb& color, F&& coverage) {
    for (std::size_t y = 0; y < n_; ++y) {
      for (std::size_t x = 0; x < n_; ++x) {
        const double a = std::clamp(coverage(x + 0.5, y + 0.5), 0.0, 1.0);
        if (a <= 0.0) continue;
        for (std::size_t c = 0; c < 3; ++c) at(c, y, x) = (1 - a) * at(c, y, x) + a * color[c];
      }
    }
  }

  void circle(const Rgb& color, double cx, double cy, double r) {
    paint(color, [&](double x, double y) { return r - std::hypot(x - cx, y - cy) + 0.5; });
  }

  void rect(const Rgb& color, double x0, double y0, double x1, double y1) {
    paint(color, [&](double x, double y) {
      const double ax = std::clamp(std::min(x - x0, x1 - x) + 0.5, 0.0, 1.0);
      const double ay = std::clamp(std::min(y - y0, y1 - y) + 0.5, 0.0, 1.0);
      return ax * ay;
    });
  }

  // Isosceles triangle with apex (cx, apex_y) and base half-width hw at base_y.
  void triangle(const Rgb& color, double cx, double apex_y, double base_y, double hw) {
    paint(color, [&](double x, double y) {
      const double t = (y - apex_y) / (base_y - apex_y);
      const double half = hw * std::max(t, 0.0);
      const double ax = std::clamp(half - std::abs(x - cx) + 0.5, 0.0, 1.0);
      const double ay = std::clamp(std::min(y - apex_y, base_y - y) + 0.5, 0.0, 1.0);
      return ax * ay;
    });
  }

  Tensor take() { return std::move(px_); }

 private:
  double& at(std::size_t c, std::size_t y, std::size_t x) { return px_[(c * n_ + y) * n_ + x]; }

  std::size_t n_;
  Tensor px_;
};

struct Jitter {
  SeededRng& rng;
  double uniform(double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }
  Rgb color(const Rgb& base, double amount = 0.08) {
    Rgb out;
    for (std::size_t c = 0; c < 3; ++c) out[c] = std::clamp(base[c] + uniform(-amount, amount), 0.0, 1.0);
    return out;
  }
};

void draw_eiffel_tower(Canvas& cv, Jitter& j, double s) {
  cv.vertical_gradient(j.color({0.45, 0.65, 0.92}), j.color({0.78, 0.87, 0.96}));
  const double cx = s / 2 + j.uniform(-3, 3);
  const double top = s * j.uniform(0.08, 0.18);
  const double base = s * j.uniform(0.9, 0.98);
  const double hw = s * j.uniform(0.22, 0.3);
  const Rgb iron = j.color({0.35, 0.28, 0.22}, 0.05);
  cv.triangle(iron, cx, top, base, hw);
  const double deck = top + 0.55 * (base - top);
  cv.rect(iron, cx - hw * 0.75, deck - 1, cx + hw * 0.75, deck + 1);
  cv.circle(j.color({0.78, 0.87, 0.96}, 0.03), cx, base + 1, hw * 0.45);
}

void draw_tree(Canvas& cv, Jitter& j, double s) {
  cv.vertical_gradient(j.color({0.7, 0.85, 0.98}), j.color({0.85, 0.92, 0.98}));
  cv.rect(j.color({0.3, 0.62, 0.22}), 0, s * 0.72, s, s);
  const double cx = s / 2 + j.uniform(-4, 4);
  const double r = s * j.uniform(0.24, 0.32);
  const double cy = s * j.uniform(0.33, 0.42);
  cv.rect(j.color({0.45, 0.3, 0.15}, 0.05), cx - 2, cy, cx + 2, s * 0.9);
  cv.circle(j.color({0.1, 0.5, 0.12}), cx, cy, r);
}

void draw_chimpanzee(Canvas& cv, Jitter& j, double s) {
  cv.vertical_gradient(j.color({0.12, 0.4, 0.15}), j.color({0.05, 0.25, 0.08}));
  const double cx = s / 2 + j.uniform(-3, 3);
  const double cy = s / 2 + j.uniform(-3, 3);
  const double r = s * j.uniform(0.26, 0.32);
  const Rgb fur = j.color({0.22, 0.15, 0.1}, 0.05);
  cv.circle(fur, cx - r * 0.95, cy - r * 0.1, r * 0.35);
  cv.circle(fur, cx + r * 0.95, cy - r * 0.1, r * 0.35);
  cv.circle(fur, cx, cy, r);
  cv.circle(j.color({0.75, 0.6, 0.45}), cx, cy + r * 0.3, r * 0.55);
  cv.circle({0.05, 0.03, 0.02}, cx - r * 0.35, cy - r * 0.2, 1.2);
  cv.circle({0.05, 0.03, 0.02}, cx + r * 0.35, cy - r * 0.2, 1.2);
}

void draw_lion(Canvas& cv, Jitter& j, double s) {
  cv.vertical_gradient(j.color({0.95, 0.85, 0.55}), j.color({0.85, 0.7, 0.35}));
  const double cx = s / 2 + j.uniform(-3, 3);
  const double cy = s / 2 + j.uniform(-3, 3);
  const double r = s * j.uniform(0.3, 0.38);
  cv.circle(j.color({0.65, 0.32, 0.08}), cx, cy, r);
  cv.circle(j.color({0.92, 0.65, 0.2}), cx, cy, r * 0.62);
  cv.circle({0.25, 0.12, 0.05}, cx, cy + r * 0.15, 1.5);
}

void draw_cabin(Canvas& cv, Jitter& j, double s) {
  cv.vertical_gradient(j.color({0.8, 0.88, 0.95}), j.color({0.96, 0.96, 0.98}, 0.03));
  const double cx = s / 2 + j.uniform(-3, 3);
  const double w = s * j.uniform(0.25, 0.32);
  const double roof_base = s * j.uniform(0.45, 0.55);
  const double ground = s * j.uniform(0.85, 0.92);
  cv.rect(j.color({0.5, 0.32, 0.16}), cx - w, roof_base, cx + w, ground);
  cv.triangle(j.color({0.75, 0.15, 0.12}), cx, roof_base - s * 0.3, roof_base, w * 1.3);
  cv.rect({0.2, 0.12, 0.06}, cx - 2, ground - s * 0.2, cx + 2, ground);
}

void draw_person(Canvas& cv, Jitter& j, double s) {
  cv.vertical_gradient(j.color({0.6, 0.6, 0.62}), j.color({0.45, 0.45, 0.48}));
  static const Rgb shirts[] = {{0.15, 0.3, 0.8}, {0.8, 0.2, 0.5}, {0.2, 0.7, 0.7}, {0.9, 0.9, 0.2}};
  const double cx = s / 2 + j.uniform(-4, 4);
  const double head_y = s * j.uniform(0.18, 0.26);
  const double hr = s * j.uniform(0.1, 0.13);
  const Rgb shirt = j.color(shirts[j.rng.uniform_index(4)], 0.05);
  const double torso_top = head_y + hr + 1;
  const double torso_bottom = torso_top + s * 0.35;
  cv.rect(shirt, cx - s * 0.15, torso_top, cx + s * 0.15, torso_bottom);
  cv.rect({0.15, 0.15, 0.25}, cx - s * 0.13, torso_bottom, cx - 1, s);
  cv.rect({0.15, 0.15, 0.25}, cx + 1, torso_bottom, cx + s * 0.13, s);
  cv.circle(j.color({0.95, 0.76, 0.62}, 0.05), cx, head_y, hr);
}

}  // namespace

const std::vector<std::string>& class_labels() {
  static const std::vector<std::string> labels{"eiffel_tower", "tree", "chimpanzee",
                                               "lion",         "cabin", "person"};
  return labels;
}

ImageTensor render_class_image(const std::string& label, SeededRng& rng, std::size_t size) {
  if (size < 8) throw DimensionError("image size must be at least 8");
  Canvas cv(size);
  Jitter j{rng};
  const double s = static_cast<double>(size);
  if (label == "eiffel_tower") draw_eiffel_tower(cv, j, s);
  else if (label == "tree") draw_tree(cv, j, s);
  else if (label == "chimpanzee") draw_chimpanzee(cv, j, s);
  else if (label == "lion") draw_lion(cv, j, s);
  else if (label == "cabin") draw_cabin(cv, j, s);
  else if (label == "person") draw_person(cv, j, s);
  else throw NotFoundError("unknown class label '" + label + "'");
  return ImageTensor::from_tensor(cv.take(), label);
}

ImageTensor dataset_image(Split split, std::size_t index, std::size_t size, std::uint64_t seed) {
  const auto& labels = class_labels();
  const std::uint32_t stream = (static_cast<std::uint32_t>(split) << 24) |
                               static_cast<std::uint32_t>(index & 0xFFFFFF);
  SeededRng rng(seed, make_stream_id(StreamStage::dataset, stream));
  return render_class_image(labels[index % labels.size()], rng, size);
}

Dataset make_dataset(const DatasetSettings& settings, std::size_t image_size, std::uint64_t seed) {
  Dataset d;
  d.id = "synthetic6-s" + std::to_string(image_size) + "-seed" + std::to_string(seed) + "-" +
         std::to_string(settings.train_size) + "/" + std::to_string(settings.validation_size) +
         "/" + std::to_string(settings.test_size);
  for (std::size_t i = 0; i < settings.train_size; ++i)
    d.train.push_back(dataset_image(Split::train, i, image_size, seed));
  for (std::size_t i = 0; i < settings.validation_size; ++i)
    d.validation.push_back(dataset_image(Split::validation, i, image_size, seed));
  for (std::size_t i = 0; i < settings.test_size; ++i)
    d.test.push_back(dataset_image(Split::test, i, image_size, seed));
  return d;
}

}  // namespace semstego::pipeline

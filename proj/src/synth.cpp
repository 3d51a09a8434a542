// SPDX-License-Identifier: Apache-2.0
#include "cliff/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cliff/errors.hpp"

namespace cliff {

std::string_view thickness_name(Thickness t) {
  switch (t) {
    case Thickness::Mono: return "Mono";
    case Thickness::Few: return "Few";
    case Thickness::Thick: return "Thick";
  }
  return "?";
}

Thickness thickness_from_index(std::size_t index) {
  if (index >= kNumClasses) throw IndexError("thickness class index " + std::to_string(index) + " >= 3");
  return static_cast<Thickness>(index);
}

Thickness parse_thickness(std::string_view name) {
  for (std::size_t i = 0; i < kNumClasses; ++i)
    if (thickness_name(static_cast<Thickness>(i)) == name) return static_cast<Thickness>(i);
  throw DataError("unknown thickness class '" + std::string(name) + "'");
}

Rgb MaterialProfile::effective_contrast(Thickness t) const {
  const double s = std::sin(interference_phase + kClassPhaseShift * static_cast<double>(t));
  const auto& c = contrast_per_class[static_cast<std::size_t>(t)];
  const auto f = static_cast<float>(s * s);
  return {c[0] * f, c[1] * f, c[2] * f};
}

void MaterialProfile::validate() const {
  if (name.empty()) throw ParameterError("material profile needs a name");
  for (float b : base_reflectance)
    if (!(b >= 0.0f && b <= 1.0f))
      throw ParameterError("material '" + name + "': base reflectance outside [0,1]");
  for (const auto& c : contrast_per_class)
    for (float v : c)
      if (!(v >= -1.0f && v <= 1.0f))
        throw ParameterError("material '" + name + "': contrast outside [-1,1]");
  if (!(noise_std >= 0.0f)) throw ParameterError("material '" + name + "': noise_std must be >= 0");
  if (!std::isfinite(interference_phase))
    throw ParameterError("material '" + name + "': interference phase must be finite");
}

std::vector<MaterialProfile> default_profiles() {
  // Each thickness class shifts the flake colour along its own hue so that
  // classes are separable inside a material; substrates and hues differ
  // between materials.
  return {
      {"BN", {0.56f, 0.52f, 0.64f},
       {{{-0.02f, -0.04f, 0.10f}, {0.03f, 0.13f, -0.03f}, {0.17f, -0.02f, -0.08f}}},
       1.18f, 0.020f},
      {"Graphene", {0.48f, 0.44f, 0.58f},
       {{{-0.09f, -0.07f, 0.01f}, {0.02f, -0.14f, 0.08f}, {0.10f, 0.08f, -0.16f}}},
       1.10f, 0.025f},
      {"MoS2", {0.52f, 0.58f, 0.46f},
       {{{0.11f, -0.05f, 0.01f}, {-0.10f, 0.03f, 0.12f}, {-0.03f, -0.17f, -0.12f}}},
       1.25f, 0.020f},
      {"WTe2", {0.62f, 0.56f, 0.50f},
       {{{-0.03f, 0.10f, -0.08f}, {0.14f, 0.09f, 0.06f}, {-0.16f, -0.05f, 0.13f}}},
       1.05f, 0.030f},
  };
}

double FlakeGeometry::illumination(std::size_t x, std::size_t y, std::size_t size) const {
  const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(size) * 2.0 - 1.0;
  const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(size) * 2.0 - 1.0;
  const double c = std::cos(illumination_angle), s = std::sin(illumination_angle);
  return 1.0 + illumination_amplitude * (c * u + s * v) / (std::abs(c) + std::abs(s));
}

bool FlakeGeometry::contains_pixel(std::size_t x, std::size_t y) const {
  const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
  bool any_pos = false, any_neg = false;
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    const auto& a = vertices[i];
    const auto& b = vertices[(i + 1) % vertices.size()];
    const double cross = (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0]);
    any_pos = any_pos || cross > 0.0;
    any_neg = any_neg || cross < 0.0;
  }
  return !(any_pos && any_neg);
}

namespace {

// Convex polygon inscribed in a circle, scaled to cover a target fraction of
// the image and placed fully inside it.
std::vector<std::array<double, 2>> draw_polygon(Rng& rng, std::size_t size) {
  const auto n = static_cast<std::size_t>(5 + rng.index(5));
  const double fraction = rng.uniform(0.12, 0.48);
  const double extent = static_cast<double>(size);
  const double max_radius = extent / 2.0 - 0.5;
  std::vector<double> angles(n);
  for (;;) {
    const double start = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t k = 0; k < n; ++k)
      angles[k] = start + (static_cast<double>(k) + rng.uniform(-0.35, 0.35)) * 2.0 * std::numbers::pi /
                              static_cast<double>(n);
    double unit_area = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double next = k + 1 < n ? angles[k + 1] : angles[0] + 2.0 * std::numbers::pi;
      unit_area += 0.5 * std::sin(next - angles[k]);
    }
    const double radius = std::sqrt(fraction * extent * extent / unit_area);
    if (radius > max_radius) continue;
    const double cx = rng.uniform(radius, extent - radius);
    const double cy = rng.uniform(radius, extent - radius);
    std::vector<std::array<double, 2>> vertices(n);
    for (std::size_t k = 0; k < n; ++k)
      vertices[k] = {cx + radius * std::cos(angles[k]), cy + radius * std::sin(angles[k])};
    return vertices;
  }
}

}  // namespace

RenderedFlake render_flake_detailed(const MaterialProfile& profile, std::size_t material_id,
                                    Thickness thickness, Rng& rng, std::size_t size) {
  if (size < 16) throw ParameterError("image size must be >= 16, got " + std::to_string(size));
  RenderedFlake out;
  FlakeGeometry& geo = out.geometry;
  geo.vertices = draw_polygon(rng, size);
  geo.illumination_amplitude = rng.uniform(0.0, 0.05);
  geo.illumination_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);

  const Rgb contrast = profile.effective_contrast(thickness);
  const std::size_t plane = size * size;
  std::vector<float> pixels(3 * plane);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const bool inside = geo.contains_pixel(x, y);
      const double light = geo.illumination(x, y, size);
      for (std::size_t c = 0; c < 3; ++c) {
        const double r = profile.base_reflectance[c] + (inside ? contrast[c] : 0.0f);
        pixels[c * plane + y * size + x] = static_cast<float>(r * light);
      }
    }
  if (profile.noise_std > 0.0f)
    for (auto& p : pixels) p += static_cast<float>(rng.normal() * profile.noise_std);
  for (auto& p : pixels) p = std::clamp(p, 0.0f, 1.0f);

  out.sample.image = Tensor::from_data({3, size, size}, std::move(pixels));
  out.sample.thickness = thickness;
  out.sample.material_id = material_id;
  out.sample.material_name = profile.name;
  return out;
}

FlakeSample render_flake(const MaterialProfile& profile, std::size_t material_id, Thickness thickness,
                         Rng& rng, std::size_t size) {
  return render_flake_detailed(profile, material_id, thickness, rng, size).sample;
}

namespace {

std::vector<FlakeSample> render_split(const MaterialProfile& profile, std::size_t material_id,
                                      std::size_t count, std::uint64_t split_seed, std::size_t size) {
  std::vector<FlakeSample> samples(count);
  const auto n = static_cast<long long>(count);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const std::uint64_t seed = derive_seed(split_seed, idx);
    Rng rng(seed);
    samples[idx] = render_flake(profile, material_id, thickness_from_index(idx % kNumClasses), rng, size);
    samples[idx].seed = seed;
  }
  return samples;
}

std::array<std::size_t, kNumClasses> class_counts(const std::vector<FlakeSample>& samples) {
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& s : samples) ++counts[s.label()];
  return counts;
}

}  // namespace

DatasetSplit generate_material_task(const MaterialProfile& profile, std::size_t material_id,
                                    std::size_t n_train, std::size_t n_val, std::uint64_t seed,
                                    std::size_t size) {
  if (n_train < kNumClasses || n_val < kNumClasses)
    throw ParameterError("each split needs at least 3 samples (one per class), got n_train=" +
                         std::to_string(n_train) + " n_val=" + std::to_string(n_val));
  profile.validate();
  DatasetSplit split;
  split.seed = seed;
  split.train = render_split(profile, material_id, n_train, derive_seed(seed, 1), size);
  split.validation = render_split(profile, material_id, n_val, derive_seed(seed, 2), size);
  split.train_counts = class_counts(split.train);
  split.validation_counts = class_counts(split.validation);
  return split;
}

AugmentPlan draw_augment_plan(Rng& rng) {
  AugmentPlan plan;
  plan.horizontal_flip = rng.coin();
  plan.vertical_flip = rng.coin();
  if (rng.coin()) plan.quarter_turns = 1 + static_cast<int>(rng.index(3));
  plan.jitter = rng.coin();
  if (plan.jitter)
    for (auto& f : plan.jitter_factors) f = static_cast<float>(rng.uniform(0.9, 1.1));
  return plan;
}

FlakeSample apply_augment(const FlakeSample& sample, const AugmentPlan& plan) {
  const std::size_t h = sample.image.dim(1), w = sample.image.dim(2);
  const auto src = sample.image.data();
  std::vector<float> out(src.begin(), src.end());
  std::vector<float> tmp(out.size());
  const std::size_t plane = h * w;

  auto remap = [&](auto&& source_of) {
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          auto [sy, sx] = source_of(y, x);
          tmp[c * plane + y * w + x] = out[c * plane + sy * w + sx];
        }
    out.swap(tmp);
  };
  if (plan.horizontal_flip) remap([&](std::size_t y, std::size_t x) { return std::pair{y, w - 1 - x}; });
  if (plan.vertical_flip) remap([&](std::size_t y, std::size_t x) { return std::pair{h - 1 - y, x}; });
  if (plan.quarter_turns % 4 != 0) {
    if (h != w) throw DimensionError("rotation augment needs a square image");
    for (int t = 0; t < plan.quarter_turns % 4; ++t)
      remap([&](std::size_t y, std::size_t x) { return std::pair{x, w - 1 - y}; });
  }
  if (plan.jitter)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < plane; ++i)
        out[c * plane + i] = std::clamp(out[c * plane + i] * plan.jitter_factors[c], 0.0f, 1.0f);

  FlakeSample result = sample;
  result.image = Tensor::from_data(sample.image.shape(), std::move(out));
  return result;
}

FlakeSample augment(const FlakeSample& sample, Rng& rng) {
  return apply_augment(sample, draw_augment_plan(rng));
}

std::uint64_t task_seed(std::uint64_t root_seed, std::size_t material_index) {
  return derive_seed(root_seed, 0x7A5C0000ULL + material_index);
}

std::vector<MaterialTask> default_benchmark(std::uint64_t seed, std::size_t n_train, std::size_t n_val,
                                           std::size_t size) {
  std::vector<MaterialTask> tasks;
  auto profiles = default_profiles();
  for (std::size_t m = 0; m < profiles.size(); ++m) {
    auto split = generate_material_task(profiles[m], m, n_train, n_val, task_seed(seed, m), size);
    tasks.push_back({std::move(profiles[m]), std::move(split)});
  }
  return tasks;
}

}  // namespace cliff

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cliff/rng.hpp"
#include "cliff/tensor.hpp"

namespace cliff {

enum class Thickness : std::uint8_t { Mono = 0, Few = 1, Thick = 2 };
inline constexpr std::size_t kNumClasses = 3;

std::string_view thickness_name(Thickness t);
Thickness thickness_from_index(std::size_t index);
Thickness parse_thickness(std::string_view name);

using Rgb = std::array<float, 3>;

/// Three-band reflectance model of one material on its substrate.
struct MaterialProfile {
  std::string name;
  Rgb base_reflectance{};
  /// Per-class RGB offset of the flake relative to the substrate, before
  /// interference modulation.
  std::array<Rgb, kNumClasses> contrast_per_class{};
  float interference_phase = 0.0f;
  float noise_std = 0.0f;

  /// Offset actually painted for a class: contrast * sin^2(phase + class shift).
  Rgb effective_contrast(Thickness t) const;
  /// Throws ParameterError when a value is out of range.
  void validate() const;
};

/// Phase step between consecutive thickness classes.
inline constexpr float kClassPhaseShift = 0.3926990817f;  // pi/8

/// BN, Graphene, MoS2, WTe2 in benchmark order.
std::vector<MaterialProfile> default_profiles();

struct FlakeSample {
  Tensor image;  // [3, H, W], values in [0, 1]
  Thickness thickness = Thickness::Mono;
  std::size_t material_id = 0;
  std::string material_name;
  std::uint64_t seed = 0;  // seed the image was rendered from

  std::size_t label() const { return static_cast<std::size_t>(thickness); }
  /// Index in the concatenated class-by-material label space.
  std::size_t global_label() const { return material_id * kNumClasses + label(); }
};

/// What the renderer drew, for tests that recompute statistics from geometry.
struct FlakeGeometry {
  std::vector<std::array<double, 2>> vertices;  // pixel coords (x, y), counter-clockwise
  double illumination_amplitude = 0.0;          // in [0, 0.05]
  double illumination_angle = 0.0;

  /// Multiplicative illumination at pixel (x, y) of a size x size image.
  double illumination(std::size_t x, std::size_t y, std::size_t size) const;
  /// Whether the pixel center of (x, y) lies inside the polygon.
  bool contains_pixel(std::size_t x, std::size_t y) const;
};

struct RenderedFlake {
  FlakeSample sample;
  FlakeGeometry geometry;
};

inline constexpr std::size_t kDefaultImageSize = 32;

RenderedFlake render_flake_detailed(const MaterialProfile& profile, std::size_t material_id,
                                    Thickness thickness, Rng& rng,
                                    std::size_t size = kDefaultImageSize);
FlakeSample render_flake(const MaterialProfile& profile, std::size_t material_id,
                         Thickness thickness, Rng& rng, std::size_t size = kDefaultImageSize);

struct DatasetSplit {
  std::vector<FlakeSample> train;
  std::vector<FlakeSample> validation;
  std::uint64_t seed = 0;
  std::array<std::size_t, kNumClasses> train_counts{};
  std::array<std::size_t, kNumClasses> validation_counts{};
};

/// Class-balanced split; sample i of a split has class i mod 3, so a
/// remainder goes to Mono first, then Few. Rendering runs in parallel; each
/// sample has its own derived seed so the output is schedule-independent.
DatasetSplit generate_material_task(const MaterialProfile& profile, std::size_t material_id,
                                    std::size_t n_train, std::size_t n_val, std::uint64_t seed,
                                    std::size_t size = kDefaultImageSize);

/// Augmentation choices drawn for one sample.
struct AugmentPlan {
  bool horizontal_flip = false;
  bool vertical_flip = false;
  int quarter_turns = 0;  // 0..3, counter-clockwise
  bool jitter = false;
  Rgb jitter_factors{1.0f, 1.0f, 1.0f};
};

AugmentPlan draw_augment_plan(Rng& rng);
FlakeSample apply_augment(const FlakeSample& sample, const AugmentPlan& plan);
FlakeSample augment(const FlakeSample& sample, Rng& rng);

struct MaterialTask {
  MaterialProfile profile;
  DatasetSplit split;
};

inline constexpr std::size_t kDefaultTrainPerTask = 300;
inline constexpr std::size_t kDefaultValPerTask = 90;

/// Seed of task `material_index` under a root seed; adding tasks never
/// changes earlier ones.
std::uint64_t task_seed(std::uint64_t root_seed, std::size_t material_index);

std::vector<MaterialTask> default_benchmark(std::uint64_t seed,
                                           std::size_t n_train = kDefaultTrainPerTask,
                                           std::size_t n_val = kDefaultValPerTask,
                                           std::size_t size = kDefaultImageSize);

}  // namespace cliff

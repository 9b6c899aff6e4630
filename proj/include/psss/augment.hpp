#pragma once

#include "psss/core.hpp"

namespace psss {

/// Weak policy = flips. Strong policy = the same flips followed by color jitter,
/// optional Gaussian blur and cutout.
struct AugmentConfig {
  double hflip_p = 0.5;
  double vflip_p = 0.5;
  double brightness = 0.3;  // factor drawn from [1 - b, 1 + b]
  double contrast = 0.3;
  double saturation = 0.2;
  double blur_p = 0.5;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
  int cutout_count = 1;
  int cutout_size = 64;
  std::uint8_t cutout_fill = 127;

  void validate() const;
};

/// The realized geometric transform shared by the weak and strong views.
struct GeometryRecord {
  Size2 input;
  bool hflip = false;
  bool vflip = false;

  bool identity() const noexcept { return !hflip && !vflip; }
  friend bool operator==(const GeometryRecord&, const GeometryRecord&) = default;
};

struct AugmentedPair {
  Image weak;
  Image strong;
  GeometryRecord geometry;
};

GeometryRecord draw_geometry(Size2 input, const AugmentConfig& cfg, Rng& rng);

/// Applies a geometry record to any raster (images or label maps). Values are moved,
/// never interpolated.
Raster apply_geometry(const Raster& raster, const GeometryRecord& geometry);

/// Throws kShapeMismatch if the mask size differs from the recorded input size.
LabelMap transform_mask(const LabelMap& mask, const GeometryRecord& geometry);

/// Color jitter, blur and cutout. Draws from `rng` in a fixed order.
Image photometric(const Image& image, const AugmentConfig& cfg, Rng& rng);

/// Draws one geometry, returns the weak view and the strong view built on top of it.
AugmentedPair apply_pair(const Image& image, const AugmentConfig& cfg, Rng& rng);

}  // namespace psss

#pragma once

#include <filesystem>
#include <string>
#include <utility>

#include "psss/core.hpp"
#include "psss/manifest.hpp"

namespace psss {

struct ColorRange {
  Rgb lo;
  Rgb hi;
};

/// Parameters of one procedurally generated leaf. Drawing is deterministic in `seed`.
struct VeinSpec {
  std::uint64_t seed = 0;
  Size2 canvas{512, 512};
  int width_v1 = 8;
  int width_v2 = 4;
  int width_v3 = 2;
  int n_secondary = 10;
  int n_tertiary_per_secondary = 10;
  ColorRange lamina{{120, 165, 70}, {175, 215, 125}};
  ColorRange vein{{45, 75, 25}, {95, 130, 65}};
  /// Stroke opacity per order; fine veins are drawn fainter than the midvein.
  double opacity_v1 = 0.95;
  double opacity_v2 = 0.8;
  double opacity_v3 = 0.55;
  double noise_level = 0.35;  // additive Gaussian noise, sigma = 24 * noise_level gray levels

  /// Throws kInvalidArgument unless width_v1 > width_v2 > width_v3 >= 1, counts >= 0,
  /// canvas >= 64 on both sides and noise_level in [0, 1].
  void validate() const;
};

struct GeneratedLeaf {
  Image image;
  SegMask mask;
};

GeneratedLeaf generate(const VeinSpec& spec);

/// V1/V2 keep their labels; background and V3 become kUnknownLabel.
PartialMask degrade_to_partial(const SegMask& mask);

struct RegimeCounts {
  int full = 6;
  int partial = 6;
  int unlabeled = 60;
};

struct EmitOptions {
  std::string species = "synthetic";
  /// Extra fully labeled leaves placed in the val and test splits.
  int val = 0;
  int test = 0;
};

/// Writes images/, masks/ and manifest.txt under `out_dir`. Leaf k uses the template
/// with its seed replaced by a value derived from (`seed`, k).
DatasetManifest emit_dataset(const VeinSpec& spec_template, const RegimeCounts& counts,
                             const std::filesystem::path& out_dir, std::uint64_t seed, const EmitOptions& opts = {});

}  // namespace psss

#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "psss/core.hpp"

namespace psss {

inline constexpr int kDefaultPatch = 256;

struct TileOffset {
  int row = 0;  // pixel offsets into the padded canvas
  int col = 0;
  friend bool operator==(const TileOffset&, const TileOffset&) = default;
};

/// Non-overlapping row-major tiling of an image padded up to multiples of the patch side.
struct TileGrid {
  Size2 original;
  int patch = kDefaultPatch;
  Size2 padded;
  int rows = 0;
  int cols = 0;
  std::vector<TileOffset> tiles;

  std::size_t size() const noexcept { return tiles.size(); }
  friend bool operator==(const TileGrid&, const TileGrid&) = default;
};

TileGrid plan_grid(int height, int width, int patch = kDefaultPatch);

/// Cuts a raster into grid-ordered patches. Pixels beyond the original extent take
/// `pad` (one value per channel; a single value is broadcast).
std::vector<Raster> extract_tiles(const Raster& raster, const TileGrid& grid, std::span<const std::uint8_t> pad);

struct Patch {
  int tile_index = 0;
  Image image;
  std::optional<LabelMap> mask;
};

/// Image patches plus mask patches when a mask is given. `mask_pad` is background for
/// full masks and kUnknownLabel for partial masks.
std::vector<Patch> extract_patches(const Image& image, const LabelMap* mask, const TileGrid& grid, const Rgb& image_pad,
                                   std::uint8_t mask_pad);

/// Per-channel modal value; the lamina color on scanned leaves.
Rgb modal_color(const Image& image);

struct InformativeFilter {
  double min_foreground_fraction = 0.01;
  /// A pixel counts as foreground when any channel differs from the reference by more than this.
  int tolerance = 24;
};

double foreground_fraction(const Image& patch, const Rgb& reference, int tolerance);

/// Keeps patches whose foreground fraction is >= the threshold (threshold 0 keeps all).
std::vector<Patch> filter_informative(std::vector<Patch> patches, const Rgb& reference, const InformativeFilter& f);

/// Reassembles tile predictions keyed by tile index and crops to the original size.
/// Throws on a missing tile or a wrongly sized prediction.
Raster stitch(const std::map<int, Raster>& predictions, const TileGrid& grid);

}  // namespace psss

#include "psss/tiling.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <cstring>

namespace psss {

TileGrid plan_grid(int height, int width, int patch) {
  if (height < 1 || width < 1 || patch < 1) {
    fail(ErrorCode::kInvalidArgument, "plan_grid requires height, width and patch >= 1");
  }
  TileGrid g;
  g.original = {height, width};
  g.patch = patch;
  g.rows = (height + patch - 1) / patch;
  g.cols = (width + patch - 1) / patch;
  g.padded = {g.rows * patch, g.cols * patch};
  g.tiles.reserve(static_cast<std::size_t>(g.rows) * g.cols);
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) g.tiles.push_back({r * patch, c * patch});
  }
  return g;
}

std::vector<Raster> extract_tiles(const Raster& raster, const TileGrid& grid, std::span<const std::uint8_t> pad) {
  if (raster.size() != grid.original) fail(ErrorCode::kShapeMismatch, "raster dimensions differ from the grid");
  const int ch = raster.channels();
  if (pad.size() != 1 && static_cast<int>(pad.size()) != ch) {
    fail(ErrorCode::kInvalidArgument, "pad value must have one entry or one per channel");
  }
  std::vector<Raster> out;
  out.reserve(grid.size());
  for (const auto& t : grid.tiles) {
    Raster tile(grid.patch, grid.patch, ch);
    for (int r = 0; r < grid.patch; ++r) {
      const int sr = t.row + r;
      for (int c = 0; c < grid.patch; ++c) {
        const int sc = t.col + c;
        const bool inside = sr < grid.original.height && sc < grid.original.width;
        for (int k = 0; k < ch; ++k) {
          tile.at(r, c, k) = inside ? raster.at(sr, sc, k) : pad[pad.size() == 1 ? 0 : k];
        }
      }
    }
    out.push_back(std::move(tile));
  }
  return out;
}

std::vector<Patch> extract_patches(const Image& image, const LabelMap* mask, const TileGrid& grid, const Rgb& image_pad,
                                   std::uint8_t mask_pad) {
  if (mask && mask->size() != image.size()) fail(ErrorCode::kShapeMismatch, "mask dimensions differ from image");
  auto images = extract_tiles(image, grid, image_pad);
  std::vector<Raster> masks;
  if (mask) {
    const std::array<std::uint8_t, 1> pad{mask_pad};
    masks = extract_tiles(*mask, grid, pad);
  }
  std::vector<Patch> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    Patch p{static_cast<int>(i), std::move(images[i]), std::nullopt};
    if (mask) p.mask = std::move(masks[i]);
    out.push_back(std::move(p));
  }
  return out;
}

Rgb modal_color(const Image& image) {
  Rgb out{0, 0, 0};
  for (int k = 0; k < 3; ++k) {
    std::array<std::size_t, 256> hist{};
    for (int r = 0; r < image.height(); ++r) {
      for (int c = 0; c < image.width(); ++c) ++hist[image.at(r, c, k)];
    }
    out[k] = static_cast<std::uint8_t>(std::max_element(hist.begin(), hist.end()) - hist.begin());
  }
  return out;
}

double foreground_fraction(const Image& patch, const Rgb& reference, int tolerance) {
  if (patch.pixel_count() == 0) return 0.0;
  std::size_t fg = 0;
  for (int r = 0; r < patch.height(); ++r) {
    for (int c = 0; c < patch.width(); ++c) {
      for (int k = 0; k < 3; ++k) {
        if (std::abs(int{patch.at(r, c, k)} - int{reference[k]}) > tolerance) {
          ++fg;
          break;
        }
      }
    }
  }
  return static_cast<double>(fg) / static_cast<double>(patch.pixel_count());
}

std::vector<Patch> filter_informative(std::vector<Patch> patches, const Rgb& reference, const InformativeFilter& f) {
  if (!(f.min_foreground_fraction >= 0.0 && f.min_foreground_fraction <= 1.0)) {
    fail(ErrorCode::kInvalidArgument, "min_foreground_fraction must lie in [0, 1]");
  }
  std::vector<Patch> kept;
  for (auto& p : patches) {
    if (foreground_fraction(p.image, reference, f.tolerance) >= f.min_foreground_fraction) kept.push_back(std::move(p));
  }
  return kept;
}

Raster stitch(const std::map<int, Raster>& predictions, const TileGrid& grid) {
  int channels = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto it = predictions.find(static_cast<int>(i));
    if (it == predictions.end()) fail(ErrorCode::kInvalidArgument, "missing prediction for tile " + std::to_string(i));
    if (it->second.height() != grid.patch || it->second.width() != grid.patch) {
      fail(ErrorCode::kShapeMismatch, "prediction for tile " + std::to_string(i) + " is not patch-sized");
    }
    if (channels == 0) channels = it->second.channels();
    if (it->second.channels() != channels) fail(ErrorCode::kShapeMismatch, "tile predictions differ in channels");
  }
  if (predictions.size() != grid.size()) fail(ErrorCode::kInvalidArgument, "unexpected tile keys in predictions");

  Raster out(grid.original.height, grid.original.width, channels);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& tile = predictions.at(static_cast<int>(i));
    const auto& t = grid.tiles[i];
    const int rows = std::min(grid.patch, grid.original.height - t.row);
    const int cols = std::min(grid.patch, grid.original.width - t.col);
    for (int r = 0; r < rows; ++r) {
      const auto* src = tile.data().data() + static_cast<std::size_t>(r) * grid.patch * channels;
      std::memcpy(&out.at(t.row + r, t.col), src, static_cast<std::size_t>(cols) * channels);
    }
  }
  return out;
}

}  // namespace psss

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "psss/manifest.hpp"
#include "psss/tiling.hpp"

namespace psss {

struct PrepareOptions {
  int patch = kDefaultPatch;
  InformativeFilter filter;
};

struct PrepareResult {
  DatasetManifest patches;
  std::filesystem::path manifest_path;
  std::size_t kept = 0;
  std::size_t dropped = 0;
  std::vector<std::string> warnings;  // e.g. images that lost every patch
};

/// Tiles every train image of `source` into patch-sized crops, drops uninformative ones
/// and writes patches/, patch_masks/ and manifest.txt under `out_dir`. Images pad with
/// their modal color, FULL masks with background and PARTIAL masks with unknown.
/// Re-running over the same inputs rewrites identical files.
PrepareResult prepare_patches(const DatasetManifest& source, const std::filesystem::path& source_path,
                              const std::filesystem::path& out_dir, const PrepareOptions& opts = {});

}  // namespace psss

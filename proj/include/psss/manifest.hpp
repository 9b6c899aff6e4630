#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "psss/core.hpp"

namespace psss {

/// Grid record stored in patch manifests so predictions can be stitched back.
struct GridRecord {
  Size2 original;
  int patch = 256;
  friend bool operator==(const GridRecord&, const GridRecord&) = default;
};

/// Typed listing of samples with regime, species and split membership.
///
/// Text format (one record per line, `#` starts a comment):
///
///     psss-manifest 1
///     ratio_unit 6
///     ratios 1 1 10
///     species soybean sweet-cherry
///     sample <id> <split> <regime> <species> <image> <mask|->
///
/// Patch manifests written by `prepare` add `patch_size`, `source_manifest`,
/// `grid <source_id> <height> <width>` lines and two trailing sample fields
/// `<source_id> <tile_index>`. Paths are relative to the manifest's directory.
struct DatasetManifest {
  std::vector<Sample> samples;
  int ratio_unit = 1;
  Ratios ratios{0, 0, 0};
  std::vector<std::string> species;

  // Patch-manifest extras.
  std::optional<int> patch_size;
  std::optional<std::string> source_manifest;
  std::map<std::string, GridRecord> grids;

  /// Directory that relative paths resolve against. Not serialized.
  std::filesystem::path base_dir;

  bool is_patch_manifest() const noexcept { return patch_size.has_value(); }
  std::filesystem::path resolve(const std::string& rel) const;

  std::vector<const Sample*> select(Split split) const;
  std::vector<const Sample*> select(Split split, Regime regime) const;
  int count(Split split, Regime regime) const;

  friend bool operator==(const DatasetManifest& a, const DatasetManifest& b) {
    return a.samples == b.samples && a.ratio_unit == b.ratio_unit && a.ratios == b.ratios &&
           a.species == b.species && a.patch_size == b.patch_size &&
           a.source_manifest == b.source_manifest && a.grids == b.grids;
  }
};

struct LoadOptions {
  /// Decode masks to check label values and dimensions against the image.
  bool check_pixels = true;
  /// Verify train counts against ratios x ratio_unit (skipped for patch manifests).
  bool check_ratios = true;
};

/// Parses and validates. Errors name the offending sample id.
DatasetManifest load_manifest(const std::filesystem::path& path, const LoadOptions& opts = {});
DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir);

/// Structural checks that need no file access: regime/mask pairing, unique ids,
/// declared species, ratio counts.
void validate_structure(const DatasetManifest& m, bool check_ratios = true);

std::string format_manifest(const DatasetManifest& m);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& m);

struct SplitFractions {
  double val = 0.15;
  double test = 0.15;
};

/// Selects ratios x ratio_unit train samples per regime (seeded), assigns leftover FULL
/// samples to val/test by fraction and marks everything else unused.
DatasetManifest build_splits(std::vector<Sample> samples, Ratios ratios, int ratio_unit, std::uint64_t seed,
                             SplitFractions fractions = {});

enum class CrossSpeciesMode { kTransfer, kScarce };

/// TRANSFER: every train regime drawn from the source species. SCARCE: FULL from the
/// source, PARTIAL and UNLABELED from the target. Evaluation samples are the target's
/// FULL samples not used for training, split between val and test by the fractions' ratio.
DatasetManifest build_cross_species_splits(std::vector<Sample> samples, const std::string& source_species,
                                           const std::string& target_species, CrossSpeciesMode mode,
                                           Ratios ratios, int ratio_unit, std::uint64_t seed,
                                           SplitFractions fractions = {});

/// Expresses per-regime counts as ratios x unit with unit = gcd (unit 1 when all are zero).
std::pair<Ratios, int> ratios_from_counts(int full, int partial, int unlabeled);

/// Concatenates sample lists; ids must stay unique. Paths are rebased onto `base_dir`.
DatasetManifest merge_manifests(const std::vector<DatasetManifest>& parts, const std::filesystem::path& base_dir);

}  // namespace psss

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "psss/augment.hpp"
#include "psss/manifest.hpp"
#include "psss/model.hpp"
#include "psss/synthgen.hpp"
#include "psss/tiling.hpp"
#include "psss/train.hpp"

namespace psss {

/// Environment variable naming the default experiment root.
inline constexpr const char* kExperimentRootEnv = "PSSS_EXPERIMENT_ROOT";

struct SynthSection {
  std::string out_dir = "synth";
  RegimeCounts counts;
  int val = 3;
  int test = 6;
  std::string species = "synthetic";
  VeinSpec leaf;
};

struct SplitsSection {
  /// Full-image manifests whose samples form the pool (all splits are pooled).
  std::vector<std::string> inputs{"synth/manifest.txt"};
  std::string output = "splits/manifest.txt";
  Ratios ratios{1, 1, 10};
  int ratio_unit = 6;
  SplitFractions fractions;
  /// Cross-species mode is used when target_species is non-empty.
  std::string source_species;
  std::string target_species;
  CrossSpeciesMode mode = CrossSpeciesMode::kTransfer;
};

struct TilingSection {
  std::string manifest = "synth/manifest.txt";
  std::string out_dir = "patches";
  int patch = kDefaultPatch;
  InformativeFilter filter;
};

struct TrainSection {
  std::string patches = "patches/manifest.txt";
  /// Full-image manifest for per-epoch val; empty means the patch manifest's source.
  std::string eval_manifest;
  std::string run_name = "run";
  int eval_batch = 4;
  int threads = 0;  // 0 keeps the torch default
};

struct EvalSection {
  /// "checkpoint", or a plugin: "oracle" (ground truth) or "background".
  std::string model = "checkpoint";
  /// Empty means runs/<run_name>/best.pt.
  std::string checkpoint;
  /// Empty means the source manifest of train.patches.
  std::string manifest;
  std::string split = "test";
  bool render = false;
  /// Report path; empty means eval_<split>.json next to the checkpoint (or in the root).
  std::string out;
  int batch = 4;
};

struct RunConfig {
  std::string experiment_root = ".";
  std::uint64_t seed = 0;
  SynthSection synth;
  SplitsSection splits;
  TilingSection tiling;
  AugmentConfig augment;
  ModelSpec model;
  TrainingConfig training;  // training.seed is ignored in favour of `seed`
  TrainSection train;
  EvalSection eval;

  /// Resolves `p` against experiment_root unless absolute.
  std::filesystem::path resolve(const std::string& p) const;
  std::filesystem::path run_dir() const;
  /// Training config with the run seed applied.
  TrainingConfig training_config() const;
  void validate() const;
};

/// Built-in defaults, with experiment_root taken from the environment when set.
RunConfig default_run_config();

std::string config_to_json(const RunConfig& cfg, int indent = 2);
/// Overlays `text` onto `base`. Unknown keys and type mismatches throw kParse.
RunConfig apply_config_json(const RunConfig& base, const std::string& text);
RunConfig load_config_file(const RunConfig& base, const std::filesystem::path& path);
/// Sets one dotted key ("training.epochs") from a JSON literal; bare words are taken as strings.
RunConfig set_config_value(const RunConfig& base, const std::string& key, const std::string& value);

std::string_view to_string(CrossSpeciesMode m);
CrossSpeciesMode parse_cross_species_mode(std::string_view s);

}  // namespace psss

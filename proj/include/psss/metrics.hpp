#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psss/core.hpp"
#include "psss/manifest.hpp"
#include "psss/tiling.hpp"

namespace psss {

/// Pixel counts, rows = ground truth, cols = prediction.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

  std::uint64_t total() const noexcept;
  ConfusionMatrix& merge(const ConfusionMatrix& other) noexcept;
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Adds one (gt, pred) count per pixel. Throws kShapeMismatch on differing sizes and
/// kValidation on prediction values outside 0..3.
ConfusionMatrix accumulate(ConfusionMatrix cm, const LabelMap& pred, const SegMask& gt);

struct IoUReport {
  /// TP / (TP + FP + FN), or nullopt when the class is absent from both maps.
  std::array<std::optional<double>, kNumClasses> per_class{};
  double miou = 0.0;                     // over present classes, background included
  std::optional<double> miou_veins;      // over present vein classes only
};

/// Throws kValidation when every class is absent.
IoUReport report(const ConfusionMatrix& cm);

std::string format_report_table(const IoUReport& r);

/// Where a patch came from; lets plugin segmenters (e.g. an oracle) find their source.
struct PatchRef {
  const DatasetManifest* manifest = nullptr;
  const Sample* sample = nullptr;
  const TileGrid* grid = nullptr;
  int tile_index = 0;
};

/// Anything that maps image patches to class maps.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual std::vector<LabelMap> predict(std::span<const Image> patches, std::span<const PatchRef> refs) = 0;
};

/// Reads each sample's ground truth and answers with it. Used to check the evaluation path.
class OracleSegmenter final : public Segmenter {
 public:
  std::vector<LabelMap> predict(std::span<const Image> patches, std::span<const PatchRef> refs) override;
};

/// Predicts background everywhere.
class ConstantSegmenter final : public Segmenter {
 public:
  explicit ConstantSegmenter(ClassId cls = ClassId::kBackground) : cls_(cls) {}
  std::vector<LabelMap> predict(std::span<const Image> patches, std::span<const PatchRef> refs) override;

 private:
  ClassId cls_;
};

struct StitchedEvalOptions {
  int patch = kDefaultPatch;
  int batch = 4;
  /// When set, colorized stitched predictions are written here as <id>.png.
  std::optional<std::filesystem::path> render_dir;
};

struct StitchedEvalResult {
  IoUReport report;
  ConfusionMatrix confusion;
  std::size_t images = 0;
};

/// Tiles one image, predicts every patch in batches and stitches the class map back.
/// `manifest` and `sample` are forwarded to the segmenter through PatchRef and may be null.
LabelMap predict_stitched(Segmenter& model, const Image& image, int patch = kDefaultPatch, int batch = 4,
                          const DatasetManifest* manifest = nullptr, const Sample* sample = nullptr);

/// Tiles each image of the split, predicts every patch, stitches and accumulates.
StitchedEvalResult evaluate_stitched(Segmenter& model, const DatasetManifest& manifest, Split split,
                                     const StitchedEvalOptions& opts = {});

}  // namespace psss

#include "psss/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "psss/image_io.hpp"

namespace psss {

std::uint64_t ConfusionMatrix::total() const noexcept {
  std::uint64_t t = 0;
  for (const auto& row : counts) {
    for (auto v : row) t += v;
  }
  return t;
}

ConfusionMatrix& ConfusionMatrix::merge(const ConfusionMatrix& other) noexcept {
  for (int g = 0; g < kNumClasses; ++g) {
    for (int p = 0; p < kNumClasses; ++p) counts[g][p] += other.counts[g][p];
  }
  return *this;
}

ConfusionMatrix accumulate(ConfusionMatrix cm, const LabelMap& pred, const SegMask& gt) {
  if (pred.size() != gt.size() || pred.channels() != 1) {
    fail(ErrorCode::kShapeMismatch, "prediction and ground truth dimensions differ");
  }
  const auto p = pred.data();
  const auto g = gt.labels().data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!is_class_value(p[i])) fail(ErrorCode::kValidation, "prediction holds invalid class " + std::to_string(p[i]));
    ++cm.counts[g[i]][p[i]];
  }
  return cm;
}

IoUReport report(const ConfusionMatrix& cm) {
  IoUReport r;
  double sum = 0.0;
  int present = 0;
  double vein_sum = 0.0;
  int vein_present = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    const std::uint64_t tp = cm.counts[c][c];
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    for (int k = 0; k < kNumClasses; ++k) {
      if (k == c) continue;
      fp += cm.counts[k][c];
      fn += cm.counts[c][k];
    }
    const std::uint64_t denom = tp + fp + fn;
    if (denom == 0) continue;
    const double iou = static_cast<double>(tp) / static_cast<double>(denom);
    r.per_class[c] = iou;
    sum += iou;
    ++present;
    if (c != 0) {
      vein_sum += iou;
      ++vein_present;
    }
  }
  if (present == 0) fail(ErrorCode::kValidation, "confusion matrix is empty: every class is absent");
  r.miou = sum / present;
  if (vein_present > 0) r.miou_veins = vein_sum / vein_present;
  return r;
}

std::string format_report_table(const IoUReport& r) {
  std::ostringstream out;
  char buf[64];
  out << "class        IoU\n";
  for (int c = 0; c < kNumClasses; ++c) {
    const auto name = class_name(static_cast<ClassId>(c));
    if (r.per_class[c]) {
      std::snprintf(buf, sizeof buf, "%-12s %6.2f\n", std::string(name).c_str(), 100.0 * *r.per_class[c]);
    } else {
      std::snprintf(buf, sizeof buf, "%-12s %6s\n", std::string(name).c_str(), "absent");
    }
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "%-12s %6.2f\n", "mIoU", 100.0 * r.miou);
  out << buf;
  if (r.miou_veins) {
    std::snprintf(buf, sizeof buf, "%-12s %6.2f\n", "mIoU(veins)", 100.0 * *r.miou_veins);
    out << buf;
  }
  return out.str();
}

std::vector<LabelMap> OracleSegmenter::predict(std::span<const Image> patches, std::span<const PatchRef> refs) {
  std::vector<LabelMap> out;
  const Sample* cached_sample = nullptr;
  std::vector<Raster> cached;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto& ref = refs[i];
    if (!ref.sample || !ref.sample->mask_path || ref.sample->regime != Regime::kFull) {
      fail(ErrorCode::kInvalidArgument, "oracle needs fully labeled samples");
    }
    if (ref.sample != cached_sample) {
      const SegMask gt(read_label_map(ref.manifest->resolve(*ref.sample->mask_path)));
      const std::array<std::uint8_t, 1> pad{0};
      cached = extract_tiles(gt.labels(), *ref.grid, pad);
      cached_sample = ref.sample;
    }
    out.push_back(cached.at(static_cast<std::size_t>(ref.tile_index)));
  }
  return out;
}

std::vector<LabelMap> ConstantSegmenter::predict(std::span<const Image> patches, std::span<const PatchRef>) {
  std::vector<LabelMap> out;
  for (const auto& p : patches) out.emplace_back(p.height(), p.width(), 1, static_cast<std::uint8_t>(cls_));
  return out;
}

LabelMap predict_stitched(Segmenter& model, const Image& image, int patch, int batch, const DatasetManifest* manifest,
                          const Sample* sample) {
  const TileGrid grid = plan_grid(image.height(), image.width(), patch);
  const Rgb pad = modal_color(image);
  auto tiles = extract_tiles(image, grid, pad);

  std::map<int, Raster> predictions;
  const std::size_t step = static_cast<std::size_t>(std::max(1, batch));
  for (std::size_t start = 0; start < tiles.size(); start += step) {
    const std::size_t n = std::min(step, tiles.size() - start);
    std::vector<PatchRef> refs;
    for (std::size_t i = 0; i < n; ++i) refs.push_back({manifest, sample, &grid, static_cast<int>(start + i)});
    auto preds = model.predict(std::span<const Image>(tiles).subspan(start, n), refs);
    if (preds.size() != n) fail(ErrorCode::kInternal, "segmenter returned a wrong number of predictions");
    for (std::size_t i = 0; i < n; ++i) predictions.emplace(static_cast<int>(start + i), std::move(preds[i]));
  }
  return stitch(predictions, grid);
}

StitchedEvalResult evaluate_stitched(Segmenter& model, const DatasetManifest& manifest, Split split,
                                     const StitchedEvalOptions& opts) {
  StitchedEvalResult result;
  const auto samples = manifest.select(split);
  for (const Sample* s : samples) {
    if (s->regime != Regime::kFull || !s->mask_path) {
      fail(ErrorCode::kValidation, "sample '" + s->id + "': stitched evaluation needs a full mask");
    }
    const Image image = read_image(manifest.resolve(s->image_path));
    const SegMask gt(read_label_map(manifest.resolve(*s->mask_path)));
    if (gt.size() != image.size()) fail(ErrorCode::kShapeMismatch, "sample '" + s->id + "': mask/image size mismatch");

    const LabelMap full = predict_stitched(model, image, opts.patch, opts.batch, &manifest, s);
    result.confusion = accumulate(std::move(result.confusion), full, gt);
    ++result.images;
    if (opts.render_dir) write_image(*opts.render_dir / (s->id + ".png"), colorize(full));
  }
  result.report = report(result.confusion);
  return result;
}

}  // namespace psss

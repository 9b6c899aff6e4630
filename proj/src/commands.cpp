#include "psss/commands.hpp"

#include <fstream>
#include <json.hpp>

#include "psss/checkpoint.hpp"
#include "psss/prepare.hpp"
#include "psss/synthgen.hpp"
#include "psss/train.hpp"

namespace psss {

using nlohmann::json;

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
}

void apply_threads(const RunConfig& cfg) {
  if (cfg.train.threads > 0) torch::set_num_threads(cfg.train.threads);
}

/// Full-image manifest a patch manifest was cut from, when recorded.
std::optional<std::filesystem::path> source_of(const std::filesystem::path& patch_manifest) {
  const auto m = load_manifest(patch_manifest, {.check_pixels = false, .check_ratios = false});
  if (!m.source_manifest) return std::nullopt;
  return m.resolve(*m.source_manifest);
}

}  // namespace

std::filesystem::path cmd_synth(const RunConfig& cfg, const Logger& log) {
  cfg.synth.leaf.validate();
  const auto dir = cfg.resolve(cfg.synth.out_dir);
  EmitOptions eo;
  eo.species = cfg.synth.species;
  eo.val = cfg.synth.val;
  eo.test = cfg.synth.test;
  const auto m = emit_dataset(cfg.synth.leaf, cfg.synth.counts, dir, cfg.seed, eo);
  log(LogLevel::kInfo, "wrote " + std::to_string(m.samples.size()) + " samples to " + dir.string());
  return dir / "manifest.txt";
}

std::filesystem::path cmd_splits(const RunConfig& cfg, const Logger& log) {
  const auto& s = cfg.splits;
  if (s.inputs.empty()) fail(ErrorCode::kInvalidArgument, "splits.inputs is empty");
  const auto out = cfg.resolve(s.output);
  std::vector<DatasetManifest> parts;
  for (const auto& in : s.inputs) parts.push_back(load_manifest(cfg.resolve(in), {.check_ratios = false}));
  const auto pool = merge_manifests(parts, out.parent_path());
  DatasetManifest m;
  if (s.target_species.empty()) {
    m = build_splits(pool.samples, s.ratios, s.ratio_unit, cfg.seed, s.fractions);
  } else {
    const auto source = s.source_species.empty() ? pool.species.at(0) : s.source_species;
    m = build_cross_species_splits(pool.samples, source, s.target_species, s.mode, s.ratios, s.ratio_unit, cfg.seed,
                                   s.fractions);
  }
  m.base_dir = out.parent_path();
  save_manifest(out, m);
  log(LogLevel::kInfo, "train " + std::to_string(m.select(Split::kTrain).size()) + ", val " +
                           std::to_string(m.select(Split::kVal).size()) + ", test " +
                           std::to_string(m.select(Split::kTest).size()) + " -> " + out.string());
  return out;
}

PrepareResult cmd_prepare(const RunConfig& cfg, const Logger& log) {
  const auto src_path = cfg.resolve(cfg.tiling.manifest);
  const auto src = load_manifest(src_path);
  PrepareOptions po;
  po.patch = cfg.tiling.patch;
  po.filter = cfg.tiling.filter;
  auto r = prepare_patches(src, src_path, cfg.resolve(cfg.tiling.out_dir), po);
  for (const auto& w : r.warnings) log(LogLevel::kWarning, w);
  if (r.kept == 0) log(LogLevel::kWarning, "every patch was dropped by the informative filter");
  log(LogLevel::kInfo, "kept " + std::to_string(r.kept) + " patches, dropped " + std::to_string(r.dropped) + " -> " +
                           r.manifest_path.string());
  return r;
}

TrainOutcome cmd_train(const RunConfig& cfg, const Logger& log) {
  cfg.validate();
  apply_threads(cfg);
  const auto patch_path = cfg.resolve(cfg.train.patches);
  const auto patches = load_manifest(patch_path);

  std::optional<DatasetManifest> eval_manifest;
  std::optional<std::filesystem::path> eval_path;
  if (!cfg.train.eval_manifest.empty()) {
    eval_path = cfg.resolve(cfg.train.eval_manifest);
  } else {
    eval_path = source_of(patch_path);
  }
  if (eval_path) eval_manifest = load_manifest(*eval_path, {.check_ratios = false});
  if (!eval_manifest || eval_manifest->select(Split::kVal).empty()) {
    log(LogLevel::kWarning, "no val split; keeping the checkpoint of every epoch");
  }

  TrainOutcome out;
  out.run_dir = cfg.run_dir();
  std::filesystem::create_directories(out.run_dir);
  const auto snapshot = config_to_json(cfg);
  write_text(out.run_dir / "config.json", snapshot + "\n");

  FitOptions fo;
  fo.run_dir = out.run_dir;
  fo.eval_manifest = eval_manifest ? &*eval_manifest : nullptr;
  fo.eval_batch = cfg.train.eval_batch;
  fo.config_json = snapshot;
  fo.on_record = [&](const std::string& line) {
    const auto j = json::parse(line);
    if (j["kind"] == "eval") {
      log(LogLevel::kInfo, "epoch " + std::to_string(j["epoch"].get<int>()) + " val mIoU " +
                               std::to_string(j["val_miou"].get<double>()));
    } else {
      log(LogLevel::kDebug, line);
    }
  };
  const auto res = fit(patches, cfg.model, cfg.training_config(), cfg.augment, fo);
  out.best_checkpoint = res.best_checkpoint;
  out.best_epoch = res.best_epoch;
  out.best_miou = res.best_miou;
  out.steps = res.steps;
  log(LogLevel::kInfo, "best epoch " + std::to_string(out.best_epoch) + " -> " + out.best_checkpoint.string());
  return out;
}

std::string report_to_json(const IoUReport& r, const std::string& split, std::size_t images) {
  json iou = json::object();
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& v = r.per_class[c];
    iou[std::string(class_name(static_cast<ClassId>(c)))] = v ? json(*v) : json(nullptr);
  }
  return json{{"split", split},
              {"images", images},
              {"iou", iou},
              {"miou", r.miou},
              {"miou_veins", r.miou_veins ? json(*r.miou_veins) : json(nullptr)}}
      .dump(2);
}

EvalOutcome cmd_eval(const RunConfig& cfg, const Logger& log) {
  cfg.validate();
  apply_threads(cfg);
  const Split split = parse_split(cfg.eval.split);

  std::filesystem::path manifest_path;
  if (!cfg.eval.manifest.empty()) {
    manifest_path = cfg.resolve(cfg.eval.manifest);
  } else if (auto src = source_of(cfg.resolve(cfg.train.patches))) {
    manifest_path = *src;
  } else {
    fail(ErrorCode::kInvalidArgument, "eval.manifest is not set and the patch manifest records no source");
  }
  const auto manifest = load_manifest(manifest_path, {.check_ratios = false});
  if (manifest.is_patch_manifest()) {
    fail(ErrorCode::kInvalidArgument, "eval needs a full-image manifest, got patches: " + manifest_path.string());
  }
  if (manifest.select(split).empty()) {
    fail(ErrorCode::kValidation, "manifest " + manifest_path.string() + " has no " + cfg.eval.split + " samples");
  }

  std::unique_ptr<Segmenter> seg;
  std::filesystem::path report_dir = cfg.experiment_root;
  std::string stem = "eval_" + cfg.eval.model + "_" + cfg.eval.split;
  if (cfg.eval.model == "checkpoint") {
    const auto ck_path = cfg.eval.checkpoint.empty() ? cfg.run_dir() / "best.pt" : cfg.resolve(cfg.eval.checkpoint);
    auto ck = load_checkpoint(ck_path);
    if (cfg.tiling.patch % ck.model->stride() != 0) {
      fail(ErrorCode::kShapeMismatch, "patch size " + std::to_string(cfg.tiling.patch) +
                                          " is not divisible by the checkpoint's stride " +
                                          std::to_string(ck.model->stride()));
    }
    seg = std::make_unique<TorchSegmenter>(ck.model, ck.meta.normalizer);
    report_dir = ck_path.parent_path();
    stem = "eval_" + cfg.eval.split;
    log(LogLevel::kInfo, "checkpoint " + ck_path.string() + " (epoch " + std::to_string(ck.meta.epoch) + ")");
  } else if (cfg.eval.model == "oracle") {
    seg = std::make_unique<OracleSegmenter>();
  } else {
    seg = std::make_unique<ConstantSegmenter>();
  }

  EvalOutcome out;
  out.report_path = cfg.eval.out.empty() ? report_dir / (stem + ".json") : cfg.resolve(cfg.eval.out);
  StitchedEvalOptions eo;
  eo.patch = cfg.tiling.patch;
  eo.batch = cfg.eval.batch;
  if (cfg.eval.render) eo.render_dir = out.report_path.parent_path() / ("render_" + cfg.eval.split);
  out.result = evaluate_stitched(*seg, manifest, split, eo);
  out.report_json = report_to_json(out.result.report, cfg.eval.split, out.result.images);
  out.table = format_report_table(out.result.report);
  write_text(out.report_path, out.report_json + "\n");
  log(LogLevel::kInfo, "report -> " + out.report_path.string());
  return out;
}

}  // namespace psss

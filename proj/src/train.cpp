#include "psss/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "psss/image_io.hpp"
#include "psss/metrics.hpp"

namespace psss {

using nlohmann::json;

std::string_view to_string(PseudoSource s) {
  return s == PseudoSource::kStudentWeak ? "STUDENT_WEAK" : "EMA_TEACHER";
}

PseudoSource parse_pseudo_source(std::string_view s) {
  if (s == "STUDENT_WEAK") return PseudoSource::kStudentWeak;
  if (s == "EMA_TEACHER") return PseudoSource::kEmaTeacher;
  fail(ErrorCode::kInvalidArgument, "unknown pseudo_source '" + std::string(s) + "'");
}

void TrainingConfig::validate() const {
  if (epochs < 1) fail(ErrorCode::kInvalidArgument, "epochs must be >= 1");
  if (batch_size < 1) fail(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  if (!(base_lr > 0.0)) fail(ErrorCode::kInvalidArgument, "base_lr must be positive");
  if (!(weight_decay >= 0.0)) fail(ErrorCode::kInvalidArgument, "weight_decay must be >= 0");
  if (!(poly_power > 0.0)) fail(ErrorCode::kInvalidArgument, "poly_power must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail(ErrorCode::kInvalidArgument, "momentum must lie in [0, 1)");
  if (!(tau_u >= 0.0 && tau_u <= 1.0)) fail(ErrorCode::kInvalidArgument, "tau_u must lie in [0, 1]");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) fail(ErrorCode::kInvalidArgument, "ema_decay must lie in [0, 1)");
  for (double w : stream_weights) {
    if (!(w > 0.0)) fail(ErrorCode::kInvalidArgument, "stream weights must be positive");
  }
  psss.validate();
}

int TrainingConfig::sub_batch(int k) const {
  const double top = std::max({stream_weights[0], stream_weights[1], stream_weights[2]});
  return std::max(1, static_cast<int>(std::lround(batch_size * stream_weights.at(k) / top)));
}

std::vector<Image> PatchDataset::all_images() const {
  std::vector<Image> out = full_images;
  out.insert(out.end(), partial_images.begin(), partial_images.end());
  out.insert(out.end(), unlabeled_images.begin(), unlabeled_images.end());
  return out;
}

PatchDataset load_patch_dataset(const DatasetManifest& m) {
  PatchDataset d;
  for (const Sample* s : m.select(Split::kTrain)) {
    try {
      auto img = read_image(m.resolve(s->image_path));
      switch (s->regime) {
        case Regime::kFull:
          d.full_masks.emplace_back(read_label_map(m.resolve(*s->mask_path)));
          d.full_images.push_back(std::move(img));
          break;
        case Regime::kPartial:
          d.partial_masks.emplace_back(read_label_map(m.resolve(*s->mask_path)));
          d.partial_images.push_back(std::move(img));
          break;
        case Regime::kUnlabeled:
          d.unlabeled_images.push_back(std::move(img));
          break;
      }
    } catch (const Error& e) {
      fail(e.code(), "sample '" + s->id + "': " + e.what());
    }
  }
  return d;
}

StreamSampler::StreamSampler(std::size_t n, Rng rng) : order_(n), rng_(rng) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void StreamSampler::reshuffle() {
  shuffle(order_, rng_);
  cursor_ = 0;
}

std::vector<std::size_t> StreamSampler::next(std::size_t k) {
  std::vector<std::size_t> out;
  if (order_.empty()) return out;
  while (out.size() < k) {
    if (cursor_ == order_.size()) reshuffle();
    out.push_back(order_[cursor_++]);
  }
  return out;
}

Trainer::Trainer(const ModelSpec& spec, const TrainingConfig& cfg, const AugmentConfig& aug, const Normalizer& norm)
    : spec_(spec),
      cfg_(cfg),
      aug_(aug),
      norm_(norm),
      aug_rng_{Rng::stream(cfg.seed, 0x61756700), Rng::stream(cfg.seed, 0x61756701), Rng::stream(cfg.seed, 0x61756702)} {
  cfg_.validate();
  aug_.validate();
  torch::manual_seed(cfg.seed);
  model_ = create_model(spec);
  model_->train();
  if (cfg.pseudo_source == PseudoSource::kEmaTeacher) teacher_.emplace(spec, *model_, cfg.ema_decay);
  optimizer_ = std::make_unique<torch::optim::SGD>(
      model_->parameters(),
      torch::optim::SGDOptions(cfg.base_lr).momentum(cfg.momentum).weight_decay(cfg.weight_decay));
}

ObjectiveSettings Trainer::objective_settings() const {
  ObjectiveSettings s;
  s.unsupervised = cfg_.use_unlabeled;
  s.tau_u = cfg_.tau_u;
  s.psss = cfg_.psss;
  if (!cfg_.use_partial) s.psss.lambda = 0.0;
  s.toggles = cfg_.loss_toggles;
  return s;
}

StreamLogits run_stream(SegmentationModel& model, std::span<const Image> images, const Normalizer& norm) {
  StreamLogits out;
  if (images.empty()) return out;
  out.tensor = forward_checked(model, to_tensor(images, norm));
  out.buffers = logits_to_double(out.tensor);
  const Size2 size = images[0].size();
  for (const auto& b : out.buffers) out.views.push_back(make_logits_view(b, size));
  return out;
}

namespace {

std::vector<PseudoLabel> pseudo_labels(SegmentationModel& model, std::span<const Image> weak, const Normalizer& norm) {
  torch::NoGradGuard guard;
  std::vector<PseudoLabel> out;
  const auto logits = run_stream(model, weak, norm);
  for (const auto& v : logits.views) out.push_back(pseudo_label_from_logits(v));
  return out;
}

torch::Tensor grad_tensor(const std::vector<std::vector<double>>& grads, const torch::Tensor& like) {
  auto g = torch::empty(like.sizes(), torch::kFloat64);
  double* p = g.data_ptr<double>();
  for (const auto& b : grads) p = std::copy(b.begin(), b.end(), p);
  return g.to(like.scalar_type());
}

struct Augmented {
  std::vector<Image> full;
  std::vector<SegMask> masks;
  std::vector<Image> partial_weak, partial_strong;
  std::vector<PartialMask> partial_masks;
  std::vector<Image> unl_weak, unl_strong;
};

Augmented augment_batch(const StepBatch& batch, const AugmentConfig& aug, std::array<Rng, 3>& rngs) {
  if (batch.full_images.size() != batch.full_masks.size() || batch.partial_images.size() != batch.partial_masks.size()) {
    fail(ErrorCode::kInvalidArgument, "batch images and masks differ in count");
  }
  Augmented a;
  for (std::size_t i = 0; i < batch.full_images.size(); ++i) {
    const auto g = draw_geometry(batch.full_images[i]->size(), aug, rngs[0]);
    a.full.push_back(apply_geometry(*batch.full_images[i], g));
    a.masks.emplace_back(transform_mask(batch.full_masks[i]->labels(), g));
  }
  for (std::size_t i = 0; i < batch.partial_images.size(); ++i) {
    auto pair = apply_pair(*batch.partial_images[i], aug, rngs[1]);
    a.partial_masks.emplace_back(transform_mask(batch.partial_masks[i]->labels(), pair.geometry));
    a.partial_weak.push_back(std::move(pair.weak));
    a.partial_strong.push_back(std::move(pair.strong));
  }
  for (const Image* img : batch.unlabeled_images) {
    auto pair = apply_pair(*img, aug, rngs[2]);
    a.unl_weak.push_back(std::move(pair.weak));
    a.unl_strong.push_back(std::move(pair.strong));
  }
  return a;
}

}  // namespace

struct Trainer::Forward {
  StreamLogits full, unlabeled, partial;
  ObjectiveValue value;
};

Trainer::Forward Trainer::forward_objective(const StepBatch& batch, bool want_grad) {
  model_->train();
  const Augmented a = augment_batch(batch, aug_, aug_rng_);
  SegmentationModel& labeler = teacher_ ? *teacher_->shadow : *model_;
  const auto unl_pseudo = pseudo_labels(labeler, a.unl_weak, norm_);
  const auto partial_pseudo = pseudo_labels(labeler, a.partial_weak, norm_);

  std::optional<torch::NoGradGuard> no_grad;
  if (!want_grad) no_grad.emplace();
  Forward f;
  f.full = run_stream(*model_, a.full, norm_);
  f.unlabeled = run_stream(*model_, a.unl_strong, norm_);
  f.partial = run_stream(*model_, a.partial_strong, norm_);

  ObjectiveInputs in;
  in.full = f.full.views;
  in.masks = a.masks;
  in.unlabeled = f.unlabeled.views;
  in.unlabeled_pseudo = unl_pseudo;
  in.partial = f.partial.views;
  in.partial_masks = a.partial_masks;
  in.partial_pseudo = partial_pseudo;
  f.value = evaluate_objective(in, objective_settings(), want_grad);
  if (!std::isfinite(f.value.total)) fail(ErrorCode::kNumeric, "non-finite loss");
  return f;
}

ObjectiveValue Trainer::evaluate(const StepBatch& batch) { return forward_objective(batch, false).value; }

StepRecord Trainer::step(const StepBatch& batch, double lr) {
  auto f = forward_objective(batch, true);
  auto& value = f.value;

  optimizer_->zero_grad();
  std::vector<torch::Tensor> roots, grads;
  const std::array<std::pair<const StreamLogits*, const std::vector<std::vector<double>>*>, 3> parts{
      {{&f.full, &value.grad_full}, {&f.unlabeled, &value.grad_unlabeled}, {&f.partial, &value.grad_partial}}};
  for (const auto& [logits, g] : parts) {
    if (!logits->tensor.defined()) continue;
    roots.push_back(logits->tensor);
    grads.push_back(grad_tensor(*g, logits->tensor));
  }
  if (!roots.empty()) torch::autograd::backward(roots, grads);
  for (auto& group : optimizer_->param_groups()) static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);
  optimizer_->step();
  if (teacher_) ema_update(*teacher_, *model_);

  value.grad_full.clear();
  value.grad_unlabeled.clear();
  value.grad_partial.clear();
  StepRecord rec;
  rec.lr = lr;
  rec.loss = std::move(value);
  return rec;
}

long steps_per_epoch(const PatchDataset& d, const TrainingConfig& cfg) {
  auto steps = [&](std::size_t n, int k) {
    const auto b = static_cast<std::size_t>(cfg.sub_batch(k));
    return static_cast<long>((n + b - 1) / b);
  };
  long out = steps(d.full_images.size(), 0);
  if (cfg.use_partial) out = std::max(out, steps(d.partial_images.size(), 1));
  if (cfg.use_unlabeled) out = std::max(out, steps(d.unlabeled_images.size(), 2));
  return out;
}

namespace {

json step_json(const StepRecord& r) {
  const auto& l = r.loss;
  return {{"kind", "step"},
          {"step", r.step},
          {"epoch", r.epoch},
          {"lr", r.lr},
          {"loss", l.total},
          {"l_s", l.supervised},
          {"l_u", l.unsupervised},
          {"l_p", l.partial},
          {"l_p_s", l.partial_supervised},
          {"l_p_u", l.partial_pseudo},
          {"l_p_c", l.partial_exclusion},
          {"s1", l.s1},
          {"s2", l.s2},
          {"s3", l.s3},
          {"confident_unlabeled", l.confident_unlabeled}};
}

json eval_json(int epoch, long step, const IoUReport& r) {
  json iou = json::array();
  for (const auto& v : r.per_class) iou.push_back(v ? json(*v) : json(nullptr));
  return {{"kind", "eval"},
          {"epoch", epoch},
          {"step", step},
          {"val_miou", r.miou},
          {"val_miou_veins", r.miou_veins ? json(*r.miou_veins) : json(nullptr)},
          {"val_iou", iou}};
}

template <typename T>
std::vector<const T*> pick(const std::vector<T>& items, const std::vector<std::size_t>& idx) {
  std::vector<const T*> out;
  for (auto i : idx) out.push_back(&items[i]);
  return out;
}

}  // namespace

FitResult fit(const DatasetManifest& patches, const ModelSpec& spec, const TrainingConfig& cfg,
              const AugmentConfig& aug, const FitOptions& opts) {
  cfg.validate();
  if (!patches.is_patch_manifest()) fail(ErrorCode::kInvalidArgument, "training needs a patch manifest");
  const PatchDataset data = load_patch_dataset(patches);
  if (data.full_images.empty()) fail(ErrorCode::kValidation, "training needs at least one FULL patch");

  FitResult result;
  result.normalizer = compute_normalizer(data.all_images());
  Trainer trainer(spec, cfg, aug, result.normalizer);
  result.model = trainer.model_ptr();

  std::array<StreamSampler, 3> samplers{StreamSampler(data.full_images.size(), Rng::stream(cfg.seed, 0x73616d00)),
                                        StreamSampler(data.partial_images.size(), Rng::stream(cfg.seed, 0x73616d01)),
                                        StreamSampler(data.unlabeled_images.size(), Rng::stream(cfg.seed, 0x73616d02))};

  std::filesystem::create_directories(opts.run_dir);
  const auto metrics_path = opts.run_dir / "metrics.jsonl";
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) fail(ErrorCode::kIo, "cannot write " + metrics_path.string());
  auto emit = [&](const json& j) {
    const auto line = j.dump();
    metrics << line << '\n';
    metrics.flush();
    if (opts.on_record) opts.on_record(line);
  };

  const bool has_val = opts.eval_manifest && !opts.eval_manifest->select(Split::kVal).empty();
  const long spe = steps_per_epoch(data, cfg);
  const long max_iter = spe * cfg.epochs;
  result.best_checkpoint = opts.run_dir / "best.pt";

  long it = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (long s = 0; s < spe; ++s, ++it) {
      try {
        StepBatch batch;
        const auto fi = samplers[0].next(cfg.sub_batch(0));
        batch.full_images = pick(data.full_images, fi);
        batch.full_masks = pick(data.full_masks, fi);
        if (cfg.use_partial) {
          const auto pi = samplers[1].next(cfg.sub_batch(1));
          batch.partial_images = pick(data.partial_images, pi);
          batch.partial_masks = pick(data.partial_masks, pi);
        }
        if (cfg.use_unlabeled) batch.unlabeled_images = pick(data.unlabeled_images, samplers[2].next(cfg.sub_batch(2)));
        auto rec = trainer.step(batch, poly_lr(cfg.base_lr, it, max_iter, cfg.poly_power));
        rec.step = it;
        rec.epoch = epoch;
        emit(step_json(rec));
      } catch (const Error& e) {
        fail(e.code(), "epoch " + std::to_string(epoch) + " step " + std::to_string(it) + ": " + e.what());
      }
    }

    double miou = -1.0;
    try {
      if (has_val) {
        TorchSegmenter seg(trainer.model_ptr(), result.normalizer);
        StitchedEvalOptions eo;
        eo.patch = patches.patch_size.value_or(kDefaultPatch);
        eo.batch = opts.eval_batch;
        const auto ev = evaluate_stitched(seg, *opts.eval_manifest, Split::kVal, eo);
        miou = ev.report.miou;
        result.epoch_miou.push_back(miou);
        emit(eval_json(epoch, it, ev.report));
      }
      if (!has_val || miou > result.best_miou) {
        result.best_miou = miou;
        result.best_epoch = epoch;
        CheckpointMeta meta;
        meta.model = spec;
        meta.normalizer = result.normalizer;
        meta.epoch = epoch;
        meta.step = it;
        meta.val_miou = miou;
        meta.config_json = opts.config_json.empty() ? "{}" : opts.config_json;
        const auto& rngs = trainer.augment_rngs();
        for (int k = 0; k < 3; ++k) {
          meta.rng_states["augment" + std::to_string(k)] = rngs[k].state();
          meta.rng_states["sampler" + std::to_string(k)] = samplers[k].rng().state();
        }
        save_checkpoint(result.best_checkpoint, meta, trainer.model(),
                        trainer.teacher() ? trainer.teacher()->shadow.get() : nullptr, &trainer.optimizer());
      }
    } catch (const Error& e) {
      fail(e.code(), "epoch " + std::to_string(epoch) + " evaluation: " + e.what());
    }
  }
  result.steps = it;
  return result;
}

}  // namespace psss

#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "psss/augment.hpp"
#include "psss/checkpoint.hpp"
#include "psss/manifest.hpp"
#include "psss/model.hpp"
#include "psss/objective.hpp"

namespace psss {

enum class PseudoSource { kStudentWeak, kEmaTeacher };

std::string_view to_string(PseudoSource s);
PseudoSource parse_pseudo_source(std::string_view s);

struct TrainingConfig {
  int epochs = 80;
  int batch_size = 4;  // per stream
  double base_lr = 1e-3;
  double weight_decay = 1e-4;
  double poly_power = 0.9;
  double momentum = 0.9;
  double tau_u = 0.95;
  PsssConfig psss;
  LossToggles loss_toggles;
  PseudoSource pseudo_source = PseudoSource::kStudentWeak;
  double ema_decay = 0.999;
  std::uint64_t seed = 0;
  /// Streams that take part. Host-only drops the partial stream, supervised-only both.
  bool use_unlabeled = true;
  bool use_partial = true;
  /// Relative sub-batch sizes (full, partial, unlabeled); the largest gets batch_size.
  std::array<double, 3> stream_weights{1.0, 1.0, 1.0};

  void validate() const;
  /// Sub-batch size of stream k (0 full, 1 partial, 2 unlabeled).
  int sub_batch(int k) const;
};

/// Train-split patches of one patch manifest, decoded into memory.
struct PatchDataset {
  std::vector<Image> full_images;
  std::vector<SegMask> full_masks;
  std::vector<Image> partial_images;
  std::vector<PartialMask> partial_masks;
  std::vector<Image> unlabeled_images;

  std::vector<Image> all_images() const;
};

PatchDataset load_patch_dataset(const DatasetManifest& patches);

/// Endless shuffled pass over n items, reshuffled at every wrap.
class StreamSampler {
 public:
  StreamSampler(std::size_t n, Rng rng);
  std::vector<std::size_t> next(std::size_t k);
  Rng& rng() noexcept { return rng_; }
  std::size_t cursor() const noexcept { return cursor_; }

 private:
  void reshuffle();
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

/// Logits of one stream as a torch tensor plus per-sample double copies for the loss kernels.
struct StreamLogits {
  torch::Tensor tensor;
  std::vector<std::vector<double>> buffers;
  std::vector<LogitsView> views;
};

StreamLogits run_stream(SegmentationModel& model, std::span<const Image> images, const Normalizer& norm);

/// One tri-stream minibatch before augmentation.
struct StepBatch {
  std::vector<const Image*> full_images;
  std::vector<const SegMask*> full_masks;
  std::vector<const Image*> partial_images;
  std::vector<const PartialMask*> partial_masks;
  std::vector<const Image*> unlabeled_images;
};

struct StepRecord {
  long step = 0;
  int epoch = 0;
  double lr = 0.0;
  ObjectiveValue loss;  // gradients cleared
};

/// Owns the student, optional EMA teacher, optimizer and the per-stream augmentation RNGs.
class Trainer {
 public:
  Trainer(const ModelSpec& spec, const TrainingConfig& cfg, const AugmentConfig& aug, const Normalizer& norm);

  /// Augments, pseudo-labels, evaluates L and applies one SGD update at `lr`.
  /// Throws kNumeric if the loss is not finite.
  StepRecord step(const StepBatch& batch, double lr);

  /// Same augmentation draws and objective as `step` without touching any parameter.
  ObjectiveValue evaluate(const StepBatch& batch);

  ObjectiveSettings objective_settings() const;
  SegmentationModel& model() { return *model_; }
  ModelPtr model_ptr() const { return model_; }
  TeacherState* teacher() { return teacher_ ? &*teacher_ : nullptr; }
  torch::optim::SGD& optimizer() { return *optimizer_; }
  const ModelSpec& spec() const { return spec_; }
  const Normalizer& normalizer() const { return norm_; }

  /// Augmentation RNG per stream: 0 full, 1 partial, 2 unlabeled.
  std::array<Rng, 3>& augment_rngs() { return aug_rng_; }

 private:
  struct Forward;
  Forward forward_objective(const StepBatch& batch, bool want_grad);

  ModelSpec spec_;
  TrainingConfig cfg_;
  AugmentConfig aug_;
  Normalizer norm_;
  ModelPtr model_;
  std::optional<TeacherState> teacher_;
  std::unique_ptr<torch::optim::SGD> optimizer_;
  std::array<Rng, 3> aug_rng_;
};

/// Steps per epoch, from the largest active stream.
long steps_per_epoch(const PatchDataset& data, const TrainingConfig& cfg);

struct FitOptions {
  std::filesystem::path run_dir;
  /// Full-image manifest whose val split is evaluated after each epoch; skipped when null.
  const DatasetManifest* eval_manifest = nullptr;
  int eval_batch = 4;
  /// Receives every metrics record (also appended to run_dir/metrics.jsonl).
  std::function<void(const std::string& json_line)> on_record;
  std::string config_json;  // stored in the checkpoint
};

struct FitResult {
  std::filesystem::path best_checkpoint;
  int best_epoch = 0;
  double best_miou = -1.0;
  long steps = 0;
  std::vector<double> epoch_miou;  // val mIoU per epoch (empty when val is absent)
  ModelPtr model;                  // parameters at the end of training
  Normalizer normalizer;
};

/// Runs cfg.epochs epochs over the patch manifest's train split and keeps the checkpoint
/// with the highest val mIoU (the last epoch when val is absent).
FitResult fit(const DatasetManifest& patches, const ModelSpec& spec, const TrainingConfig& cfg,
              const AugmentConfig& aug, const FitOptions& opts);

}  // namespace psss

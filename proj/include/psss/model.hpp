#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <torch/torch.h>
#include <vector>

#include "psss/core.hpp"
#include "psss/metrics.hpp"

namespace psss {

/// Contract of every segmentation network: (N, 3, H, W) images -> (N, 4, H, W) logits.
class SegmentationModel : public torch::nn::Module {
 public:
  virtual torch::Tensor forward(torch::Tensor images) = 0;
  /// Spatial dims of the input must be divisible by this.
  virtual int stride() const = 0;
};

using ModelPtr = std::shared_ptr<SegmentationModel>;

struct ModelSpec {
  std::string backbone = "encdec";
  int base_width = 32;
  int levels = 4;
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Name -> factory map; heavier backbones register here behind the same contract.
class ModelRegistry {
 public:
  using Factory = std::function<ModelPtr(const ModelSpec&)>;

  static ModelRegistry& instance();
  void add(const std::string& name, Factory factory);
  ModelPtr create(const ModelSpec& spec) const;
  std::vector<std::string> names() const;

 private:
  ModelRegistry();
  std::map<std::string, Factory> factories_;
};

inline ModelPtr create_model(const ModelSpec& spec) { return ModelRegistry::instance().create(spec); }

/// U-shaped encoder-decoder: conv-GN-ReLU pairs, max-pool down, nearest-neighbour up
/// with skip concatenation, 1x1 classifier head.
class EncoderDecoder : public SegmentationModel {
 public:
  EncoderDecoder(int base_width, int levels);
  torch::Tensor forward(torch::Tensor images) override;
  int stride() const override { return 1 << (levels_ - 1); }

 private:
  int levels_;
  std::vector<torch::nn::Sequential> down_;
  std::vector<torch::nn::Sequential> up_;
  torch::nn::Conv2d head_{nullptr};
};

/// Checks the input contract, runs the model and checks the output contract.
torch::Tensor forward_checked(SegmentationModel& model, const torch::Tensor& images);

std::int64_t parameter_count(const torch::nn::Module& m);

/// Per-channel affine normalization applied before the network.
struct Normalizer {
  std::array<double, 3> mean{127.5, 127.5, 127.5};
  std::array<double, 3> std{64.0, 64.0, 64.0};
};

/// Mean/std per channel over a set of images.
Normalizer compute_normalizer(std::span<const Image> images);

/// Stacks equally sized RGB images into a normalized (N, 3, H, W) float tensor.
torch::Tensor to_tensor(std::span<const Image> images, const Normalizer& norm);

/// Converts float logits (N, 4, H, W) to one contiguous double buffer per sample.
std::vector<std::vector<double>> logits_to_double(const torch::Tensor& logits);

/// Argmax class maps of (N, 4, H, W) logits.
std::vector<LabelMap> argmax_maps(const torch::Tensor& logits);

/// Shadow copy of a model updated by exponential moving average.
struct TeacherState {
  ModelPtr shadow;
  double decay = 0.999;

  /// Clones the student's parameters. Throws kInvalidArgument unless 0 <= decay < 1.
  TeacherState(const ModelSpec& spec, SegmentationModel& student, double decay);
};

/// shadow <- decay * shadow + (1 - decay) * student, elementwise. Throws on shape mismatch.
void ema_update(TeacherState& teacher, SegmentationModel& student);

/// Copies parameter values (and buffers) from `src` into `dst` of identical structure.
void copy_parameters(torch::nn::Module& dst, const torch::nn::Module& src);

/// Evaluation-mode wrapper used by stitched evaluation.
class TorchSegmenter final : public Segmenter {
 public:
  TorchSegmenter(ModelPtr model, Normalizer norm) : model_(std::move(model)), norm_(norm) {}
  std::vector<LabelMap> predict(std::span<const Image> patches, std::span<const PatchRef> refs) override;

 private:
  ModelPtr model_;
  Normalizer norm_;
};

}  // namespace psss

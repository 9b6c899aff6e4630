#include "psss/model.hpp"

#include <cmath>

namespace psss {

namespace {

constexpr int kGroups = 4;

torch::nn::Sequential conv_block(int in, int out) {
  namespace nn = torch::nn;
  return nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1).bias(false)),
                        nn::GroupNorm(nn::GroupNormOptions(kGroups, out)), nn::ReLU(),
                        nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(1).bias(false)),
                        nn::GroupNorm(nn::GroupNormOptions(kGroups, out)), nn::ReLU());
}

}  // namespace

EncoderDecoder::EncoderDecoder(int base_width, int levels) : levels_(levels) {
  if (base_width < kGroups || base_width % kGroups != 0) {
    fail(ErrorCode::kInvalidArgument, "base_width must be a positive multiple of 4");
  }
  if (levels < 1 || levels > 6) fail(ErrorCode::kInvalidArgument, "levels must lie in [1, 6]");
  int in = 3;
  for (int i = 0; i < levels; ++i) {
    const int out = base_width << i;
    down_.push_back(register_module("down" + std::to_string(i), conv_block(in, out)));
    in = out;
  }
  for (int i = levels - 2; i >= 0; --i) {
    const int skip = base_width << i;
    up_.push_back(register_module("up" + std::to_string(i), conv_block(in + skip, skip)));
    in = skip;
  }
  head_ = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, kNumClasses, 1)));
}

torch::Tensor EncoderDecoder::forward(torch::Tensor x) {
  std::vector<torch::Tensor> skips;
  for (int i = 0; i < levels_; ++i) {
    if (i > 0) x = torch::max_pool2d(x, 2);
    x = down_[i]->forward(x);
    skips.push_back(x);
  }
  for (int i = 0; i + 1 < levels_; ++i) {
    const auto& skip = skips[levels_ - 2 - i];
    x = torch::upsample_nearest2d(x, std::vector<int64_t>{skip.size(2), skip.size(3)});
    x = up_[i]->forward(torch::cat({x, skip}, 1));
  }
  return head_->forward(x);
}

ModelRegistry::ModelRegistry() {
  factories_["encdec"] = [](const ModelSpec& s) -> ModelPtr {
    return std::make_shared<EncoderDecoder>(s.base_width, s.levels);
  };
}

ModelRegistry& ModelRegistry::instance() {
  static ModelRegistry registry;
  return registry;
}

void ModelRegistry::add(const std::string& name, Factory factory) { factories_[name] = std::move(factory); }

ModelPtr ModelRegistry::create(const ModelSpec& spec) const {
  const auto it = factories_.find(spec.backbone);
  if (it == factories_.end()) fail(ErrorCode::kInvalidArgument, "unknown backbone '" + spec.backbone + "'");
  return it->second(spec);
}

std::vector<std::string> ModelRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, f] : factories_) out.push_back(name);
  return out;
}

torch::Tensor forward_checked(SegmentationModel& model, const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) {
    fail(ErrorCode::kShapeMismatch, "model input must be (N, 3, H, W)");
  }
  const int s = model.stride();
  if (images.size(2) % s != 0 || images.size(3) % s != 0) {
    fail(ErrorCode::kShapeMismatch, "input height and width must be divisible by " + std::to_string(s));
  }
  auto logits = model.forward(images);
  if (logits.dim() != 4 || logits.size(0) != images.size(0) || logits.size(1) != kNumClasses ||
      logits.size(2) != images.size(2) || logits.size(3) != images.size(3)) {
    fail(ErrorCode::kShapeMismatch, "model output must be (N, 4, H, W) matching the input");
  }
  return logits;
}

std::int64_t parameter_count(const torch::nn::Module& m) {
  std::int64_t n = 0;
  for (const auto& p : m.parameters()) n += p.numel();
  return n;
}

Normalizer compute_normalizer(std::span<const Image> images) {
  std::array<double, 3> sum{};
  std::array<double, 3> sq{};
  double count = 0;
  for (const auto& img : images) {
    const auto d = img.data();
    for (std::size_t i = 0; i + 2 < d.size(); i += 3) {
      for (int k = 0; k < 3; ++k) {
        sum[k] += d[i + k];
        sq[k] += static_cast<double>(d[i + k]) * d[i + k];
      }
    }
    count += static_cast<double>(img.pixel_count());
  }
  Normalizer n;
  if (count == 0) return n;
  for (int k = 0; k < 3; ++k) {
    n.mean[k] = sum[k] / count;
    n.std[k] = std::max(1.0, std::sqrt(std::max(0.0, sq[k] / count - n.mean[k] * n.mean[k])));
  }
  return n;
}

torch::Tensor to_tensor(std::span<const Image> images, const Normalizer& norm) {
  if (images.empty()) return torch::empty({0, 3, 0, 0});
  const int h = images[0].height();
  const int w = images[0].width();
  auto out = torch::empty({static_cast<std::int64_t>(images.size()), 3, h, w}, torch::kFloat32);
  auto* dst = out.data_ptr<float>();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t b = 0; b < images.size(); ++b) {
    const auto& img = images[b];
    if (img.height() != h || img.width() != w || img.channels() != 3) {
      fail(ErrorCode::kShapeMismatch, "batch images must share one size and be RGB");
    }
    const auto src = img.data();
    for (int k = 0; k < 3; ++k) {
      const float mean = static_cast<float>(norm.mean[k]);
      const float inv = static_cast<float>(1.0 / norm.std[k]);
      float* p = dst + (b * 3 + k) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] = (static_cast<float>(src[i * 3 + k]) - mean) * inv;
    }
  }
  return out;
}

std::vector<std::vector<double>> logits_to_double(const torch::Tensor& logits) {
  const auto t = logits.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  const std::size_t per = static_cast<std::size_t>(t.numel() / std::max<std::int64_t>(1, t.size(0)));
  std::vector<std::vector<double>> out;
  const double* p = t.data_ptr<double>();
  for (std::int64_t b = 0; b < t.size(0); ++b) out.emplace_back(p + b * per, p + (b + 1) * per);
  return out;
}

std::vector<LabelMap> argmax_maps(const torch::Tensor& logits) {
  const auto idx = logits.detach().argmax(1).to(torch::kUInt8).contiguous();
  const int h = static_cast<int>(idx.size(1));
  const int w = static_cast<int>(idx.size(2));
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<LabelMap> out;
  const auto* p = idx.data_ptr<std::uint8_t>();
  for (std::int64_t b = 0; b < idx.size(0); ++b) {
    out.emplace_back(h, w, 1, std::vector<std::uint8_t>(p + b * plane, p + (b + 1) * plane));
  }
  return out;
}

void copy_parameters(torch::nn::Module& dst, const torch::nn::Module& src) {
  torch::NoGradGuard guard;
  auto dp = dst.named_parameters(true);
  const auto sp = src.named_parameters(true);
  if (dp.size() != sp.size()) fail(ErrorCode::kShapeMismatch, "parameter sets differ");
  for (const auto& item : sp) {
    auto* target = dp.find(item.key());
    if (!target || !target->sizes().equals(item.value().sizes())) {
      fail(ErrorCode::kShapeMismatch, "parameter '" + item.key() + "' differs in shape");
    }
    target->copy_(item.value());
  }
  auto db = dst.named_buffers(true);
  for (const auto& item : src.named_buffers(true)) {
    if (auto* target = db.find(item.key())) target->copy_(item.value());
  }
}

TeacherState::TeacherState(const ModelSpec& spec, SegmentationModel& student, double decay_) : decay(decay_) {
  if (!(decay >= 0.0 && decay < 1.0)) fail(ErrorCode::kInvalidArgument, "EMA decay must lie in [0, 1)");
  shadow = create_model(spec);
  copy_parameters(*shadow, student);
  for (auto& p : shadow->parameters()) p.set_requires_grad(false);
}

void ema_update(TeacherState& teacher, SegmentationModel& student) {
  torch::NoGradGuard guard;
  auto tp = teacher.shadow->parameters();
  const auto sp = student.parameters();
  if (tp.size() != sp.size()) fail(ErrorCode::kShapeMismatch, "teacher and student parameter counts differ");
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (!tp[i].sizes().equals(sp[i].sizes())) fail(ErrorCode::kShapeMismatch, "teacher/student shape mismatch");
    tp[i].mul_(teacher.decay).add_(sp[i].detach(), 1.0 - teacher.decay);
  }
}

std::vector<LabelMap> TorchSegmenter::predict(std::span<const Image> patches, std::span<const PatchRef>) {
  torch::NoGradGuard guard;
  const bool was_training = model_->is_training();
  model_->eval();
  auto logits = forward_checked(*model_, to_tensor(patches, norm_));
  if (was_training) model_->train();
  return argmax_maps(logits);
}

}  // namespace psss

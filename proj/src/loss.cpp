#include "psss/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace psss {

LogitsView make_logits_view(std::span<const double> data, Size2 size) {
  const std::size_t want = static_cast<std::size_t>(kNumClasses) * size.height * size.width;
  if (size.height < 0 || size.width < 0 || data.size() != want) {
    fail(ErrorCode::kShapeMismatch, "logits buffer holds " + std::to_string(data.size()) + " values, expected " +
                                        std::to_string(want));
  }
  return {data, size};
}

std::array<double, kNumClasses> softmax_at(const LogitsView& logits, std::size_t pixel) {
  std::array<double, kNumClasses> p{};
  double mx = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < kNumClasses; ++c) mx = std::max(mx, logits.at(c, pixel));
  double sum = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    p[c] = std::exp(logits.at(c, pixel) - mx);
    sum += p[c];
  }
  for (auto& v : p) v /= sum;
  return p;
}

void PsssConfig::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) fail(ErrorCode::kInvalidArgument, "tau must lie strictly inside (0, 1)");
  if (!(lambda >= 0.0)) fail(ErrorCode::kInvalidArgument, "lambda must be >= 0");
}

PseudoLabel pseudo_label_from_logits(const LogitsView& weak) {
  PseudoLabel out{weak.size, std::vector<std::uint8_t>(weak.pixels()), std::vector<double>(weak.pixels())};
  for (std::size_t m = 0; m < weak.pixels(); ++m) {
    const auto p = softmax_at(weak, m);
    const auto best = std::max_element(p.begin(), p.end());
    out.cls[m] = static_cast<std::uint8_t>(best - p.begin());
    out.conf[m] = *best;
  }
  return out;
}

PixelSetPartition partition_pixels(const PartialMask& partial, const PseudoLabel& pseudo, const PsssConfig& cfg) {
  if (partial.size() != pseudo.size || pseudo.cls.size() != pseudo.conf.size() ||
      pseudo.cls.size() != partial.labels().pixel_count()) {
    fail(ErrorCode::kShapeMismatch, "partial mask and pseudo-label dimensions differ");
  }
  const auto labels = partial.labels().data();
  PixelSetPartition part;
  part.size = partial.size();
  part.provenance.resize(labels.size());
  for (std::uint32_t m = 0; m < labels.size(); ++m) {
    const auto y = labels[m];
    const auto c = static_cast<ClassId>(pseudo.cls[m]);
    if (y == 1 || y == 2) {
      part.provenance[m] = Provenance::kGroundTruth;
      part.s1.push_back(m);
    } else if ((c == ClassId::kBackground || c == ClassId::kV3) && pseudo.conf[m] > cfg.tau) {
      part.provenance[m] = Provenance::kConfidentPseudo;
      part.s2.push_back(m);
    } else {
      part.provenance[m] = Provenance::kUncertain;
      part.s3.push_back(m);
    }
  }
  return part;
}

namespace {

void check_same_size(const LogitsView& logits, Size2 size) {
  if (logits.size != size) fail(ErrorCode::kShapeMismatch, "logits and label dimensions differ");
}

/// Mean cross-entropy of `target(m)` over `pixels`, with gradient p - onehot.
template <typename TargetFn>
LossValue mean_cross_entropy(const LogitsView& logits, std::span<const std::uint32_t> pixels, TargetFn target,
                             bool want_grad) {
  LossValue out;
  if (want_grad) out.grad.assign(logits.data.size(), 0.0);
  if (pixels.empty()) return out;
  const double inv = 1.0 / static_cast<double>(pixels.size());
  const std::size_t plane = logits.pixels();
  double sum = 0.0;
  for (const auto m : pixels) {
    const int y = target(m);
    // -log p_y via log-sum-exp keeps saturated predictions finite.
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < kNumClasses; ++c) mx = std::max(mx, logits.at(c, m));
    double lse = 0.0;
    for (int c = 0; c < kNumClasses; ++c) lse += std::exp(logits.at(c, m) - mx);
    sum += mx + std::log(lse) - logits.at(y, m);
    if (want_grad) {
      const auto p = softmax_at(logits, m);
      for (int c = 0; c < kNumClasses; ++c) out.grad[c * plane + m] = (p[c] - (c == y ? 1.0 : 0.0)) * inv;
    }
  }
  out.value = sum * inv;
  return out;
}

}  // namespace

LossValue loss_partial_supervised(const LogitsView& strong, const PartialMask& partial,
                                  const PixelSetPartition& part, bool want_grad) {
  check_same_size(strong, part.size);
  check_same_size(strong, partial.size());
  const auto labels = partial.labels().data();
  return mean_cross_entropy(strong, part.s1, [&](std::uint32_t m) { return static_cast<int>(labels[m]); }, want_grad);
}

LossValue loss_pseudo(const LogitsView& strong, const PseudoLabel& pseudo, const PixelSetPartition& part,
                      bool want_grad) {
  check_same_size(strong, part.size);
  check_same_size(strong, pseudo.size);
  return mean_cross_entropy(strong, part.s2, [&](std::uint32_t m) { return static_cast<int>(pseudo.cls[m]); },
                            want_grad);
}

LossValue loss_exclusion(const LogitsView& strong, const PixelSetPartition& part, bool want_grad) {
  check_same_size(strong, part.size);
  LossValue out;
  if (want_grad) out.grad.assign(strong.data.size(), 0.0);
  if (part.s3.empty()) return out;
  const double inv = 1.0 / static_cast<double>(part.s3.size());
  const std::size_t plane = strong.pixels();
  double sum = 0.0;
  for (const auto m : part.s3) {
    const auto p = softmax_at(strong, m);
    // dL/dz_k = e_k p_k / (1 + p_k) - p_k * sum_c e_c p_c / (1 + p_c)
    double weighted = 0.0;
    for (int c = 0; c < kNumClasses; ++c) {
      sum += kExclusionVector[c] * std::log1p(p[c]);
      weighted += kExclusionVector[c] * p[c] / (1.0 + p[c]);
    }
    if (want_grad) {
      for (int k = 0; k < kNumClasses; ++k) {
        out.grad[k * plane + m] = (kExclusionVector[k] * p[k] / (1.0 + p[k]) - p[k] * weighted) * inv;
      }
    }
  }
  out.value = sum * inv;
  return out;
}

PartialLossBreakdown loss_partial_total(const LogitsView& strong, const PartialMask& partial,
                                        const PseudoLabel& pseudo, const PsssConfig& cfg,
                                        const LossToggles& toggles, bool want_grad) {
  const auto part = partition_pixels(partial, pseudo, cfg);
  const auto ls = loss_partial_supervised(strong, partial, part, want_grad);
  const auto lu = loss_pseudo(strong, pseudo, part, want_grad);
  const auto lc = loss_exclusion(strong, part, want_grad);

  PartialLossBreakdown out;
  out.supervised = ls.value;
  out.pseudo = lu.value;
  out.exclusion = lc.value;
  out.n_s1 = part.s1.size();
  out.n_s2 = part.s2.size();
  out.n_s3 = part.s3.size();
  out.total = (toggles.supervised ? ls.value : 0.0) + (toggles.pseudo ? lu.value : 0.0) +
              (toggles.exclusion ? lc.value : 0.0);
  if (want_grad) {
    out.grad.assign(strong.data.size(), 0.0);
    for (std::size_t i = 0; i < out.grad.size(); ++i) {
      out.grad[i] = (toggles.supervised ? ls.grad[i] : 0.0) + (toggles.pseudo ? lu.grad[i] : 0.0) +
                    (toggles.exclusion ? lc.grad[i] : 0.0);
    }
  }
  return out;
}

}  // namespace psss

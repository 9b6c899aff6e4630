#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "psss/core.hpp"

namespace psss {

/// Per-class weights of the exclusion loss: penalize background, V1 and V2 mass, never V3.
inline constexpr std::array<double, kNumClasses> kExclusionVector{1.0, 1.0, 1.0, 0.0};

/// Logits of one patch, channel-major (4, H, W) as produced by an NCHW network.
struct LogitsView {
  std::span<const double> data;
  Size2 size;

  std::size_t pixels() const noexcept { return static_cast<std::size_t>(size.height) * size.width; }
  double at(int cls, std::size_t pixel) const noexcept { return data[cls * pixels() + pixel]; }
};

/// Throws kShapeMismatch unless `data` holds exactly 4 * H * W values.
LogitsView make_logits_view(std::span<const double> data, Size2 size);

/// Numerically stable softmax of one pixel.
std::array<double, kNumClasses> softmax_at(const LogitsView& logits, std::size_t pixel);

struct PsssConfig {
  double tau = 0.95;
  double lambda = 1.0;

  /// Throws kInvalidArgument unless 0 < tau < 1 and lambda >= 0.
  void validate() const;
};

/// Argmax class and its softmax probability per pixel, taken from the weak view.
struct PseudoLabel {
  Size2 size;
  std::vector<std::uint8_t> cls;
  std::vector<double> conf;
};

PseudoLabel pseudo_label_from_logits(const LogitsView& weak);

enum class Provenance : std::uint8_t { kGroundTruth = 1, kConfidentPseudo = 2, kUncertain = 3 };

/// Disjoint split of a patch's pixels into S1 (partial ground truth), S2 (confident
/// background/V3 pseudo-labels) and S3 (everything else).
struct PixelSetPartition {
  Size2 size;
  std::vector<Provenance> provenance;
  std::vector<std::uint32_t> s1;
  std::vector<std::uint32_t> s2;
  std::vector<std::uint32_t> s3;
};

PixelSetPartition partition_pixels(const PartialMask& partial, const PseudoLabel& pseudo, const PsssConfig& cfg);

/// A scalar loss plus, when requested, its gradient with respect to the logits
/// (same layout as the input view).
struct LossValue {
  double value = 0.0;
  std::vector<double> grad;
};

/// Mean cross-entropy over S1 against the partial ground truth. 0 on empty S1.
LossValue loss_partial_supervised(const LogitsView& strong, const PartialMask& partial,
                                  const PixelSetPartition& part, bool want_grad = false);

/// Mean cross-entropy over S2 against the (constant) pseudo classes. 0 on empty S2.
LossValue loss_pseudo(const LogitsView& strong, const PseudoLabel& pseudo, const PixelSetPartition& part,
                      bool want_grad = false);

/// Mean over S3 of sum_c e_c * ln(1 + p_c). 0 on empty S3.
LossValue loss_exclusion(const LogitsView& strong, const PixelSetPartition& part, bool want_grad = false);

struct LossToggles {
  bool supervised = true;
  bool pseudo = true;
  bool exclusion = true;
};

struct PartialLossBreakdown {
  double total = 0.0;  // unweighted sum of enabled components
  double supervised = 0.0;
  double pseudo = 0.0;
  double exclusion = 0.0;
  std::size_t n_s1 = 0;
  std::size_t n_s2 = 0;
  std::size_t n_s3 = 0;
  std::vector<double> grad;  // gradient of `total`
};

/// Partitions internally and evaluates all three components. Disabled components are
/// still reported but contribute nothing to `total` or `grad`.
PartialLossBreakdown loss_partial_total(const LogitsView& strong, const PartialMask& partial,
                                        const PseudoLabel& pseudo, const PsssConfig& cfg,
                                        const LossToggles& toggles = {}, bool want_grad = false);

}  // namespace psss

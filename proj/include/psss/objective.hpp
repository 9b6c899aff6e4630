#pragma once

#include <span>
#include <vector>

#include "psss/loss.hpp"

namespace psss {

/// base_lr * (1 - iter / max_iter)^power. Requires 0 <= iter <= max_iter.
double poly_lr(double base_lr, long iter, long max_iter, double power);

/// Loss value over a batch plus one gradient buffer per patch.
struct BatchLoss {
  double value = 0.0;
  std::size_t counted = 0;  // pixels that contributed
  std::vector<std::vector<double>> grads;
};

/// Mean pixelwise cross-entropy over every pixel of the batch.
BatchLoss loss_supervised(std::span<const LogitsView> logits, std::span<const SegMask> masks, bool want_grad = false);

/// Mean cross-entropy against the pseudo class over pixels with conf > tau_u, pooled
/// across the batch; any class may be a target. 0 when no pixel passes.
BatchLoss loss_unsupervised(std::span<const LogitsView> logits, std::span<const PseudoLabel> pseudo, double tau_u,
                            bool want_grad = false);

struct PartialBatchLoss {
  PartialLossBreakdown mean;  // component means over patches; grad unused
  std::vector<std::vector<double>> grads;
};

/// Per-patch partial losses averaged over the batch.
PartialBatchLoss loss_partial_batch(std::span<const LogitsView> logits, std::span<const PartialMask> partial,
                                    std::span<const PseudoLabel> pseudo, const PsssConfig& cfg,
                                    const LossToggles& toggles, bool want_grad = false);

/// Which terms of L = L_S + L_U + lambda * L_P are active.
struct ObjectiveSettings {
  bool supervised = true;
  bool unsupervised = true;
  double tau_u = 0.95;
  PsssConfig psss;
  LossToggles toggles;
};

/// Tri-stream inputs. Any stream may be empty.
struct ObjectiveInputs {
  std::span<const LogitsView> full;
  std::span<const SegMask> masks;
  std::span<const LogitsView> unlabeled;
  std::span<const PseudoLabel> unlabeled_pseudo;
  std::span<const LogitsView> partial;
  std::span<const PartialMask> partial_masks;
  std::span<const PseudoLabel> partial_pseudo;
};

struct ObjectiveValue {
  double total = 0.0;
  double supervised = 0.0;    // L_S
  double unsupervised = 0.0;  // L_U
  double partial = 0.0;       // L_P, unweighted
  double partial_supervised = 0.0;
  double partial_pseudo = 0.0;
  double partial_exclusion = 0.0;
  double s1 = 0.0;  // mean set sizes per partial patch
  double s2 = 0.0;
  double s3 = 0.0;
  std::size_t confident_unlabeled = 0;
  std::vector<std::vector<double>> grad_full;
  std::vector<std::vector<double>> grad_unlabeled;
  std::vector<std::vector<double>> grad_partial;
};

/// Evaluates the combined objective; disabled terms are still reported but add
/// nothing to `total` or the gradients.
ObjectiveValue evaluate_objective(const ObjectiveInputs& in, const ObjectiveSettings& settings, bool want_grad = false);

}  // namespace psss

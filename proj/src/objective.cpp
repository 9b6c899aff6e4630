#include "psss/objective.hpp"

#include <cmath>
#include <limits>

namespace psss {

double poly_lr(double base_lr, long iter, long max_iter, double power) {
  if (max_iter <= 0 || iter < 0 || iter > max_iter) {
    fail(ErrorCode::kInvalidArgument, "poly_lr requires 0 <= iter <= max_iter and max_iter > 0");
  }
  if (iter == max_iter) return 0.0;
  return base_lr * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(max_iter), power);
}

namespace {

double neg_log_softmax(const LogitsView& logits, std::size_t m, int y) {
  double mx = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < kNumClasses; ++c) mx = std::max(mx, logits.at(c, m));
  double lse = 0.0;
  for (int c = 0; c < kNumClasses; ++c) lse += std::exp(logits.at(c, m) - mx);
  return mx + std::log(lse) - logits.at(y, m);
}

void add_ce_grad(const LogitsView& logits, std::size_t m, int y, double scale, std::vector<double>& grad) {
  const auto p = softmax_at(logits, m);
  const std::size_t plane = logits.pixels();
  for (int c = 0; c < kNumClasses; ++c) grad[c * plane + m] += (p[c] - (c == y ? 1.0 : 0.0)) * scale;
}

void scale_into(std::vector<std::vector<double>>& dst, const std::vector<std::vector<double>>& src, double k) {
  dst.resize(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i].resize(src[i].size());
    for (std::size_t j = 0; j < src[i].size(); ++j) dst[i][j] = k * src[i][j];
  }
}

std::vector<std::vector<double>> zero_grads(std::span<const LogitsView> logits) {
  std::vector<std::vector<double>> out;
  for (const auto& l : logits) out.emplace_back(l.data.size(), 0.0);
  return out;
}

}  // namespace

BatchLoss loss_supervised(std::span<const LogitsView> logits, std::span<const SegMask> masks, bool want_grad) {
  if (logits.size() != masks.size()) fail(ErrorCode::kShapeMismatch, "logits and mask batch sizes differ");
  BatchLoss out;
  if (want_grad) out.grads = zero_grads(logits);
  for (std::size_t b = 0; b < logits.size(); ++b) {
    if (logits[b].size != masks[b].size()) fail(ErrorCode::kShapeMismatch, "logits and mask dimensions differ");
    out.counted += logits[b].pixels();
  }
  if (out.counted == 0) return out;
  const double inv = 1.0 / static_cast<double>(out.counted);
  double sum = 0.0;
  for (std::size_t b = 0; b < logits.size(); ++b) {
    const auto labels = masks[b].labels().data();
    for (std::size_t m = 0; m < logits[b].pixels(); ++m) {
      sum += neg_log_softmax(logits[b], m, labels[m]);
      if (want_grad) add_ce_grad(logits[b], m, labels[m], inv, out.grads[b]);
    }
  }
  out.value = sum * inv;
  return out;
}

BatchLoss loss_unsupervised(std::span<const LogitsView> logits, std::span<const PseudoLabel> pseudo, double tau_u,
                            bool want_grad) {
  if (logits.size() != pseudo.size()) fail(ErrorCode::kShapeMismatch, "logits and pseudo-label batch sizes differ");
  BatchLoss out;
  if (want_grad) out.grads = zero_grads(logits);
  for (std::size_t b = 0; b < logits.size(); ++b) {
    if (logits[b].size != pseudo[b].size) fail(ErrorCode::kShapeMismatch, "logits and pseudo-label dimensions differ");
    for (const double c : pseudo[b].conf) out.counted += c > tau_u ? 1 : 0;
  }
  if (out.counted == 0) return out;
  const double inv = 1.0 / static_cast<double>(out.counted);
  double sum = 0.0;
  for (std::size_t b = 0; b < logits.size(); ++b) {
    for (std::size_t m = 0; m < logits[b].pixels(); ++m) {
      if (!(pseudo[b].conf[m] > tau_u)) continue;
      const int y = pseudo[b].cls[m];
      sum += neg_log_softmax(logits[b], m, y);
      if (want_grad) add_ce_grad(logits[b], m, y, inv, out.grads[b]);
    }
  }
  out.value = sum * inv;
  return out;
}

PartialBatchLoss loss_partial_batch(std::span<const LogitsView> logits, std::span<const PartialMask> partial,
                                    std::span<const PseudoLabel> pseudo, const PsssConfig& cfg,
                                    const LossToggles& toggles, bool want_grad) {
  if (logits.size() != partial.size() || logits.size() != pseudo.size()) {
    fail(ErrorCode::kShapeMismatch, "partial batch streams differ in size");
  }
  PartialBatchLoss out;
  if (logits.empty()) return out;
  const double inv = 1.0 / static_cast<double>(logits.size());
  auto& mean = out.mean;
  for (std::size_t b = 0; b < logits.size(); ++b) {
    auto r = loss_partial_total(logits[b], partial[b], pseudo[b], cfg, toggles, want_grad);
    mean.total += r.total * inv;
    mean.supervised += r.supervised * inv;
    mean.pseudo += r.pseudo * inv;
    mean.exclusion += r.exclusion * inv;
    mean.n_s1 += r.n_s1;
    mean.n_s2 += r.n_s2;
    mean.n_s3 += r.n_s3;
    if (want_grad) {
      for (auto& g : r.grad) g *= inv;
      out.grads.push_back(std::move(r.grad));
    }
  }
  return out;
}

ObjectiveValue evaluate_objective(const ObjectiveInputs& in, const ObjectiveSettings& settings, bool want_grad) {
  settings.psss.validate();
  ObjectiveValue out;

  const auto ls = loss_supervised(in.full, in.masks, want_grad);
  const auto lu = loss_unsupervised(in.unlabeled, in.unlabeled_pseudo, settings.tau_u, want_grad);
  const auto lp = loss_partial_batch(in.partial, in.partial_masks, in.partial_pseudo, settings.psss,
                                     settings.toggles, want_grad);

  out.supervised = ls.value;
  out.unsupervised = lu.value;
  out.partial = lp.mean.total;
  out.partial_supervised = lp.mean.supervised;
  out.partial_pseudo = lp.mean.pseudo;
  out.partial_exclusion = lp.mean.exclusion;
  out.confident_unlabeled = lu.counted;
  if (!in.partial.empty()) {
    const double n = static_cast<double>(in.partial.size());
    out.s1 = static_cast<double>(lp.mean.n_s1) / n;
    out.s2 = static_cast<double>(lp.mean.n_s2) / n;
    out.s3 = static_cast<double>(lp.mean.n_s3) / n;
  }

  const double ws = settings.supervised ? 1.0 : 0.0;
  const double wu = settings.unsupervised ? 1.0 : 0.0;
  const double wp = settings.psss.lambda;
  out.total = ws * out.supervised + wu * out.unsupervised + wp * out.partial;

  if (want_grad) {
    scale_into(out.grad_full, ls.grads, ws);
    scale_into(out.grad_unlabeled, lu.grads, wu);
    scale_into(out.grad_partial, lp.grads, wp);
  }
  return out;
}

}  // namespace psss

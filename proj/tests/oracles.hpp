#pragma once

// Reference implementations used only by tests. They are written as plain per-pixel
// loops over the raw formulas and share no code with the library's loss kernels.

#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include "psss/core.hpp"

namespace oracle {

constexpr int C = 4;
constexpr std::uint8_t UNK = 255;

/// Logits are channel-major: value of class c at pixel m is z[c * n + m].
inline std::vector<double> probs_at(const std::vector<double>& z, int n, int m) {
  std::vector<double> e(C);
  double s = 0;
  for (int c = 0; c < C; ++c) {
    e[c] = std::exp(z[c * n + m]);
    s += e[c];
  }
  for (auto& v : e) v /= s;
  return e;
}

struct Sets {
  std::set<int> s1, s2, s3;
};

inline Sets partition(const std::vector<std::uint8_t>& partial, const std::vector<std::uint8_t>& cls,
                      const std::vector<double>& conf, double tau) {
  Sets out;
  const int n = static_cast<int>(partial.size());
  std::set<int> all;
  for (int m = 0; m < n; ++m) all.insert(m);
  for (int m = 0; m < n; ++m) {
    if (partial[m] == 1 || partial[m] == 2) out.s1.insert(m);
  }
  for (int m = 0; m < n; ++m) {
    if (!out.s1.count(m) && (cls[m] == 0 || cls[m] == 3) && conf[m] > tau) out.s2.insert(m);
  }
  for (int m : all) {
    if (!out.s1.count(m) && !out.s2.count(m)) out.s3.insert(m);
  }
  return out;
}

inline double mean_ce(const std::vector<double>& z, int n, const std::set<int>& px,
                      const std::function<int(int)>& target) {
  if (px.empty()) return 0.0;
  double s = 0;
  for (int m : px) s += -std::log(probs_at(z, n, m)[target(m)]);
  return s / static_cast<double>(px.size());
}

inline double exclusion(const std::vector<double>& z, int n, const std::set<int>& px) {
  if (px.empty()) return 0.0;
  const double e[C] = {1, 1, 1, 0};
  double s = 0;
  for (int m : px) {
    const auto p = probs_at(z, n, m);
    for (int c = 0; c < C; ++c) s += e[c] * std::log(1.0 + p[c]);
  }
  return s / static_cast<double>(px.size());
}

struct PartialLosses {
  double s = 0, u = 0, c = 0;
};

inline PartialLosses partial_losses(const std::vector<double>& z, const std::vector<std::uint8_t>& partial,
                                    const std::vector<std::uint8_t>& cls, const std::vector<double>& conf, double tau) {
  const int n = static_cast<int>(partial.size());
  const auto sets = partition(partial, cls, conf, tau);
  PartialLosses out;
  out.s = mean_ce(z, n, sets.s1, [&](int m) { return int{partial[m]}; });
  out.u = mean_ce(z, n, sets.s2, [&](int m) { return int{cls[m]}; });
  out.c = exclusion(z, n, sets.s3);
  return out;
}

/// Batch mean cross-entropy over all pixels.
inline double supervised(const std::vector<std::vector<double>>& zs, const std::vector<std::vector<std::uint8_t>>& ys) {
  double s = 0;
  long count = 0;
  for (std::size_t b = 0; b < zs.size(); ++b) {
    const int n = static_cast<int>(ys[b].size());
    for (int m = 0; m < n; ++m) {
      s += -std::log(probs_at(zs[b], n, m)[ys[b][m]]);
      ++count;
    }
  }
  return count ? s / count : 0.0;
}

/// Batch-pooled cross-entropy over pixels whose confidence exceeds tau.
inline double unsupervised(const std::vector<std::vector<double>>& zs, const std::vector<std::vector<std::uint8_t>>& cls,
                           const std::vector<std::vector<double>>& conf, double tau) {
  double s = 0;
  long count = 0;
  for (std::size_t b = 0; b < zs.size(); ++b) {
    const int n = static_cast<int>(cls[b].size());
    for (int m = 0; m < n; ++m) {
      if (conf[b][m] > tau) {
        s += -std::log(probs_at(zs[b], n, m)[cls[b][m]]);
        ++count;
      }
    }
  }
  return count ? s / count : 0.0;
}

/// Central finite differences of f at x.
inline std::vector<double> fd_grad(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                                   double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f(x);
    x[i] = keep - h;
    const double fm = f(x);
    x[i] = keep;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / max(1e-8, max_i |b_i|) — relative to the gradient's scale.
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0, scale = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return diff / std::max(1e-8, scale);
}

// ---------------------------------------------------------------------------
// Random case generators

inline std::vector<double> random_logits(psss::Rng& rng, int n, double scale = 3.0) {
  std::vector<double> z(static_cast<std::size_t>(C) * n);
  for (auto& v : z) v = rng.normal(0.0, scale);
  return z;
}

inline std::vector<std::uint8_t> random_partial(psss::Rng& rng, int n, double known = 0.3) {
  std::vector<std::uint8_t> y(n);
  for (auto& v : y) v = rng.bernoulli(known) ? static_cast<std::uint8_t>(rng.uniform_int(1, 2)) : UNK;
  return y;
}

inline std::vector<std::uint8_t> random_classes(psss::Rng& rng, int n) {
  std::vector<std::uint8_t> y(n);
  for (auto& v : y) v = static_cast<std::uint8_t>(rng.uniform_int(0, 3));
  return y;
}

/// Confidences biased toward the threshold region so both sides of tau are exercised.
inline std::vector<double> random_conf(psss::Rng& rng, int n) {
  std::vector<double> c(n);
  for (auto& v : c) v = rng.bernoulli(0.5) ? rng.uniform(0.9, 1.0) : rng.uniform(0.25, 1.0);
  return c;
}

}  // namespace oracle

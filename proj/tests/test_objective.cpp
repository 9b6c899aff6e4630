#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "psss/objective.hpp"

using namespace psss;

namespace {

std::vector<LogitsView> views(const std::vector<std::vector<double>>& zs, Size2 sz) {
  std::vector<LogitsView> out;
  for (const auto& z : zs) out.push_back(make_logits_view(z, sz));
  return out;
}

std::vector<double> one_pixel(std::initializer_list<double> probs) {
  std::vector<double> z;
  for (double p : probs) z.push_back(std::log(p));
  return z;
}

/// A tri-stream batch of 4x4 patches with fixed pseudo-labels.
struct Fixture {
  Size2 sz{4, 4};
  int n = 16;
  std::vector<std::vector<double>> full, unl, part;
  std::vector<SegMask> masks;
  std::vector<PseudoLabel> unl_pseudo, part_pseudo;
  std::vector<PartialMask> part_masks;

  explicit Fixture(Rng& rng, int per_stream = 2) {
    for (int b = 0; b < per_stream; ++b) {
      full.push_back(oracle::random_logits(rng, n, 2.0));
      masks.emplace_back(LabelMap(4, 4, 1, oracle::random_classes(rng, n)));
      unl.push_back(oracle::random_logits(rng, n, 2.0));
      const auto wu = oracle::random_logits(rng, n, 5.0);
      unl_pseudo.push_back(pseudo_label_from_logits(make_logits_view(wu, sz)));
      part.push_back(oracle::random_logits(rng, n, 2.0));
      part_masks.emplace_back(LabelMap(4, 4, 1, oracle::random_partial(rng, n, 0.4)));
      const auto wp = oracle::random_logits(rng, n, 5.0);
      part_pseudo.push_back(pseudo_label_from_logits(make_logits_view(wp, sz)));
    }
  }

  ObjectiveValue eval(const ObjectiveSettings& s, bool grad) const {
    const auto vf = views(full, sz), vu = views(unl, sz), vp = views(part, sz);
    ObjectiveInputs in{vf, masks, vu, unl_pseudo, vp, part_masks, part_pseudo};
    return evaluate_objective(in, s, grad);
  }
};

std::vector<double> flatten(const std::vector<std::vector<std::vector<double>>*>& parts) {
  std::vector<double> out;
  for (const auto* p : parts) {
    for (const auto& v : *p) out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

}  // namespace

TEST_CASE("poly learning rate endpoints and midpoint") {
  CHECK(poly_lr(1e-3, 0, 1000, 0.9) == 1e-3);
  CHECK(poly_lr(1e-3, 1000, 1000, 0.9) == 0.0);
  CHECK(std::abs(poly_lr(1e-3, 500, 1000, 0.9) - 5.359e-4) < 1e-7);
  CHECK(poly_lr(1e-3, 500, 1000, 0.9) == doctest::Approx(1e-3 * std::pow(0.5, 0.9)).epsilon(1e-15));
  CHECK_THROWS_AS(poly_lr(1e-3, 1001, 1000, 0.9), Error);
  CHECK_THROWS_AS(poly_lr(1e-3, -1, 1000, 0.9), Error);
}

TEST_CASE("poly learning rate is non-increasing") {
  double prev = poly_lr(0.01, 0, 777, 0.9);
  for (long it = 1; it <= 777; ++it) {
    const double lr = poly_lr(0.01, it, 777, 0.9);
    CHECK(lr <= prev);
    prev = lr;
  }
}

TEST_CASE("supervised loss spot values") {
  const std::vector<double> onehot = {0.0, 0.0, 60.0, 0.0};
  const SegMask y2(LabelMap(1, 1, 1, 2));
  const std::vector<LogitsView> v{make_logits_view(onehot, {1, 1})};
  CHECK(loss_supervised(v, std::vector{y2}).value == doctest::Approx(0.0).epsilon(1e-12));

  const std::vector<double> zero(4 * 6, 0.0);
  const std::vector<LogitsView> u{make_logits_view(zero, {2, 3})};
  const SegMask any(LabelMap(2, 3, 1, std::vector<std::uint8_t>{0, 1, 2, 3, 3, 1}));
  CHECK(loss_supervised(u, std::vector{any}).value == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(std::abs(loss_supervised(u, std::vector{any}).value - 1.3863) < 1e-4);
}

TEST_CASE("unsupervised loss spot values") {
  const auto z = one_pixel({0.5, 0.2, 0.2, 0.1});
  const std::vector<LogitsView> v{make_logits_view(z, {1, 1})};
  const std::vector<PseudoLabel> low{PseudoLabel{{1, 1}, {0}, {0.9}}};
  CHECK(loss_unsupervised(v, low, 0.95).value == 0.0);
  CHECK(loss_unsupervised(v, low, 0.95).counted == 0);

  const std::vector<PseudoLabel> sure{PseudoLabel{{1, 1}, {0}, {0.99}}};
  CHECK(loss_unsupervised(v, sure, 0.95).value == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  const std::vector<double> certain = {0.0, 0.0, 0.0, 60.0};
  const std::vector<LogitsView> c{make_logits_view(certain, {1, 1})};
  const std::vector<PseudoLabel> v3{PseudoLabel{{1, 1}, {3}, {0.99}}};
  CHECK(loss_unsupervised(c, v3, 0.95).value == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("batch losses agree with the per-pixel reference on random 8x8 cases") {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 64;
    const Size2 sz{8, 8};
    std::vector<std::vector<double>> zs, ws;
    std::vector<std::vector<std::uint8_t>> ys;
    std::vector<SegMask> masks;
    std::vector<PseudoLabel> pseudo;
    std::vector<std::vector<std::uint8_t>> cls;
    std::vector<std::vector<double>> conf;
    for (int b = 0; b < 3; ++b) {
      zs.push_back(oracle::random_logits(rng, n));
      ys.push_back(oracle::random_classes(rng, n));
      masks.emplace_back(LabelMap(8, 8, 1, ys.back()));
      cls.push_back(oracle::random_classes(rng, n));
      conf.push_back(oracle::random_conf(rng, n));
      pseudo.push_back(PseudoLabel{sz, cls.back(), conf.back()});
    }
    const auto v = views(zs, sz);
    CHECK(std::abs(loss_supervised(v, masks).value - oracle::supervised(zs, ys)) < 1e-6);
    CHECK(std::abs(loss_unsupervised(v, pseudo, 0.95).value - oracle::unsupervised(zs, cls, conf, 0.95)) < 1e-6);
  }
}

TEST_CASE("total equals the weighted sum of its components") {
  Rng rng(4);
  const Fixture fx(rng);
  ObjectiveSettings s;
  s.tau_u = 0.7;
  s.psss = {0.8, 0.5};
  const auto v = fx.eval(s, false);
  CHECK(std::abs(v.total - (v.supervised + v.unsupervised + 0.5 * v.partial)) < 1e-12);
  CHECK(std::abs(v.partial - (v.partial_supervised + v.partial_pseudo + v.partial_exclusion)) < 1e-12);
  CHECK(v.s1 + v.s2 + v.s3 == 16.0);
}

TEST_CASE("combined objective gradient matches central differences") {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    Fixture fx(rng);
    ObjectiveSettings s;
    s.tau_u = 0.8;
    s.psss = {0.85, 1.0};
    auto g = fx.eval(s, true);
    const auto analytic = flatten({&g.grad_full, &g.grad_unlabeled, &g.grad_partial});
    const auto x0 = flatten({&fx.full, &fx.unl, &fx.part});
    const auto numeric = oracle::fd_grad(
        [&](const std::vector<double>& x) {
          Fixture f2 = fx;
          std::size_t k = 0;
          for (auto* stream : {&f2.full, &f2.unl, &f2.part}) {
            for (auto& z : *stream) {
              for (auto& e : z) e = x[k++];
            }
          }
          return f2.eval(s, false).total;
        },
        x0);
    CHECK(oracle::rel_error(analytic, numeric) < 1e-4);
  }
}

TEST_CASE("lambda zero or all toggles off leaves partial gradients exactly zero") {
  Rng rng(6);
  const Fixture fx(rng);
  ObjectiveSettings s;
  s.psss.lambda = 0.0;
  auto a = fx.eval(s, true);
  for (const auto& g : a.grad_partial) {
    CHECK(std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; }));
  }
  s.psss.lambda = 1.0;
  s.toggles = {false, false, false};
  auto b = fx.eval(s, true);
  for (const auto& g : b.grad_partial) {
    CHECK(std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; }));
  }
  CHECK(a.grad_full == b.grad_full);
  CHECK(a.grad_unlabeled == b.grad_unlabeled);
  CHECK(a.total == b.total);
}

TEST_CASE("supervised-only settings reduce to L_S") {
  Rng rng(7);
  const Fixture fx(rng);
  ObjectiveSettings s;
  s.unsupervised = false;
  s.psss.lambda = 0.0;
  const auto v = fx.eval(s, false);
  CHECK(v.total == v.supervised);
}

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "psss/loss.hpp"

using namespace psss;

namespace {

PartialMask partial_from(const std::vector<std::uint8_t>& v, int h, int w) {
  return PartialMask(LabelMap(h, w, 1, v));
}

PseudoLabel pseudo_from(std::vector<std::uint8_t> cls, std::vector<double> conf, int h, int w) {
  return PseudoLabel{{h, w}, std::move(cls), std::move(conf)};
}

/// Logits of one pixel whose softmax equals the given distribution.
std::vector<double> logits_for(std::initializer_list<double> probs) {
  std::vector<double> z;
  for (double p : probs) z.push_back(std::log(p));
  return z;
}

std::vector<std::uint32_t> ids(std::initializer_list<std::uint32_t> v) { return v; }

}  // namespace

TEST_CASE("partition follows the worked four-pixel example") {
  const auto partial = partial_from({1, 2, kUnknownLabel, kUnknownLabel}, 1, 4);
  const auto pseudo = pseudo_from({1, 2, 0, 3}, {0.99, 0.99, 0.99, 0.50}, 1, 4);
  const auto part = partition_pixels(partial, pseudo, PsssConfig{0.95, 1.0});
  CHECK(part.s1 == ids({0, 1}));
  CHECK(part.s2 == ids({2}));
  CHECK(part.s3 == ids({3}));
  CHECK(part.provenance[0] == Provenance::kGroundTruth);
  CHECK(part.provenance[2] == Provenance::kConfidentPseudo);
  CHECK(part.provenance[3] == Provenance::kUncertain);
}

TEST_CASE("fully partial-labeled patch puts every pixel in S1") {
  const auto partial = partial_from({1, 2, 2, 1}, 2, 2);
  const auto pseudo = pseudo_from({0, 0, 3, 3}, {1.0, 1.0, 1.0, 1.0}, 2, 2);
  const auto part = partition_pixels(partial, pseudo, {});
  CHECK(part.s1.size() == 4);
  CHECK(part.s2.empty());
  CHECK(part.s3.empty());
}

TEST_CASE("confident V1/V2 pseudo-labels outside S1 fall into S3") {
  const auto partial = partial_from({kUnknownLabel, kUnknownLabel}, 1, 2);
  const auto pseudo = pseudo_from({1, 2}, {0.999, 0.999}, 1, 2);
  const auto part = partition_pixels(partial, pseudo, {});
  CHECK(part.s3 == ids({0, 1}));
}

TEST_CASE("confidence equal to tau is not confident") {
  const auto partial = partial_from({kUnknownLabel}, 1, 1);
  const auto pseudo = pseudo_from({0}, {0.95}, 1, 1);
  CHECK(partition_pixels(partial, pseudo, PsssConfig{0.95, 1.0}).s3.size() == 1);
}

TEST_CASE("partition rejects mismatched dimensions") {
  const auto partial = partial_from({1, 2}, 1, 2);
  const auto pseudo = pseudo_from({0, 0, 0}, {1, 1, 1}, 1, 3);
  CHECK_THROWS_AS(partition_pixels(partial, pseudo, {}), Error);
}

TEST_CASE("tau outside (0,1) is rejected") {
  CHECK_THROWS_AS((PsssConfig{1.0, 1.0}.validate()), Error);
  CHECK_THROWS_AS((PsssConfig{0.0, 1.0}.validate()), Error);
  CHECK_THROWS_AS((PsssConfig{0.5, -1.0}.validate()), Error);
  CHECK_NOTHROW((PsssConfig{0.5, 0.0}.validate()));
}

TEST_CASE("raising tau shrinks S2, grows S3 and leaves S1 alone") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 64;
    const auto partial = partial_from(oracle::random_partial(rng, n), 8, 8);
    const auto pseudo = pseudo_from(oracle::random_classes(rng, n), oracle::random_conf(rng, n), 8, 8);
    const auto lo = partition_pixels(partial, pseudo, PsssConfig{0.95, 1.0});
    const auto hi = partition_pixels(partial, pseudo, PsssConfig{0.99, 1.0});
    CHECK(lo.s1 == hi.s1);
    CHECK(std::includes(lo.s2.begin(), lo.s2.end(), hi.s2.begin(), hi.s2.end()));
    CHECK(std::includes(hi.s3.begin(), hi.s3.end(), lo.s3.begin(), lo.s3.end()));
  }
}

TEST_CASE("partial supervised loss spot values") {
  const auto partial = partial_from({1}, 1, 1);
  const auto pseudo = pseudo_from({0}, {0.3}, 1, 1);
  const auto part = partition_pixels(partial, pseudo, {});

  SUBCASE("certain prediction costs nothing") {
    const std::vector<double> z{0.0, 800.0, 0.0, 0.0};
    CHECK(loss_partial_supervised(make_logits_view(z, {1, 1}), partial, part).value == doctest::Approx(0.0));
  }
  SUBCASE("half probability costs ln 2") {
    const auto z = logits_for({0.25, 0.5, 0.125, 0.125});
    CHECK(loss_partial_supervised(make_logits_view(z, {1, 1}), partial, part).value ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("pseudo loss spot values") {
  const auto partial = partial_from({kUnknownLabel}, 1, 1);

  SUBCASE("empty S2 gives zero") {
    const auto pseudo = pseudo_from({0}, {0.5}, 1, 1);
    const auto part = partition_pixels(partial, pseudo, {});
    const std::vector<double> z{0, 0, 0, 0};
    CHECK(loss_pseudo(make_logits_view(z, {1, 1}), pseudo, part).value == 0.0);
  }
  SUBCASE("certain V3 agreement costs nothing") {
    const auto pseudo = pseudo_from({3}, {0.99}, 1, 1);
    const auto part = partition_pixels(partial, pseudo, {});
    const std::vector<double> z{0, 0, 0, 900};
    CHECK(loss_pseudo(make_logits_view(z, {1, 1}), pseudo, part).value == doctest::Approx(0.0));
  }
  SUBCASE("background target against [0.7, 0.1, 0.1, 0.1]") {
    const auto pseudo = pseudo_from({0}, {0.99}, 1, 1);
    const auto part = partition_pixels(partial, pseudo, {});
    const auto z = logits_for({0.7, 0.1, 0.1, 0.1});
    CHECK(loss_pseudo(make_logits_view(z, {1, 1}), pseudo, part).value ==
          doctest::Approx(-std::log(0.7)).epsilon(1e-12));
  }
}

TEST_CASE("exclusion loss spot values") {
  const auto partial = partial_from({kUnknownLabel}, 1, 1);
  const auto pseudo = pseudo_from({0}, {0.1}, 1, 1);
  const auto part = partition_pixels(partial, pseudo, {});
  REQUIRE(part.s3.size() == 1);

  const std::vector<double> uniform{0, 0, 0, 0};
  CHECK(std::abs(loss_exclusion(make_logits_view(uniform, {1, 1}), part).value - 3.0 * std::log(1.25)) < 1e-6);

  const std::vector<double> near_v3{0, 0, 0, 20};
  CHECK(loss_exclusion(make_logits_view(near_v3, {1, 1}), part).value < 1e-3);

  // Upper bound: all mass on one excluded class.
  const std::vector<double> one_hot_bg{50, 0, 0, 0};
  CHECK(loss_exclusion(make_logits_view(one_hot_bg, {1, 1}), part).value <= std::log(2.0) + 1e-12);
}

TEST_CASE("exclusion loss decreases as mass moves into V3") {
  const auto partial = partial_from({kUnknownLabel}, 1, 1);
  const auto pseudo = pseudo_from({0}, {0.1}, 1, 1);
  const auto part = partition_pixels(partial, pseudo, {});
  for (int from = 0; from < 3; ++from) {
    double prev = std::numeric_limits<double>::infinity();
    for (double shift : {0.0, 0.05, 0.1, 0.15, 0.2}) {
      std::vector<double> p{0.25, 0.25, 0.25, 0.25};
      p[from] -= shift;
      p[3] += shift;
      const auto z = logits_for({p[0], p[1], p[2], p[3]});
      const double v = loss_exclusion(make_logits_view(z, {1, 1}), part).value;
      CHECK(v < prev);
      prev = v;
    }
  }
}

TEST_CASE("losses agree with the per-pixel reference on random 8x8 cases") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 64;
    const auto z = oracle::random_logits(rng, n);
    const auto y = oracle::random_partial(rng, n);
    const auto weak = oracle::random_logits(rng, n, 4.0);
    const auto pseudo = pseudo_label_from_logits(make_logits_view(weak, {8, 8}));
    const PsssConfig cfg{0.95, 1.0};
    const auto view = make_logits_view(z, {8, 8});
    const auto partial = partial_from(y, 8, 8);
    const auto part = partition_pixels(partial, pseudo, cfg);
    const auto ref = oracle::partial_losses(z, y, pseudo.cls, pseudo.conf, cfg.tau);

    CHECK(std::abs(loss_partial_supervised(view, partial, part).value - ref.s) < 1e-6);
    CHECK(std::abs(loss_pseudo(view, pseudo, part).value - ref.u) < 1e-6);
    CHECK(std::abs(loss_exclusion(view, part).value - ref.c) < 1e-6);

    const auto total = loss_partial_total(view, partial, pseudo, cfg);
    CHECK(std::abs(total.total - (ref.s + ref.u + ref.c)) < 1e-6);
    CHECK(total.n_s1 + total.n_s2 + total.n_s3 == 64);
    CHECK(total.supervised >= 0.0);
    CHECK(total.pseudo >= 0.0);
    CHECK(total.exclusion >= 0.0);
  }
}

TEST_CASE("total reduces to a single component on degenerate partitions") {
  Rng rng(5);
  const int n = 16;
  const auto z = oracle::random_logits(rng, n);
  const auto view = make_logits_view(z, {4, 4});

  SUBCASE("all pixels partial-labeled") {
    const auto partial = partial_from(std::vector<std::uint8_t>(n, 2), 4, 4);
    const auto pseudo = pseudo_from(std::vector<std::uint8_t>(n, 0), std::vector<double>(n, 0.99), 4, 4);
    const auto total = loss_partial_total(view, partial, pseudo, {});
    const auto part = partition_pixels(partial, pseudo, {});
    CHECK(total.total == doctest::Approx(loss_partial_supervised(view, partial, part).value).epsilon(1e-12));
  }
  SUBCASE("no partial labels, everything confidently background") {
    const auto partial = partial_from(std::vector<std::uint8_t>(n, kUnknownLabel), 4, 4);
    const auto pseudo = pseudo_from(std::vector<std::uint8_t>(n, 0), std::vector<double>(n, 0.99), 4, 4);
    const auto total = loss_partial_total(view, partial, pseudo, {});
    const auto part = partition_pixels(partial, pseudo, {});
    CHECK(total.total == doctest::Approx(loss_pseudo(view, pseudo, part).value).epsilon(1e-12));
    CHECK(total.exclusion == 0.0);
  }
}

TEST_CASE("disabled components are reported but do not count") {
  Rng rng(8);
  const int n = 64;
  const auto z = oracle::random_logits(rng, n);
  const auto weak = oracle::random_logits(rng, n, 4.0);
  const auto pseudo = pseudo_label_from_logits(make_logits_view(weak, {8, 8}));
  const auto partial = partial_from(oracle::random_partial(rng, n), 8, 8);
  const auto view = make_logits_view(z, {8, 8});
  const auto all = loss_partial_total(view, partial, pseudo, {}, {}, true);
  const auto only_c = loss_partial_total(view, partial, pseudo, {}, LossToggles{false, false, true}, true);
  CHECK(only_c.supervised == all.supervised);
  CHECK(only_c.total == doctest::Approx(all.exclusion).epsilon(1e-12));
  const auto none = loss_partial_total(view, partial, pseudo, {}, LossToggles{false, false, false}, true);
  CHECK(none.total == 0.0);
  CHECK(std::all_of(none.grad.begin(), none.grad.end(), [](double g) { return g == 0.0; }));
}

TEST_CASE("analytic gradients match central differences on 4x4 patches") {
  Rng rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 16;
    const Size2 sz{4, 4};
    const auto z = oracle::random_logits(rng, n, 2.0);
    const auto weak = oracle::random_logits(rng, n, 4.0);
    const auto pseudo = pseudo_label_from_logits(make_logits_view(weak, sz));
    const auto partial = partial_from(oracle::random_partial(rng, n, 0.4), 4, 4);
    const PsssConfig cfg{0.9, 1.0};
    const auto part = partition_pixels(partial, pseudo, cfg);

    auto check = [&](auto eval) {
      const auto analytic = eval(z, true).grad;
      const auto numeric = oracle::fd_grad([&](const std::vector<double>& x) { return eval(x, false).value; }, z);
      CHECK(oracle::rel_error(analytic, numeric) < 1e-4);
    };
    check([&](const std::vector<double>& x, bool g) {
      return loss_partial_supervised(make_logits_view(x, sz), partial, part, g);
    });
    check([&](const std::vector<double>& x, bool g) { return loss_pseudo(make_logits_view(x, sz), pseudo, part, g); });
    check([&](const std::vector<double>& x, bool g) { return loss_exclusion(make_logits_view(x, sz), part, g); });
    check([&](const std::vector<double>& x, bool g) {
      const auto r = loss_partial_total(make_logits_view(x, sz), partial, pseudo, cfg, {}, g);
      return LossValue{r.total, r.grad};
    });
  }
}

TEST_CASE("pseudo labels carry the probability of their class") {
  Rng rng(3);
  const auto z = oracle::random_logits(rng, 16);
  const auto view = make_logits_view(z, {4, 4});
  const auto pl = pseudo_label_from_logits(view);
  for (std::size_t m = 0; m < 16; ++m) {
    const auto p = softmax_at(view, m);
    CHECK(pl.conf[m] == p[pl.cls[m]]);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    for (double v : p) CHECK(v <= pl.conf[m]);
  }
}

TEST_CASE("logits view rejects wrong buffer sizes") {
  const std::vector<double> z(15);
  CHECK_THROWS_AS(make_logits_view(z, {2, 2}), Error);
}

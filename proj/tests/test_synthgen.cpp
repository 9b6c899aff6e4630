#include <algorithm>
#include <map>
#include <queue>
#include <set>

#include "doctest.h"
#include "psss/manifest.hpp"
#include "psss/synthgen.hpp"
#include "test_util.hpp"

using namespace psss;

namespace {

/// Per pixel of class `cls`: shorter of its horizontal and vertical same-class run.
/// Returns the most frequent such width.
int modal_stroke_width(const LabelMap& m, std::uint8_t cls) {
  const int h = m.height(), w = m.width();
  std::map<int, long> hist;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (m.at(r, c) != cls) continue;
      int l = c, rr = c, u = r, d = r;
      while (l > 0 && m.at(r, l - 1) == cls) --l;
      while (rr + 1 < w && m.at(r, rr + 1) == cls) ++rr;
      while (u > 0 && m.at(u - 1, c) == cls) --u;
      while (d + 1 < h && m.at(d + 1, c) == cls) ++d;
      ++hist[std::min(rr - l + 1, d - u + 1)];
    }
  }
  return std::max_element(hist.begin(), hist.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;
}

long count_class(const LabelMap& m, std::uint8_t cls) { return std::count(m.data().begin(), m.data().end(), cls); }

int components_8(const LabelMap& m, std::uint8_t cls) {
  const int h = m.height(), w = m.width();
  std::vector<char> seen(static_cast<std::size_t>(h) * w, 0);
  int n = 0;
  for (int r0 = 0; r0 < h; ++r0) {
    for (int c0 = 0; c0 < w; ++c0) {
      if (m.at(r0, c0) != cls || seen[r0 * w + c0]) continue;
      ++n;
      std::queue<std::pair<int, int>> q;
      q.push({r0, c0});
      seen[r0 * w + c0] = 1;
      while (!q.empty()) {
        auto [r, c] = q.front();
        q.pop();
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || cc < 0 || rr >= h || cc >= w || m.at(rr, cc) != cls || seen[rr * w + cc]) continue;
            seen[rr * w + cc] = 1;
            q.push({rr, cc});
          }
        }
      }
    }
  }
  return n;
}

}  // namespace

TEST_CASE("generate is deterministic in the seed") {
  VeinSpec spec;
  spec.seed = 17;
  const auto a = generate(spec);
  const auto b = generate(spec);
  CHECK(a.image == b.image);
  CHECK(a.mask == b.mask);
  spec.seed = 18;
  CHECK_FALSE(generate(spec).image == a.image);
}

TEST_CASE("no branches means only background and midvein") {
  VeinSpec spec;
  spec.n_secondary = 0;
  spec.n_tertiary_per_secondary = 0;
  const auto leaf = generate(spec);
  std::set<std::uint8_t> values(leaf.mask.labels().data().begin(), leaf.mask.labels().data().end());
  CHECK(values == std::set<std::uint8_t>{0, 1});
}

TEST_CASE("width hierarchy and class counts hold across seeds") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    VeinSpec spec;
    spec.seed = seed;
    const auto leaf = generate(spec);
    const auto& m = leaf.mask.labels();
    CAPTURE(seed);
    CHECK(count_class(m, 3) > count_class(m, 2));
    const int w1 = modal_stroke_width(m, 1), w2 = modal_stroke_width(m, 2), w3 = modal_stroke_width(m, 3);
    CAPTURE(w1);
    CAPTURE(w2);
    CAPTURE(w3);
    CHECK(w1 > w2);
    CHECK(w2 > w3);
  }
}

TEST_CASE("midvein pixels form one 8-connected component") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    VeinSpec spec;
    spec.seed = seed;
    CHECK(components_8(generate(spec).mask.labels(), 1) == 1);
  }
}

TEST_CASE("midvein spans base to apex") {
  const auto leaf = generate(VeinSpec{});
  const auto& m = leaf.mask.labels();
  int top = m.height(), bottom = -1;
  for (int r = 0; r < m.height(); ++r) {
    for (int c = 0; c < m.width(); ++c) {
      if (m.at(r, c) == 1) {
        top = std::min(top, r);
        bottom = std::max(bottom, r);
      }
    }
  }
  CHECK(top < m.height() / 8);
  CHECK(bottom > m.height() * 7 / 8);
}

TEST_CASE("invalid specs are rejected") {
  VeinSpec spec;
  spec.width_v2 = spec.width_v1;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = {};
  spec.width_v3 = 0;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = {};
  spec.canvas = {63, 128};
  CHECK_THROWS_AS(generate(spec), Error);
  spec = {};
  spec.n_secondary = -1;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = {};
  spec.noise_level = 1.5;
  CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("degrading an all-background mask gives an all-unknown partial mask") {
  const auto p = degrade_to_partial(SegMask(LabelMap(8, 8, 1, 0)));
  CHECK(p.all_unknown());
}

TEST_CASE("degrading keeps a single V1 pixel") {
  LabelMap m(5, 5, 1, 0);
  m.at(0, 0) = 1;
  const auto p = degrade_to_partial(SegMask(m));
  CHECK(p.at(0, 0) == 1);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 5; ++c) {
      if (r || c) CHECK(p.at(r, c) == kUnknownLabel);
    }
  }
}

TEST_CASE("degrade_to_partial matches a per-pixel reference on random masks") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    LabelMap m(16, 16, 1);
    for (int r = 0; r < 16; ++r) {
      for (int c = 0; c < 16; ++c) m.at(r, c) = static_cast<std::uint8_t>(rng.uniform_int(0, 3));
    }
    const auto p = degrade_to_partial(SegMask(m));
    for (int r = 0; r < 16; ++r) {
      for (int c = 0; c < 16; ++c) {
        const auto v = m.at(r, c);
        const std::uint8_t want = (v == 1 || v == 2) ? v : kUnknownLabel;
        CHECK(p.at(r, c) == want);
        CHECK(p.at(r, c) != 0);
        CHECK(p.at(r, c) != 3);
      }
    }
  }
}

TEST_CASE("emitting zero samples writes an empty but valid dataset") {
  testutil::TempDir dir("synth");
  emit_dataset(VeinSpec{}, {0, 0, 0}, dir.path(), 1);
  const auto m = load_manifest(dir / "manifest.txt");
  CHECK(m.samples.empty());
}

TEST_CASE("emit_dataset writes masks per regime and is byte-deterministic") {
  testutil::TempDir a("synth"), b("synth");
  VeinSpec spec;
  spec.canvas = {80, 72};
  const auto m = emit_dataset(spec, {2, 2, 3}, a.path(), 5);
  emit_dataset(spec, {2, 2, 3}, b.path(), 5);
  CHECK(testutil::same_tree(a.path(), b.path()));
  CHECK(std::filesystem::is_directory(a / "images"));
  CHECK(std::filesystem::is_directory(a / "masks"));
  for (const auto& s : m.samples) CHECK(s.mask_path.has_value() == (s.regime != Regime::kUnlabeled));
  const auto loaded = load_manifest(a / "manifest.txt");
  CHECK(loaded == m);
}

#include "psss/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "psss/image_io.hpp"

namespace psss {

void VeinSpec::validate() const {
  if (!(width_v1 > width_v2 && width_v2 > width_v3 && width_v3 >= 1)) {
    fail(ErrorCode::kInvalidArgument, "vein widths must satisfy width_v1 > width_v2 > width_v3 >= 1");
  }
  if (n_secondary < 0 || n_tertiary_per_secondary < 0) fail(ErrorCode::kInvalidArgument, "vein counts must be >= 0");
  if (canvas.height < 64 || canvas.width < 64) fail(ErrorCode::kInvalidArgument, "canvas must be at least 64x64");
  if (!(noise_level >= 0.0 && noise_level <= 1.0)) fail(ErrorCode::kInvalidArgument, "noise_level must lie in [0, 1]");
  for (double o : {opacity_v1, opacity_v2, opacity_v3}) {
    if (!(o > 0.0 && o <= 1.0)) fail(ErrorCode::kInvalidArgument, "opacities must lie in (0, 1]");
  }
  for (int k = 0; k < 3; ++k) {
    if (lamina.lo[k] > lamina.hi[k] || vein.lo[k] > vein.hi[k]) {
      fail(ErrorCode::kInvalidArgument, "color ranges must be ordered lo <= hi");
    }
  }
}

namespace {

struct Vec2 {
  double x = 0;
  double y = 0;
};

Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
Vec2 operator*(Vec2 a, double k) { return {a.x * k, a.y * k}; }
double norm(Vec2 a) { return std::hypot(a.x, a.y); }

using Polyline = std::vector<Vec2>;

struct Stroke {
  Polyline points;
  ClassId cls;
};

/// Point at arc-length fraction t in [0, 1], plus the local unit tangent.
std::pair<Vec2, Vec2> point_along(const Polyline& pl, double t) {
  double total = 0;
  for (std::size_t i = 1; i < pl.size(); ++i) total += norm(pl[i] - pl[i - 1]);
  double target = std::clamp(t, 0.0, 1.0) * total;
  for (std::size_t i = 1; i < pl.size(); ++i) {
    const Vec2 seg = pl[i] - pl[i - 1];
    const double len = norm(seg);
    if (target <= len || i + 1 == pl.size()) {
      const double u = len > 0 ? std::min(1.0, target / len) : 0.0;
      const Vec2 dir = len > 0 ? seg * (1.0 / len) : Vec2{0, -1};
      return {pl[i - 1] + seg * u, dir};
    }
    target -= len;
  }
  return {pl.front(), {0, -1}};
}

/// Polyline grown from `start` along `angle` with per-step angular jitter and a steady bend.
Polyline grow(Vec2 start, double angle, double length, int steps, double jitter, double bend, Rng& rng) {
  Polyline pl{start};
  const double step = length / steps;
  Vec2 p = start;
  for (int i = 0; i < steps; ++i) {
    angle += bend + rng.normal(0.0, jitter);
    p = p + Vec2{std::cos(angle), std::sin(angle)} * step;
    pl.push_back(p);
  }
  return pl;
}

/// Wiggly path between two points: midpoints displaced perpendicular to the chord.
Polyline connect(Vec2 a, Vec2 b, int steps, double wiggle, Rng& rng) {
  Polyline pl;
  const Vec2 d = b - a;
  const double len = norm(d);
  const Vec2 perp = len > 0 ? Vec2{-d.y / len, d.x / len} : Vec2{0, 0};
  const double bow = rng.normal(0.0, wiggle * len);
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    double off = bow * std::sin(std::numbers::pi * t);
    if (i > 0 && i < steps) off += rng.normal(0.0, wiggle * len * 0.15);
    pl.push_back(a + d * t + perp * off);
  }
  return pl;
}

std::vector<cv::Point> to_cv(const Polyline& pl) {
  std::vector<cv::Point> out;
  out.reserve(pl.size());
  for (const auto& p : pl) out.emplace_back(static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y)));
  return out;
}

int width_of(const VeinSpec& s, ClassId c) {
  switch (c) {
    case ClassId::kV1: return s.width_v1;
    case ClassId::kV2: return s.width_v2;
    case ClassId::kV3: return s.width_v3;
    default: return 1;
  }
}

double opacity_of(const VeinSpec& s, ClassId c) {
  switch (c) {
    case ClassId::kV1: return s.opacity_v1;
    case ClassId::kV2: return s.opacity_v2;
    case ClassId::kV3: return s.opacity_v3;
    default: return 0.0;
  }
}

Rgb draw_color(const ColorRange& range, Rng& rng) {
  Rgb out{};
  for (int k = 0; k < 3; ++k) out[k] = static_cast<std::uint8_t>(rng.uniform_int(range.lo[k], range.hi[k]));
  return out;
}

std::vector<Stroke> layout(const VeinSpec& spec, Rng& rng) {
  const double H = spec.canvas.height;
  const double W = spec.canvas.width;
  std::vector<Stroke> strokes;

  // Midvein from base (bottom) to apex (top) with a gentle sway.
  Polyline mid;
  const double x0 = W * rng.uniform(0.42, 0.58);
  const double x1 = W * rng.uniform(0.42, 0.58);
  const double sway = W * rng.uniform(-0.06, 0.06);
  const int mid_steps = 24;
  for (int i = 0; i <= mid_steps; ++i) {
    const double t = static_cast<double>(i) / mid_steps;
    const double y = H * (0.99 - 0.98 * t);
    const double x = x0 + (x1 - x0) * t + sway * std::sin(std::numbers::pi * t);
    mid.push_back({x, y});
  }

  // Secondaries alternate sides, leaning toward the apex.
  std::vector<Polyline> left;
  std::vector<Polyline> right;
  std::vector<Polyline> secondaries;
  for (int i = 0; i < spec.n_secondary; ++i) {
    const double t = 0.06 + 0.88 * (i + rng.uniform(0.25, 0.75)) / std::max(1, spec.n_secondary);
    const auto [origin, tangent] = point_along(mid, t);
    const bool to_left = (i % 2 == 0) != rng.bernoulli(0.15);
    const double base = std::atan2(tangent.y, tangent.x);  // points toward the apex
    const double lean = rng.uniform(0.65, 1.05);            // radians away from the midvein
    const double angle = to_left ? base - lean : base + lean;
    const double length = W * rng.uniform(0.28, 0.5);
    const double bend = (to_left ? 1.0 : -1.0) * rng.uniform(0.0, 0.03);
    auto pl = grow(origin, angle, length, 14, 0.03, bend, rng);
    (to_left ? left : right).push_back(pl);
    secondaries.push_back(std::move(pl));
  }

  // Tertiaries: connectors between neighbouring secondaries plus free branches.
  auto connect_side = [&](const std::vector<Polyline>& side) {
    for (std::size_t i = 0; i + 1 < side.size(); ++i) {
      const int n = spec.n_tertiary_per_secondary / 2;
      for (int k = 0; k < n; ++k) {
        const double ta = rng.uniform(0.15, 0.95);
        const double tb = std::clamp(ta + rng.uniform(-0.15, 0.15), 0.1, 1.0);
        const Vec2 a = point_along(side[i], ta).first;
        const Vec2 b = point_along(side[i + 1], tb).first;
        if (norm(b - a) > 0.35 * W) continue;
        strokes.push_back({connect(a, b, 8, 0.12, rng), ClassId::kV3});
      }
    }
  };
  connect_side(left);
  connect_side(right);

  for (const auto& sec : secondaries) {
    const int n = spec.n_tertiary_per_secondary - spec.n_tertiary_per_secondary / 2;
    for (int k = 0; k < n; ++k) {
      const auto [origin, tangent] = point_along(sec, rng.uniform(0.1, 0.98));
      const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
      const double angle = std::atan2(tangent.y, tangent.x) + side * rng.uniform(0.9, 2.2);
      const double length = W * rng.uniform(0.05, 0.16);
      strokes.push_back({grow(origin, angle, length, 8, 0.18, 0.0, rng), ClassId::kV3});
    }
  }

  for (auto& sec : secondaries) strokes.push_back({std::move(sec), ClassId::kV2});
  strokes.push_back({std::move(mid), ClassId::kV1});
  return strokes;
}

}  // namespace

GeneratedLeaf generate(const VeinSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int H = spec.canvas.height;
  const int W = spec.canvas.width;

  const Rgb lamina = draw_color(spec.lamina, rng);
  const Rgb vein = draw_color(spec.vein, rng);
  const auto strokes = layout(spec, rng);

  // Labels: finer orders first so wider veins overwrite them where strokes overlap.
  cv::Mat labels(H, W, CV_8UC1, cv::Scalar(0));
  for (const ClassId cls : {ClassId::kV3, ClassId::kV2, ClassId::kV1}) {
    for (const auto& s : strokes) {
      if (s.cls != cls) continue;
      const std::vector<std::vector<cv::Point>> pts{to_cv(s.points)};
      cv::polylines(labels, pts, false, cv::Scalar(static_cast<int>(cls)), width_of(spec, cls), cv::LINE_8);
    }
  }

  // Photometry: shaded lamina, veins alpha-blended toward the vein color per order,
  // slight optical blur, additive Gaussian noise.
  cv::Mat img(H, W, CV_32FC3);
  const double gx = rng.uniform(-0.08, 0.08);
  const double gy = rng.uniform(-0.08, 0.08);
  for (int r = 0; r < H; ++r) {
    auto* row = img.ptr<cv::Vec3f>(r);
    for (int c = 0; c < W; ++c) {
      const double shade = 1.0 + gx * (2.0 * c / W - 1.0) + gy * (2.0 * r / H - 1.0);
      for (int k = 0; k < 3; ++k) row[c][k] = static_cast<float>(lamina[k] * shade);
    }
  }
  for (const ClassId cls : {ClassId::kV3, ClassId::kV2, ClassId::kV1}) {
    cv::Mat alpha(H, W, CV_8UC1, cv::Scalar(0));
    for (const auto& s : strokes) {
      if (s.cls != cls) continue;
      const std::vector<std::vector<cv::Point>> pts{to_cv(s.points)};
      cv::polylines(alpha, pts, false, cv::Scalar(255), width_of(spec, cls), cv::LINE_AA);
    }
    const double opacity = opacity_of(spec, cls);
    for (int r = 0; r < H; ++r) {
      const auto* a = alpha.ptr<std::uint8_t>(r);
      auto* row = img.ptr<cv::Vec3f>(r);
      for (int c = 0; c < W; ++c) {
        if (a[c] == 0) continue;
        const float w = static_cast<float>(opacity * a[c] / 255.0);
        for (int k = 0; k < 3; ++k) row[c][k] = row[c][k] * (1.0f - w) + static_cast<float>(vein[k]) * w;
      }
    }
  }
  cv::GaussianBlur(img, img, cv::Size(0, 0), 0.6, 0.6, cv::BORDER_REFLECT_101);

  const double sigma = 24.0 * spec.noise_level;
  Image image(H, W, 3);
  for (int r = 0; r < H; ++r) {
    const auto* row = img.ptr<cv::Vec3f>(r);
    for (int c = 0; c < W; ++c) {
      for (int k = 0; k < 3; ++k) {
        const double v = row[c][k] + (sigma > 0 ? rng.normal(0.0, sigma) : 0.0);
        image.at(r, c, k) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }

  std::vector<std::uint8_t> mask_bytes(labels.data, labels.data + labels.total());
  return {std::move(image), SegMask(LabelMap(H, W, 1, std::move(mask_bytes)))};
}

PartialMask degrade_to_partial(const SegMask& mask) {
  LabelMap out = mask.labels();
  for (auto& v : out.data()) {
    if (v != static_cast<std::uint8_t>(ClassId::kV1) && v != static_cast<std::uint8_t>(ClassId::kV2)) {
      v = kUnknownLabel;
    }
  }
  return PartialMask(std::move(out));
}

DatasetManifest emit_dataset(const VeinSpec& spec_template, const RegimeCounts& counts,
                             const std::filesystem::path& out_dir, std::uint64_t seed, const EmitOptions& opts) {
  spec_template.validate();
  if (counts.full < 0 || counts.partial < 0 || counts.unlabeled < 0 || opts.val < 0 || opts.test < 0) {
    fail(ErrorCode::kInvalidArgument, "sample counts must be >= 0");
  }
  if (opts.species.empty() || opts.species.find_first_of(" \t#") != std::string::npos) {
    fail(ErrorCode::kInvalidArgument, "species tag must be a non-empty token");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create output directory " + out_dir.string() + ": " + ec.message());

  struct Plan {
    Regime regime;
    Split split;
    int n;
  };
  const Plan plan[] = {{Regime::kFull, Split::kTrain, counts.full},
                       {Regime::kPartial, Split::kTrain, counts.partial},
                       {Regime::kUnlabeled, Split::kTrain, counts.unlabeled},
                       {Regime::kFull, Split::kVal, opts.val},
                       {Regime::kFull, Split::kTest, opts.test}};

  DatasetManifest m;
  m.base_dir = out_dir;
  m.species = {opts.species};
  std::tie(m.ratios, m.ratio_unit) = ratios_from_counts(counts.full, counts.partial, counts.unlabeled);

  int index = 0;
  for (const auto& p : plan) {
    for (int i = 0; i < p.n; ++i, ++index) {
      char id[96];
      std::snprintf(id, sizeof id, "%s_%04d", opts.species.c_str(), index);
      VeinSpec spec = spec_template;
      spec.seed = Rng::stream(seed, static_cast<std::uint64_t>(index)).next_u64();
      const auto leaf = generate(spec);

      Sample s;
      s.id = id;
      s.regime = p.regime;
      s.split = p.split;
      s.species = opts.species;
      s.image_path = "images/" + s.id + ".png";
      write_image(out_dir / s.image_path, leaf.image);
      if (p.regime == Regime::kFull) {
        s.mask_path = "masks/" + s.id + ".png";
        write_label_map(out_dir / *s.mask_path, leaf.mask.labels());
      } else if (p.regime == Regime::kPartial) {
        s.mask_path = "masks/" + s.id + ".png";
        write_label_map(out_dir / *s.mask_path, degrade_to_partial(leaf.mask).labels());
      }
      m.samples.push_back(std::move(s));
    }
  }
  validate_structure(m, true);
  save_manifest(out_dir / "manifest.txt", m);
  return m;
}

}  // namespace psss

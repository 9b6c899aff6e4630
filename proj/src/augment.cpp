#include "psss/augment.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

namespace psss {

namespace {

std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

}  // namespace

void AugmentConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorCode::kInvalidArgument, std::string(name) + " must lie in [0, 1]");
  };
  prob(hflip_p, "hflip_p");
  prob(vflip_p, "vflip_p");
  prob(blur_p, "blur_p");
  for (double j : {brightness, contrast, saturation}) {
    if (!(j >= 0.0 && j < 1.0)) fail(ErrorCode::kInvalidArgument, "jitter ranges must lie in [0, 1)");
  }
  if (!(blur_sigma_min > 0.0 && blur_sigma_max >= blur_sigma_min)) {
    fail(ErrorCode::kInvalidArgument, "blur sigma range must be positive and ordered");
  }
  if (cutout_count < 0 || cutout_size < 0) fail(ErrorCode::kInvalidArgument, "cutout settings must be >= 0");
}

GeometryRecord draw_geometry(Size2 input, const AugmentConfig& cfg, Rng& rng) {
  GeometryRecord g{input};
  g.hflip = rng.bernoulli(cfg.hflip_p);
  g.vflip = rng.bernoulli(cfg.vflip_p);
  return g;
}

Raster apply_geometry(const Raster& raster, const GeometryRecord& geometry) {
  if (raster.size() != geometry.input) fail(ErrorCode::kShapeMismatch, "raster size differs from recorded geometry");
  if (geometry.identity()) return raster;
  const int h = raster.height();
  const int w = raster.width();
  const int ch = raster.channels();
  Raster out(h, w, ch);
  for (int r = 0; r < h; ++r) {
    const int sr = geometry.vflip ? h - 1 - r : r;
    for (int c = 0; c < w; ++c) {
      const int sc = geometry.hflip ? w - 1 - c : c;
      for (int k = 0; k < ch; ++k) out.at(r, c, k) = raster.at(sr, sc, k);
    }
  }
  return out;
}

LabelMap transform_mask(const LabelMap& mask, const GeometryRecord& geometry) {
  if (mask.channels() != 1) fail(ErrorCode::kInvalidArgument, "transform_mask expects a single-channel map");
  return apply_geometry(mask, geometry);
}

Image photometric(const Image& image, const AugmentConfig& cfg, Rng& rng) {
  const double b = rng.uniform(1.0 - cfg.brightness, 1.0 + cfg.brightness);
  const double c = rng.uniform(1.0 - cfg.contrast, 1.0 + cfg.contrast);
  const double s = rng.uniform(1.0 - cfg.saturation, 1.0 + cfg.saturation);
  const bool blur = rng.bernoulli(cfg.blur_p);
  const double sigma = rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max);

  const int h = image.height();
  const int w = image.width();
  std::vector<double> px(image.data().begin(), image.data().end());

  for (auto& v : px) v = std::clamp(v * b, 0.0, 255.0);

  double mean = 0.0;
  for (std::size_t i = 0; i + 2 < px.size(); i += 3) mean += luma(px[i], px[i + 1], px[i + 2]);
  mean /= std::max<std::size_t>(1, image.pixel_count());
  for (auto& v : px) v = std::clamp((v - mean) * c + mean, 0.0, 255.0);

  for (std::size_t i = 0; i + 2 < px.size(); i += 3) {
    const double gray = luma(px[i], px[i + 1], px[i + 2]);
    for (int k = 0; k < 3; ++k) px[i + k] = std::clamp(gray + (px[i + k] - gray) * s, 0.0, 255.0);
  }

  std::vector<std::uint8_t> bytes(px.size());
  std::transform(px.begin(), px.end(), bytes.begin(), clamp_u8);
  Image out(h, w, 3, std::move(bytes));

  if (blur && h > 0 && w > 0) {
    cv::Mat m(h, w, CV_8UC3, out.data().data());
    cv::Mat blurred;
    cv::GaussianBlur(m, blurred, cv::Size(0, 0), sigma, sigma, cv::BORDER_REFLECT_101);
    std::copy(blurred.data, blurred.data + blurred.total() * 3, out.data().begin());
  }

  for (int i = 0; i < cfg.cutout_count; ++i) {
    const int cy = rng.uniform_int(0, std::max(0, h - 1));
    const int cx = rng.uniform_int(0, std::max(0, w - 1));
    const int half = cfg.cutout_size / 2;
    const int r0 = std::max(0, cy - half);
    const int c0 = std::max(0, cx - half);
    const int r1 = std::min(h, cy - half + cfg.cutout_size);
    const int c1 = std::min(w, cx - half + cfg.cutout_size);
    for (int r = r0; r < r1; ++r) {
      for (int cc = c0; cc < c1; ++cc) {
        for (int k = 0; k < 3; ++k) out.at(r, cc, k) = cfg.cutout_fill;
      }
    }
  }
  return out;
}

AugmentedPair apply_pair(const Image& image, const AugmentConfig& cfg, Rng& rng) {
  AugmentedPair out;
  out.geometry = draw_geometry(image.size(), cfg, rng);
  out.weak = apply_geometry(image, out.geometry);
  out.strong = photometric(out.weak, cfg, rng);
  return out;
}

}  // namespace psss

#include "psss/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace psss {

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

std::string_view class_name(ClassId c) {
  switch (c) {
    case ClassId::kBackground: return "background";
    case ClassId::kV1: return "V1";
    case ClassId::kV2: return "V2";
    case ClassId::kV3: return "V3";
  }
  return "?";
}

Raster::Raster(int height, int width, int channels, std::uint8_t fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 1) {
    fail(ErrorCode::kInvalidArgument, "raster dimensions must be non-negative");
  }
  data_.assign(pixel_count() * static_cast<std::size_t>(channels), fill);
}

Raster::Raster(int height, int width, int channels, std::vector<std::uint8_t> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (height < 0 || width < 0 || channels < 1) {
    fail(ErrorCode::kInvalidArgument, "raster dimensions must be non-negative");
  }
  if (data_.size() != pixel_count() * static_cast<std::size_t>(channels)) {
    fail(ErrorCode::kShapeMismatch, "raster buffer size does not match its dimensions");
  }
}

SegMask::SegMask(LabelMap labels) : labels_(std::move(labels)) {
  if (labels_.channels() != 1) fail(ErrorCode::kValidation, "segmentation mask must be single channel");
  for (auto v : labels_.data()) {
    if (!is_class_value(v)) {
      fail(ErrorCode::kValidation, "invalid class label " + std::to_string(v) + " in segmentation mask");
    }
  }
}

PartialMask::PartialMask(LabelMap labels) : labels_(std::move(labels)) {
  if (labels_.channels() != 1) fail(ErrorCode::kValidation, "partial mask must be single channel");
  for (auto v : labels_.data()) {
    if (v != 1 && v != 2 && v != kUnknownLabel) {
      fail(ErrorCode::kValidation, "invalid partial label " + std::to_string(v));
    }
  }
}

bool PartialMask::all_unknown() const {
  const auto d = labels_.data();
  return std::all_of(d.begin(), d.end(), [](std::uint8_t v) { return v == kUnknownLabel; });
}

std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::kFull: return "full";
    case Regime::kPartial: return "partial";
    case Regime::kUnlabeled: return "unlabeled";
  }
  return "?";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
    case Split::kUnused: return "unused";
  }
  return "?";
}

Regime parse_regime(std::string_view s) {
  if (s == "full") return Regime::kFull;
  if (s == "partial") return Regime::kPartial;
  if (s == "unlabeled") return Regime::kUnlabeled;
  fail(ErrorCode::kParse, "unknown regime '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  if (s == "unused") return Split::kUnused;
  fail(ErrorCode::kParse, "unknown split '" + std::string(s) + "'");
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
  for (auto& w : s_) w = splitmix64(seed);
}

Rng Rng::stream(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t mix = seed ^ (tag * 0xd1342543de82ef95ULL);
  return Rng(splitmix64(mix));
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

int Rng::uniform_int(int lo, int hi) {
  if (hi < lo) std::swap(lo, hi);
  const auto span = static_cast<std::uint64_t>(static_cast<std::int64_t>(hi) - lo + 1);
  return lo + static_cast<int>(next_u64() % span);
}

double Rng::normal(double mean, double stddev) {
  // Box-Muller; one draw per call keeps the stream position easy to reason about.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace psss

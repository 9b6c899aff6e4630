#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace psss {

enum class ErrorCode : int {
  kOk = 0,
  kInvalidArgument = 1,
  kIo = 2,
  kParse = 3,
  kValidation = 4,
  kShapeMismatch = 5,
  kNumeric = 6,
  kInternal = 7,
};

/// Exception carrying a category the C API maps onto status codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

// ---------------------------------------------------------------------------
// Class vocabulary

enum class ClassId : std::uint8_t { kBackground = 0, kV1 = 1, kV2 = 2, kV3 = 3 };

inline constexpr int kNumClasses = 4;
inline constexpr std::uint8_t kUnknownLabel = 255;

inline constexpr bool is_class_value(int v) { return v >= 0 && v < kNumClasses; }
std::string_view class_name(ClassId c);

// ---------------------------------------------------------------------------
// Rasters

struct Size2 {
  int height = 0;
  int width = 0;
  friend bool operator==(const Size2&, const Size2&) = default;
};

/// Interleaved 8-bit raster (HWC). Images use 3 channels, label maps 1.
class Raster {
 public:
  Raster() = default;
  Raster(int height, int width, int channels, std::uint8_t fill = 0);
  Raster(int height, int width, int channels, std::vector<std::uint8_t> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  Size2 size() const noexcept { return {height_, width_}; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  bool empty() const noexcept { return data_.empty(); }

  std::uint8_t at(int row, int col, int ch = 0) const {
    return data_[(static_cast<std::size_t>(row) * width_ + col) * channels_ + ch];
  }
  std::uint8_t& at(int row, int col, int ch = 0) {
    return data_[(static_cast<std::size_t>(row) * width_ + col) * channels_ + ch];
  }

  std::span<const std::uint8_t> data() const noexcept { return data_; }
  std::span<std::uint8_t> data() noexcept { return data_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> data_;
};

/// 8-bit RGB image.
using Image = Raster;
using Rgb = std::array<std::uint8_t, 3>;

/// Single-channel map of class values (or 255 for unknown).
using LabelMap = Raster;

/// Fully labeled mask: every pixel is a ClassId.
class SegMask {
 public:
  SegMask() = default;
  /// Throws kValidation if the map is not single channel or holds a value outside 0..3.
  explicit SegMask(LabelMap labels);

  const LabelMap& labels() const noexcept { return labels_; }
  Size2 size() const noexcept { return labels_.size(); }
  ClassId at(int row, int col) const { return static_cast<ClassId>(labels_.at(row, col)); }

  friend bool operator==(const SegMask&, const SegMask&) = default;

 private:
  LabelMap labels_;
};

/// Partial mask: V1/V2 pixels are known, everything else is kUnknownLabel.
class PartialMask {
 public:
  PartialMask() = default;
  /// Throws kValidation ("invalid partial label") on any value outside {1, 2, 255}.
  explicit PartialMask(LabelMap labels);

  const LabelMap& labels() const noexcept { return labels_; }
  Size2 size() const noexcept { return labels_.size(); }
  std::uint8_t at(int row, int col) const { return labels_.at(row, col); }
  bool all_unknown() const;

  friend bool operator==(const PartialMask&, const PartialMask&) = default;

 private:
  LabelMap labels_;
};

// ---------------------------------------------------------------------------
// Dataset vocabulary

enum class Regime { kFull, kPartial, kUnlabeled };
enum class Split { kTrain, kVal, kTest, kUnused };

std::string_view to_string(Regime r);
std::string_view to_string(Split s);
Regime parse_regime(std::string_view s);
Split parse_split(std::string_view s);

struct Ratios {
  int full = 1;
  int partial = 1;
  int unlabeled = 10;
  friend bool operator==(const Ratios&, const Ratios&) = default;
};

/// Grid provenance for samples that are patches cut from a larger image.
struct TileRef {
  std::string source_id;
  int tile_index = 0;
  friend bool operator==(const TileRef&, const TileRef&) = default;
};

struct Sample {
  std::string id;
  std::string image_path;  // relative to the manifest directory unless absolute
  std::optional<std::string> mask_path;
  Regime regime = Regime::kUnlabeled;
  std::string species;
  Split split = Split::kTrain;
  std::optional<TileRef> tile;
  friend bool operator==(const Sample&, const Sample&) = default;
};

// ---------------------------------------------------------------------------
// Deterministic RNG

/// Portable generator: splitmix64-seeded xoshiro256**. Distributions are implemented
/// here rather than with <random> so outputs are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi);
  bool bernoulli(double p) { return uniform() < p; }
  double normal(double mean = 0.0, double stddev = 1.0);

  std::array<std::uint64_t, 4> state() const noexcept { return s_; }
  void set_state(const std::array<std::uint64_t, 4>& s) noexcept { s_ = s; }

  /// Independent stream derived from a seed and a stream tag.
  static Rng stream(std::uint64_t seed, std::uint64_t tag);

 private:
  std::array<std::uint64_t, 4> s_{};
};

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace psss

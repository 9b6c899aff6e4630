#include "psss/image_io.hpp"

#include <fstream>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace psss {

namespace {

std::uint32_t be32(const unsigned char* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

}  // namespace

std::uint8_t round_16_to_8(std::uint16_t v) {
  return static_cast<std::uint8_t>((std::uint32_t{v} * 255u + 32767u) / 65535u);
}

Image read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::kIo, "image not found: " + path.string());
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) fail(ErrorCode::kIo, "cannot decode image: " + path.string());

  if (m.depth() == CV_16U) {
    cv::Mat out(m.rows, m.cols, CV_8UC(m.channels()));
    const auto* src = m.ptr<std::uint16_t>();
    auto* dst = out.ptr<std::uint8_t>();
    const std::size_t n = m.total() * m.channels();
    for (std::size_t i = 0; i < n; ++i) dst[i] = round_16_to_8(src[i]);
    m = out;
  } else if (m.depth() != CV_8U) {
    fail(ErrorCode::kIo, "unsupported image depth: " + path.string());
  }

  cv::Mat rgb;
  switch (m.channels()) {
    case 1: cv::cvtColor(m, rgb, cv::COLOR_GRAY2RGB); break;
    case 3: cv::cvtColor(m, rgb, cv::COLOR_BGR2RGB); break;
    case 4: cv::cvtColor(m, rgb, cv::COLOR_BGRA2RGB); break;
    default: fail(ErrorCode::kIo, "unsupported channel count: " + path.string());
  }
  std::vector<std::uint8_t> data(rgb.data, rgb.data + rgb.total() * 3);
  return Image(rgb.rows, rgb.cols, 3, std::move(data));
}

LabelMap read_label_map(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::kIo, "mask not found: " + path.string());
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) fail(ErrorCode::kIo, "cannot decode mask: " + path.string());
  if (m.depth() != CV_8U || m.channels() != 1) {
    fail(ErrorCode::kValidation, "mask must be single-channel 8-bit: " + path.string());
  }
  std::vector<std::uint8_t> data(m.data, m.data + m.total());
  return LabelMap(m.rows, m.cols, 1, std::move(data));
}

Size2 probe_size(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open: " + path.string());
  unsigned char head[24];
  in.read(reinterpret_cast<char*>(head), sizeof head);
  static constexpr unsigned char kSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (in.gcount() != sizeof head || !std::equal(kSig, kSig + 8, head)) {
    fail(ErrorCode::kIo, "not a PNG file: " + path.string());
  }
  return {static_cast<int>(be32(head + 20)), static_cast<int>(be32(head + 16))};
}

void write_image(const std::filesystem::path& path, const Image& image) {
  if (image.channels() != 3) fail(ErrorCode::kInvalidArgument, "write_image expects RGB");
  ensure_parent(path);
  cv::Mat rgb(image.height(), image.width(), CV_8UC3, const_cast<std::uint8_t*>(image.data().data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr)) fail(ErrorCode::kIo, "cannot write image: " + path.string());
}

void write_label_map(const std::filesystem::path& path, const LabelMap& labels) {
  if (labels.channels() != 1) fail(ErrorCode::kInvalidArgument, "write_label_map expects one channel");
  ensure_parent(path);
  cv::Mat m(labels.height(), labels.width(), CV_8UC1, const_cast<std::uint8_t*>(labels.data().data()));
  if (!cv::imwrite(path.string(), m)) fail(ErrorCode::kIo, "cannot write mask: " + path.string());
}

Image colorize(const LabelMap& labels) {
  static constexpr Rgb kPalette[kNumClasses] = {{0, 0, 0}, {255, 0, 0}, {255, 255, 0}, {255, 255, 255}};
  Image out(labels.height(), labels.width(), 3);
  for (int r = 0; r < labels.height(); ++r) {
    for (int c = 0; c < labels.width(); ++c) {
      const auto v = labels.at(r, c);
      const Rgb color = is_class_value(v) ? kPalette[v] : Rgb{128, 128, 128};
      for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = color[ch];
    }
  }
  return out;
}

}  // namespace psss

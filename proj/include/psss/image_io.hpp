#pragma once

#include <filesystem>

#include "psss/core.hpp"

namespace psss {

/// Reads an 8- or 16-bit PNG as 8-bit RGB. 16-bit samples are rounded to nearest:
/// v8 = (v16 * 255 + 32767) / 65535. Gray inputs are replicated, alpha is dropped.
Image read_image(const std::filesystem::path& path);

/// Reads a single-channel 8-bit label PNG.
LabelMap read_label_map(const std::filesystem::path& path);

/// Header-only dimension probe.
Size2 probe_size(const std::filesystem::path& path);

void write_image(const std::filesystem::path& path, const Image& image);
void write_label_map(const std::filesystem::path& path, const LabelMap& labels);

/// Display colors: background black, V1 red, V2 yellow, V3 white, unknown gray.
Image colorize(const LabelMap& labels);

std::uint8_t round_16_to_8(std::uint16_t v);

}  // namespace psss

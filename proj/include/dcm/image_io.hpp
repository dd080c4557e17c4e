#pragma once

#include <filesystem>

#include "dcm/haze_model.hpp"
#include "dcm/image.hpp"

namespace dcm::io {

/// Reads an 8-bit PNG/JPEG (any channel count is converted to RGB) into unit range.
Image read_image(const std::filesystem::path& path);

/// Writes 8-bit RGB; values are clamped and rounded. Format follows the extension.
void write_image(const std::filesystem::path& path, const Image& image);

/// True for extensions the image readers understand.
bool has_image_extension(const std::filesystem::path& path);

/// Depth persists as single-channel 16-bit PNG; stored value = round(depth / scale).
void write_depth_png(const std::filesystem::path& path, const haze::DepthField& depth, double scale);
haze::DepthField read_depth_png(const std::filesystem::path& path, double scale);

/// Writes bytes to `path` via a temporary sibling and an atomic rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace dcm::io

#pragma once

#include <filesystem>

#include "pivflow/core/errors.hpp"
#include "pivflow/core/types.hpp"

namespace pivflow::io {

struct UnsupportedFormat : Error {
    explicit UnsupportedFormat(const std::string& msg) : Error(msg) {}
};

/// Multi-channel rasters are rejected, never averaged.
struct MultiChannelInput : Error {
    explicit MultiChannelInput(const std::string& msg) : Error(msg) {}
};

/// Reads an 8- or 16-bit single-channel PNG/TIFF and normalizes to [0,1]
/// by the bit-depth maximum (255 or 65535).
Grid2d read_image(const std::filesystem::path& path);

/// Writes intensities in [0,1] as a 16-bit grayscale PNG (values are
/// clamped, then rounded to the nearest code).
void write_image_png16(const Grid2d& img, const std::filesystem::path& path);

/// Same, at 8-bit depth.
void write_image_png8(const Grid2d& img, const std::filesystem::path& path);

} // namespace pivflow::io

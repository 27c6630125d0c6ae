#pragma once

#include <filesystem>

#include "pivflow/core/errors.hpp"
#include "pivflow/core/types.hpp"

namespace pivflow::io {

/// Wrong sentinel at the head of the file: not a flow file.
struct MagicMismatch : Error {
    explicit MagicMismatch(const std::string& msg) : Error(msg) {}
};

/// Payload shorter than width*height*2 float32 values.
struct TruncatedFile : Error {
    explicit TruncatedFile(const std::string& msg) : Error(msg) {}
};

struct FloStats {
    long nonfinite_values = 0; // NaN/Inf encountered while reading
    long sentinel_values = 0;  // |value| > 1e9, dataset unknown-flow markers
};

/// Magnitudes above this are treated as invalid-pixel markers downstream.
inline constexpr double kInvalidFlowThreshold = 1e9;

/// Reads a Middlebury .flo file: little-endian float32 magic 202021.25,
/// int32 width, int32 height, then row-major interleaved (u, v) float32.
/// Non-finite and sentinel values are kept verbatim and only counted in
/// stats (metrics mask them later).
VelocityField read_flo(const std::filesystem::path& path, FloStats* stats = nullptr);

/// Inverse of read_flo, bit-exact for float32-representable fields.
/// Requires coordinate_scale == 1.0.
void write_flo(const VelocityField& field, const std::filesystem::path& path);

} // namespace pivflow::io

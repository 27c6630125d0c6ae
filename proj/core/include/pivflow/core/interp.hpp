#pragma once

#include "pivflow/core/types.hpp"

namespace pivflow {

/// Bilinear sample of g at continuous position (x, y) in pixel-index
/// coordinates. Coordinates are clamped to the valid range, so querying
/// outside the grid returns the nearest edge value.
double bilinear_sample(const Grid2d& g, double x, double y);

/// Bilinear resize with the half-pixel-center convention
/// (src = (dst + 0.5) * scale - 0.5). Constant inputs stay constant.
Grid2d bilinear_resize(const Grid2d& g, int out_h, int out_w);

/// Pads by replicating edge rows/columns on the bottom/right.
Grid2d pad_replicate(const Grid2d& g, int out_h, int out_w);

Grid2d crop(const Grid2d& g, int y0, int x0, int h, int w);

} // namespace pivflow

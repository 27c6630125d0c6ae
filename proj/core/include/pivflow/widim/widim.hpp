#pragma once

#include <vector>

#include "pivflow/core/errors.hpp"
#include "pivflow/core/types.hpp"

namespace pivflow::widim {

struct ImageTooSmall : Error {
    explicit ImageTooSmall(const std::string& msg) : Error(msg) {}
};

struct WidimConfig {
    std::vector<int> window_sizes = {64, 32, 16}; // decreasing powers of two
    double overlap_fraction = 0.5;                // in [0, 0.75]
    double outlier_threshold = 2.0;               // normalized-median test
    double mad_epsilon = 0.1;                     // px, stabilizes uniform regions

    void validate() const;
};

/// Sparse interrogation grid: vectors at window centers.
struct VectorGrid {
    int rows = 0;
    int cols = 0;
    std::vector<double> cx, cy; // window-center positions, cols resp. rows
    std::vector<double> u, v;   // rows*cols, row-major
    std::vector<std::uint8_t> valid;

    double& u_at(int r, int c) { return u[static_cast<size_t>(r) * cols + c]; }
    double& v_at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double u_at(int r, int c) const { return u[static_cast<size_t>(r) * cols + c]; }
    double v_at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    bool valid_at(int r, int c) const { return valid[static_cast<size_t>(r) * cols + c] != 0; }
};

/// Normalized median test against the 8-neighborhood, per component:
/// a vector is invalid iff |U - median| / (MAD + eps) exceeds the
/// threshold for either component. Grid must be at least 3x3.
std::vector<std::uint8_t> normalized_median_filter(const VectorGrid& grid, double threshold,
                                                   double mad_epsilon = 0.1);

/// Multipass window-deformation estimator: grid interrogation, outlier
/// filtering, neighborhood fill, predictor upsampling, bilinear warp of
/// frame_b, residual correlation at the next finer window, and a final
/// dense bilinear interpolation to per-pixel resolution.
VelocityField widim_estimate(const ImagePair& pair, const WidimConfig& cfg = {});

/// Dense per-pixel field from a sparse grid (bilinear between centers,
/// constant beyond the outermost ones). Exposed for tests.
VelocityField grid_to_dense(const VectorGrid& grid, int height, int width);

} // namespace pivflow::widim

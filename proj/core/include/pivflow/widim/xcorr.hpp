#pragma once

#include "pivflow/core/errors.hpp"
#include "pivflow/core/types.hpp"

namespace pivflow::widim {

struct CorrelationPeak {
    double dx = 0.0;
    double dy = 0.0;
    double peak_ratio = 0.0; // highest / second-highest peak
    bool valid = false;      // false for flat (zero-variance) windows
};

/// FFT-based circular cross-correlation of two equal square windows with
/// per-window mean subtraction. The integer peak is refined by a
/// three-point Gaussian fit per axis:
///   delta = (ln C- - ln C+) / (2 ln C- - 4 ln C0 + 2 ln C+)
/// falling back to the parabolic fit when a neighbor is nonpositive.
/// A zero-variance window yields an invalid-marked result.
CorrelationPeak correlate_window(const Grid2d& win_a, const Grid2d& win_b);

/// Raw circular correlation plane (row y = displacement dy, wrapped).
/// Exposed for tests; correlate_window works on top of it.
Grid2d correlation_plane(const Grid2d& win_a, const Grid2d& win_b);

} // namespace pivflow::widim

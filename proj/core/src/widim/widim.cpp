#include "pivflow/widim/widim.hpp"

#include <algorithm>
#include <cmath>

#include "pivflow/core/interp.hpp"
#include "pivflow/widim/xcorr.hpp"

namespace pivflow::widim {

void WidimConfig::validate() const {
    if (window_sizes.empty()) throw PreconditionError("widim needs at least one pass");
    int prev = 1 << 30;
    for (int w : window_sizes) {
        if (w < 8 || (w & (w - 1)) != 0) {
            throw PreconditionError("window sizes must be powers of two >= 8");
        }
        if (w >= prev) throw PreconditionError("window sizes must be strictly decreasing");
        prev = w;
    }
    if (overlap_fraction < 0.0 || overlap_fraction > 0.75) {
        throw PreconditionError("overlap_fraction must lie in [0, 0.75]");
    }
}

namespace {

double median_of(std::vector<double>& xs) {
    const size_t mid = xs.size() / 2;
    std::nth_element(xs.begin(), xs.begin() + mid, xs.end());
    double m = xs[mid];
    if (xs.size() % 2 == 0) {
        std::nth_element(xs.begin(), xs.begin() + mid - 1, xs.end());
        m = 0.5 * (m + xs[mid - 1]);
    }
    return m;
}

} // namespace

std::vector<std::uint8_t> normalized_median_filter(const VectorGrid& grid, double threshold,
                                                   double mad_epsilon) {
    if (grid.rows < 3 || grid.cols < 3) {
        throw PreconditionError("normalized median test needs a grid of at least 3x3");
    }
    std::vector<std::uint8_t> mask(grid.u.size(), 1);
    if (std::isinf(threshold)) return mask;

    auto component_fluct = [&](int r, int c, bool horizontal) {
        std::vector<double> neigh;
        neigh.reserve(8);
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                if (dr == 0 && dc == 0) continue;
                const int rr = r + dr;
                const int cc = c + dc;
                if (rr < 0 || rr >= grid.rows || cc < 0 || cc >= grid.cols) continue;
                neigh.push_back(horizontal ? grid.u_at(rr, cc) : grid.v_at(rr, cc));
            }
        }
        std::vector<double> tmp = neigh;
        const double med = median_of(tmp);
        std::vector<double> residuals;
        residuals.reserve(neigh.size());
        for (double x : neigh) residuals.push_back(std::fabs(x - med));
        const double mad = median_of(residuals);
        const double value = horizontal ? grid.u_at(r, c) : grid.v_at(r, c);
        return std::fabs(value - med) / (mad + mad_epsilon);
    };

    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            if (component_fluct(r, c, true) > threshold ||
                component_fluct(r, c, false) > threshold) {
                mask[static_cast<size_t>(r) * grid.cols + c] = 0;
            }
        }
    }
    return mask;
}

namespace {

/// Replaces invalid vectors by the mean of valid 8-neighbors, sweeping
/// until everything is filled (isolated holes fall back to the grid mean).
void fill_invalid(VectorGrid& grid) {
    auto count_invalid = [&]() {
        return std::count(grid.valid.begin(), grid.valid.end(), std::uint8_t{0});
    };
    long remaining = count_invalid();
    if (remaining == 0) return;

    while (remaining > 0) {
        bool progress = false;
        VectorGrid next = grid;
        for (int r = 0; r < grid.rows; ++r) {
            for (int c = 0; c < grid.cols; ++c) {
                if (grid.valid_at(r, c)) continue;
                double su = 0.0, sv = 0.0;
                int n = 0;
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (dr == 0 && dc == 0) continue;
                        const int rr = r + dr, cc = c + dc;
                        if (rr < 0 || rr >= grid.rows || cc < 0 || cc >= grid.cols) continue;
                        if (!grid.valid_at(rr, cc)) continue;
                        su += grid.u_at(rr, cc);
                        sv += grid.v_at(rr, cc);
                        ++n;
                    }
                }
                if (n > 0) {
                    next.u_at(r, c) = su / n;
                    next.v_at(r, c) = sv / n;
                    next.valid[static_cast<size_t>(r) * grid.cols + c] = 1;
                    progress = true;
                }
            }
        }
        grid = std::move(next);
        remaining = count_invalid();
        if (!progress && remaining > 0) {
            // Everything invalid: fall back to zero motion.
            for (size_t i = 0; i < grid.u.size(); ++i) {
                if (!grid.valid[i]) {
                    grid.u[i] = 0.0;
                    grid.v[i] = 0.0;
                    grid.valid[i] = 1;
                }
            }
            remaining = 0;
        }
    }
}

/// Piecewise-bilinear interpolation between grid centers, constant
/// outside the outermost centers.
struct GridSampler {
    const VectorGrid& grid;

    double sample(const std::vector<double>& comp, double px, double py) const {
        // Locate the cell in center coordinates.
        auto locate = [](const std::vector<double>& cs, double p, int& i0, double& f) {
            if (p <= cs.front()) {
                i0 = 0;
                f = 0.0;
                return;
            }
            if (p >= cs.back()) {
                i0 = static_cast<int>(cs.size()) - 2;
                f = 1.0;
                if (i0 < 0) {
                    i0 = 0;
                    f = 0.0;
                }
                return;
            }
            int lo = 0;
            int hi = static_cast<int>(cs.size()) - 1;
            while (hi - lo > 1) {
                const int mid = (lo + hi) / 2;
                if (cs[mid] <= p) lo = mid;
                else hi = mid;
            }
            i0 = lo;
            f = (p - cs[lo]) / (cs[lo + 1] - cs[lo]);
        };

        int cx0 = 0, cy0 = 0;
        double fx = 0.0, fy = 0.0;
        locate(grid.cx, px, cx0, fx);
        locate(grid.cy, py, cy0, fy);
        const int cx1 = std::min(cx0 + 1, grid.cols - 1);
        const int cy1 = std::min(cy0 + 1, grid.rows - 1);
        auto at = [&](int r, int c) { return comp[static_cast<size_t>(r) * grid.cols + c]; };
        const double top = at(cy0, cx0) * (1.0 - fx) + at(cy0, cx1) * fx;
        const double bot = at(cy1, cx0) * (1.0 - fx) + at(cy1, cx1) * fx;
        return top * (1.0 - fy) + bot * fy;
    }
};

std::vector<int> window_origins(int extent, int win, int step) {
    std::vector<int> origins;
    for (int x = 0; x + win <= extent; x += step) {
        origins.push_back(x);
    }
    if (origins.empty() || origins.back() != extent - win) {
        origins.push_back(extent - win); // flush last window against the edge
    }
    return origins;
}

Grid2d extract_window(const Grid2d& img, int y0, int x0, int n) {
    return crop(img, y0, x0, n, n);
}

} // namespace

VelocityField grid_to_dense(const VectorGrid& grid, int height, int width) {
    GridSampler sampler{grid};
    VelocityField out(height, width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double px = x + 0.5;
            const double py = y + 0.5;
            out.u.at(y, x) = sampler.sample(grid.u, px, py);
            out.v.at(y, x) = sampler.sample(grid.v, px, py);
        }
    }
    return out;
}

VelocityField widim_estimate(const ImagePair& pair, const WidimConfig& cfg) {
    cfg.validate();
    const int H = pair.height();
    const int W = pair.width();
    if (H < cfg.window_sizes.front() || W < cfg.window_sizes.front()) {
        throw ImageTooSmall("image " + std::to_string(H) + "x" + std::to_string(W) +
                            " is smaller than the largest window " +
                            std::to_string(cfg.window_sizes.front()));
    }

    VelocityField predictor(H, W); // dense, zero for the first pass
    VectorGrid grid;

    for (size_t pass = 0; pass < cfg.window_sizes.size(); ++pass) {
        const int win = cfg.window_sizes[pass];
        const int step = std::max(1, static_cast<int>(std::lround(win * (1.0 - cfg.overlap_fraction))));
        const std::vector<int> xs = window_origins(W, win, step);
        const std::vector<int> ys = window_origins(H, win, step);

        // Deform frame_b by the predictor for every pass after the first.
        const bool deform = pass > 0;
        Grid2d frame_b_def = pair.frame_b;
        if (deform) {
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    frame_b_def.at(y, x) =
                        bilinear_sample(pair.frame_b, x + predictor.u.at(y, x),
                                        y + predictor.v.at(y, x));
                }
            }
        }

        grid = VectorGrid{};
        grid.rows = static_cast<int>(ys.size());
        grid.cols = static_cast<int>(xs.size());
        grid.cx.resize(xs.size());
        grid.cy.resize(ys.size());
        for (size_t j = 0; j < xs.size(); ++j) grid.cx[j] = xs[j] + win / 2.0;
        for (size_t i = 0; i < ys.size(); ++i) grid.cy[i] = ys[i] + win / 2.0;
        grid.u.assign(grid.rows * static_cast<size_t>(grid.cols), 0.0);
        grid.v.assign(grid.u.size(), 0.0);
        grid.valid.assign(grid.u.size(), 0);

        for (int r = 0; r < grid.rows; ++r) {
            for (int c = 0; c < grid.cols; ++c) {
                const Grid2d wa = extract_window(pair.frame_a, ys[r], xs[c], win);
                const Grid2d wb = extract_window(frame_b_def, ys[r], xs[c], win);
                const CorrelationPeak peak = correlate_window(wa, wb);
                if (!peak.valid || std::fabs(peak.dx) > win / 2.0 ||
                    std::fabs(peak.dy) > win / 2.0) {
                    continue; // stays invalid, filled below
                }
                double u = peak.dx;
                double v = peak.dy;
                if (deform) {
                    // The correlation measured the residual after warping.
                    u += bilinear_sample(predictor.u, grid.cx[c] - 0.5, grid.cy[r] - 0.5);
                    v += bilinear_sample(predictor.v, grid.cx[c] - 0.5, grid.cy[r] - 0.5);
                }
                grid.u_at(r, c) = u;
                grid.v_at(r, c) = v;
                grid.valid[static_cast<size_t>(r) * grid.cols + c] = 1;
            }
        }

        // Outlier rejection on the measured grid, then hole filling.
        if (grid.rows >= 3 && grid.cols >= 3) {
            const auto mask =
                normalized_median_filter(grid, cfg.outlier_threshold, cfg.mad_epsilon);
            for (size_t i = 0; i < mask.size(); ++i) {
                grid.valid[i] = grid.valid[i] & mask[i];
            }
        }
        fill_invalid(grid);

        predictor = grid_to_dense(grid, H, W);
    }

    predictor.coordinate_scale = 1.0;
    return predictor;
}

} // namespace pivflow::widim

#include "pivflow/widim/xcorr.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <mutex>
#include <vector>

#include <fftw3.h>

namespace pivflow::widim {

namespace {

/// Cached FFTW plans per window size. Plan creation is not thread-safe,
/// execution on caller-owned buffers is.
class PlanCache {
public:
    struct Plans {
        fftw_plan forward = nullptr;
        fftw_plan backward = nullptr;
    };

    Plans get(int n) {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = plans_.find(n);
        if (it != plans_.end()) return it->second;

        std::vector<std::complex<double>> probe(static_cast<size_t>(n) * n);
        auto* p = reinterpret_cast<fftw_complex*>(probe.data());
        Plans plans;
        plans.forward =
            fftw_plan_dft_2d(n, n, p, p, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans.backward =
            fftw_plan_dft_2d(n, n, p, p, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_[n] = plans;
        return plans;
    }

private:
    std::mutex mutex_;
    std::map<int, Plans> plans_;
};

PlanCache& plan_cache() {
    static PlanCache cache;
    return cache;
}

double window_variance(const Grid2d& w, double& mean_out) {
    double mean = 0.0;
    for (double x : w.data) mean += x;
    mean /= static_cast<double>(w.data.size());
    double var = 0.0;
    for (double x : w.data) var += (x - mean) * (x - mean);
    mean_out = mean;
    return var / static_cast<double>(w.data.size());
}

int wrap_disp(int idx, int n) { return idx <= n / 2 ? idx : idx - n; }

} // namespace

Grid2d correlation_plane(const Grid2d& win_a, const Grid2d& win_b) {
    if (!win_a.same_shape(win_b) || win_a.height != win_a.width) {
        throw ShapeMismatch("correlate_window expects equal square windows");
    }
    const int n = win_a.height;
    if (n < 8) throw PreconditionError("correlation window side must be >= 8");

    double mean_a = 0.0, mean_b = 0.0;
    window_variance(win_a, mean_a);
    window_variance(win_b, mean_b);

    std::vector<std::complex<double>> fa(static_cast<size_t>(n) * n);
    std::vector<std::complex<double>> fb(static_cast<size_t>(n) * n);
    for (size_t i = 0; i < fa.size(); ++i) {
        fa[i] = win_a.data[i] - mean_a;
        fb[i] = win_b.data[i] - mean_b;
    }

    const auto plans = plan_cache().get(n);
    fftw_execute_dft(plans.forward, reinterpret_cast<fftw_complex*>(fa.data()),
                     reinterpret_cast<fftw_complex*>(fa.data()));
    fftw_execute_dft(plans.forward, reinterpret_cast<fftw_complex*>(fb.data()),
                     reinterpret_cast<fftw_complex*>(fb.data()));

    // corr(a, b)(d) = sum_x a(x) b(x + d)  <=>  conj(A) * B in Fourier space.
    for (size_t i = 0; i < fa.size(); ++i) {
        fa[i] = std::conj(fa[i]) * fb[i];
    }
    fftw_execute_dft(plans.backward, reinterpret_cast<fftw_complex*>(fa.data()),
                     reinterpret_cast<fftw_complex*>(fa.data()));

    Grid2d plane(n, n);
    const double scale = 1.0 / (static_cast<double>(n) * n);
    for (size_t i = 0; i < fa.size(); ++i) {
        plane.data[i] = fa[i].real() * scale;
    }
    return plane;
}

namespace {

/// Three-point peak refinement along one axis; c_minus/c0/c_plus are the
/// correlation values at the integer peak and its two wrapped neighbors.
double subpixel_offset(double c_minus, double c0, double c_plus) {
    if (c_minus > 0.0 && c0 > 0.0 && c_plus > 0.0) {
        const double lm = std::log(c_minus);
        const double l0 = std::log(c0);
        const double lp = std::log(c_plus);
        const double denom = 2.0 * lm - 4.0 * l0 + 2.0 * lp;
        if (std::fabs(denom) > 1e-300) {
            const double d = (lm - lp) / denom;
            if (std::isfinite(d) && std::fabs(d) <= 1.0) return d;
        }
        return 0.0;
    }
    const double denom = 2.0 * c_minus - 4.0 * c0 + 2.0 * c_plus;
    if (std::fabs(denom) < 1e-300) return 0.0;
    const double d = (c_minus - c_plus) / denom;
    return std::isfinite(d) && std::fabs(d) <= 1.0 ? d : 0.0;
}

} // namespace

CorrelationPeak correlate_window(const Grid2d& win_a, const Grid2d& win_b) {
    const int n = win_a.height;

    double mean = 0.0;
    if (window_variance(win_a, mean) < 1e-12 || window_variance(win_b, mean) < 1e-12) {
        return {}; // flat window: no displacement signal
    }

    const Grid2d plane = correlation_plane(win_a, win_b);

    int peak_x = 0, peak_y = 0;
    double peak_val = plane.at(0, 0);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            if (plane.at(y, x) > peak_val) {
                peak_val = plane.at(y, x);
                peak_x = x;
                peak_y = y;
            }
        }
    }

    // Second peak outside the 3x3 neighborhood of the primary (wrapped).
    double second = -std::numeric_limits<double>::infinity();
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const int ddx = std::abs(wrap_disp((x - peak_x + n) % n, n));
            const int ddy = std::abs(wrap_disp((y - peak_y + n) % n, n));
            if (ddx <= 1 && ddy <= 1) continue;
            second = std::max(second, plane.at(y, x));
        }
    }

    auto wrapped = [&](int y, int x) { return plane.at((y + n) % n, (x + n) % n); };

    CorrelationPeak peak;
    peak.valid = true;
    peak.dx = wrap_disp(peak_x, n) +
              subpixel_offset(wrapped(peak_y, peak_x - 1), peak_val, wrapped(peak_y, peak_x + 1));
    peak.dy = wrap_disp(peak_y, n) +
              subpixel_offset(wrapped(peak_y - 1, peak_x), peak_val, wrapped(peak_y + 1, peak_x));
    peak.peak_ratio = second > 0.0 ? peak_val / second : std::numeric_limits<double>::infinity();
    return peak;
}

} // namespace pivflow::widim

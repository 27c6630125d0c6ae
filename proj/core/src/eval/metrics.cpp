#include "pivflow/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pivflow::eval {

namespace {

void check_shapes(const VelocityField& pred, const VelocityField& gt) {
    if (pred.height() != gt.height() || pred.width() != gt.width()) {
        throw ShapeMismatch("metric inputs differ in shape: " + std::to_string(pred.height()) +
                            "x" + std::to_string(pred.width()) + " vs " +
                            std::to_string(gt.height()) + "x" + std::to_string(gt.width()));
    }
}

bool pixel_valid(const VelocityField& f, int y, int x, double threshold) {
    const double u = f.u.at(y, x);
    const double v = f.v.at(y, x);
    return std::isfinite(u) && std::isfinite(v) && std::fabs(u) <= threshold &&
           std::fabs(v) <= threshold;
}

/// Walks valid (non-border, non-sentinel) pixels of both fields.
template <typename Fn>
long for_valid_pixels(const VelocityField& pred, const VelocityField& gt,
                      const MetricOptions& opts, Fn&& fn) {
    const int b = opts.border_crop;
    long visited = 0;
    for (int y = b; y < pred.height() - b; ++y) {
        for (int x = b; x < pred.width() - b; ++x) {
            if (!pixel_valid(pred, y, x, opts.invalid_value_threshold) ||
                !pixel_valid(gt, y, x, opts.invalid_value_threshold)) {
                continue;
            }
            ++visited;
            fn(y, x);
        }
    }
    return visited;
}

} // namespace

double aee(const VelocityField& pred, const VelocityField& gt, const MetricOptions& opts) {
    check_shapes(pred, gt);
    double sum = 0.0;
    const long n = for_valid_pixels(pred, gt, opts, [&](int y, int x) {
        sum += std::hypot(pred.u.at(y, x) - gt.u.at(y, x), pred.v.at(y, x) - gt.v.at(y, x));
    });
    if (n == 0) throw EmptyValidSet("aee: no valid pixels");
    return sum / static_cast<double>(n);
}

double rmse(const VelocityField& pred, const VelocityField& gt, const MetricOptions& opts) {
    check_shapes(pred, gt);
    double sum = 0.0;
    const long n = for_valid_pixels(pred, gt, opts, [&](int y, int x) {
        const double du = pred.u.at(y, x) - gt.u.at(y, x);
        const double dv = pred.v.at(y, x) - gt.v.at(y, x);
        sum += du * du + dv * dv;
    });
    if (n == 0) throw EmptyValidSet("rmse: no valid pixels");
    return std::sqrt(sum / static_cast<double>(n));
}

AaeResult aae(const VelocityField& pred, const VelocityField& gt, const MetricOptions& opts) {
    check_shapes(pred, gt);
    AaeResult r;
    double sum = 0.0;
    for_valid_pixels(pred, gt, opts, [&](int y, int x) {
        const double pu = pred.u.at(y, x), pv = pred.v.at(y, x);
        const double gu = gt.u.at(y, x), gv = gt.v.at(y, x);
        const double np = std::hypot(pu, pv);
        const double ng = std::hypot(gu, gv);
        if (np < opts.aae_epsilon || ng < opts.aae_epsilon) {
            ++r.excluded;
            return;
        }
        // max() guards the quotient without perturbing well-posed pixels,
        // so antiparallel vectors evaluate to exactly pi.
        const double cosine =
            std::clamp((pu * gu + pv * gv) / std::max(np * ng, opts.aae_epsilon), -1.0, 1.0);
        sum += std::acos(cosine);
        ++r.included;
    });
    if (r.included == 0) throw EmptyValidSet("aae: every pixel was excluded");
    r.value = sum / static_cast<double>(r.included);
    return r;
}

Grid2d residual_map(const VelocityField& pred, const VelocityField& gt,
                    const MetricOptions& opts) {
    check_shapes(pred, gt);
    Grid2d map(pred.height(), pred.width(), kResidualInvalid);
    for_valid_pixels(pred, gt, opts, [&](int y, int x) {
        map.at(y, x) =
            std::hypot(pred.u.at(y, x) - gt.u.at(y, x), pred.v.at(y, x) - gt.v.at(y, x));
    });
    return map;
}

SampleMetrics sample_metrics(const std::string& sample_id, CaseLabel label,
                             const VelocityField& pred, const VelocityField& gt,
                             const MetricOptions& opts) {
    SampleMetrics m;
    m.sample_id = sample_id;
    m.case_label = label;
    m.aee = aee(pred, gt, opts);
    m.rmse = rmse(pred, gt, opts);
    try {
        const AaeResult r = aae(pred, gt, opts);
        m.aae = r.value;
        m.aae_excluded = r.excluded;
    } catch (const EmptyValidSet&) {
        m.aae = std::numeric_limits<double>::quiet_NaN();
        m.aae_excluded = static_cast<long>(pred.u.size());
    }
    return m;
}

} // namespace pivflow::eval

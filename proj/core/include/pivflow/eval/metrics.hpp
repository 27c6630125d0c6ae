#pragma once

#include "pivflow/core/errors.hpp"
#include "pivflow/core/types.hpp"

namespace pivflow::eval {

/// Every pixel was masked out; the metric is undefined.
struct EmptyValidSet : Error {
    explicit EmptyValidSet(const std::string& msg) : Error(msg) {}
};

struct MetricOptions {
    double aae_epsilon = 1e-12;           // zero-vector guard for the angular error
    double invalid_value_threshold = 1e9; // dataset unknown-flow sentinels
    int border_crop = 0;                  // pixels excluded from each edge
};

/// Mean Euclidean norm of (pred - gt) over valid pixels, pixels/frame.
double aee(const VelocityField& pred, const VelocityField& gt, const MetricOptions& opts = {});

/// Root of the mean squared per-pixel error norm over valid pixels.
double rmse(const VelocityField& pred, const VelocityField& gt, const MetricOptions& opts = {});

struct AaeResult {
    double value = 0.0; // radians, mean over included pixels
    long included = 0;
    long excluded = 0;  // valid pixels skipped because a vector norm < epsilon
};

/// Mean angular deviation arccos(pred.gt / (|pred||gt|)) over valid pixels.
/// Pixels where either norm is below epsilon are excluded and tallied.
AaeResult aae(const VelocityField& pred, const VelocityField& gt,
              const MetricOptions& opts = {});

/// Per-pixel Euclidean error norm. Invalid pixels carry the sentinel -1.
Grid2d residual_map(const VelocityField& pred, const VelocityField& gt,
                    const MetricOptions& opts = {});

/// Sentinel used in residual maps for masked-out pixels.
inline constexpr double kResidualInvalid = -1.0;

/// All three metrics for one prediction, in one pass over the masks.
SampleMetrics sample_metrics(const std::string& sample_id, CaseLabel label,
                             const VelocityField& pred, const VelocityField& gt,
                             const MetricOptions& opts = {});

} // namespace pivflow::eval

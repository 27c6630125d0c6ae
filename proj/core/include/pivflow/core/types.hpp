#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pivflow/core/errors.hpp"

namespace pivflow {

/// Dense row-major 2D scalar grid. Shared storage type for image
/// intensities and flow components.
struct Grid2d {
    int height = 0;
    int width = 0;
    std::vector<double> data; // size height*width, row-major

    Grid2d() = default;
    Grid2d(int h, int w, double fill = 0.0)
        : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

    double& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    double at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }

    size_t size() const { return data.size(); }
    bool same_shape(const Grid2d& o) const { return height == o.height && width == o.width; }
};

/// Two co-registered grayscale particle frames, intensities in [0,1].
struct ImagePair {
    Grid2d frame_a;
    Grid2d frame_b;
    std::string source_id;

    int height() const { return frame_a.height; }
    int width() const { return frame_a.width; }
};

/// Dense per-pixel displacement field in pixels/frame. Image coordinate
/// convention: u positive rightward (increasing column), v positive
/// downward (increasing row).
struct VelocityField {
    Grid2d u;
    Grid2d v;
    double coordinate_scale = 1.0; // 1.0 native, 2.0 in upsampled coordinates

    VelocityField() = default;
    VelocityField(int h, int w, double scale = 1.0)
        : u(h, w), v(h, w), coordinate_scale(scale) {}

    int height() const { return u.height; }
    int width() const { return u.width; }

    /// Bit-exact equality on u, v and coordinate_scale.
    bool operator==(const VelocityField& o) const;
};

enum class CaseLabel {
    Backstep,
    JHTDB,
    DNSTurbulence,
    Cylinder,
    SQG,
    Uniform,
    Other,
    Unlabeled,
};

enum class Split { Train, Val, Test };

const char* to_string(CaseLabel label);
const char* to_string(Split split);
CaseLabel parse_case_label(const std::string& s);  // throws Error on unknown
Split parse_split(const std::string& s);           // throws Error on unknown

/// Maps a dataset directory name onto the case taxonomy. Unknown names
/// become Other.
CaseLabel case_label_from_directory(const std::string& dir_name);

/// One dataset element: an image pair plus (for synthetic data) the
/// ground-truth field it was rendered from.
struct FlowSample {
    ImagePair pair;
    std::optional<VelocityField> gt;
    CaseLabel case_label = CaseLabel::Unlabeled;
    Split split = Split::Train;

    const std::string& id() const { return pair.source_id; }
};

/// Checks every documented invariant of a FlowSample and its members.
/// Returns one description per violation; empty means well-formed.
std::vector<std::string> validate_sample(const FlowSample& sample);

struct SampleMetrics {
    std::string sample_id;
    CaseLabel case_label = CaseLabel::Unlabeled;
    double aee = 0.0;
    double rmse = 0.0;
    double aae = 0.0;      // radians; NaN when every pixel was excluded
    long aae_excluded = 0; // pixels skipped by the angular-error guard
};

struct CaseAggregate {
    double aee = 0.0;
    double rmse = 0.0;
    double aae = 0.0;
    long count = 0;
};

/// Per-sample and per-case metric aggregates plus the optional
/// baseline-relative reduction, in the layout the report writers emit.
struct EvalReport {
    std::vector<SampleMetrics> per_sample;
    std::map<CaseLabel, CaseAggregate> per_case;
    CaseAggregate overall;
    std::optional<double> reduction_vs_baseline; // fraction, e.g. 0.594
    bool pixel_pooled = false;                   // aggregation mode used
};

} // namespace pivflow

#include "pivflow/core/types.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace pivflow {

bool VelocityField::operator==(const VelocityField& o) const {
    return coordinate_scale == o.coordinate_scale && u.height == o.u.height &&
           u.width == o.u.width && u.data == o.u.data && v.data == o.v.data;
}

const char* to_string(CaseLabel label) {
    switch (label) {
    case CaseLabel::Backstep: return "Backstep";
    case CaseLabel::JHTDB: return "JHTDB";
    case CaseLabel::DNSTurbulence: return "DNS-Turbulence";
    case CaseLabel::Cylinder: return "Cylinder";
    case CaseLabel::SQG: return "SQG";
    case CaseLabel::Uniform: return "Uniform";
    case CaseLabel::Other: return "Other";
    case CaseLabel::Unlabeled: return "Unlabeled";
    }
    return "Unlabeled";
}

const char* to_string(Split split) {
    switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    }
    return "train";
}

CaseLabel parse_case_label(const std::string& s) {
    for (CaseLabel c : {CaseLabel::Backstep, CaseLabel::JHTDB, CaseLabel::DNSTurbulence,
                        CaseLabel::Cylinder, CaseLabel::SQG, CaseLabel::Uniform,
                        CaseLabel::Other, CaseLabel::Unlabeled}) {
        if (s == to_string(c)) return c;
    }
    throw Error("unknown case label: " + s);
}

Split parse_split(const std::string& s) {
    for (Split sp : {Split::Train, Split::Val, Split::Test}) {
        if (s == to_string(sp)) return sp;
    }
    throw Error("unknown split: " + s);
}

namespace {

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

} // namespace

CaseLabel case_label_from_directory(const std::string& dir_name) {
    const std::string d = lowercase(dir_name);
    if (d == "backstep") return CaseLabel::Backstep;
    if (d == "jhtdb" || d == "jhtdb-channel" || d == "jhtdb_channel") return CaseLabel::JHTDB;
    if (d == "dns-turbulence" || d == "dns_turbulence" || d == "dns") return CaseLabel::DNSTurbulence;
    if (d == "cylinder") return CaseLabel::Cylinder;
    if (d == "sqg") return CaseLabel::SQG;
    if (d == "uniform") return CaseLabel::Uniform;
    if (d == "unlabeled") return CaseLabel::Unlabeled;
    return CaseLabel::Other;
}

namespace {

bool all_finite(const Grid2d& g) {
    for (double x : g.data) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

bool intensities_in_range(const Grid2d& g) {
    for (double x : g.data) {
        if (!(x >= 0.0 && x <= 1.0)) return false;
    }
    return true;
}

} // namespace

std::vector<std::string> validate_sample(const FlowSample& sample) {
    std::vector<std::string> violations;
    const ImagePair& p = sample.pair;

    if (!p.frame_a.same_shape(p.frame_b)) {
        violations.emplace_back("frame shape mismatch");
    }
    if (p.height() < 16 || p.width() < 16) {
        violations.emplace_back("image smaller than 16x16 minimum");
    }
    if (!all_finite(p.frame_a) || !all_finite(p.frame_b)) {
        violations.emplace_back("non-finite intensity");
    } else if (!intensities_in_range(p.frame_a) || !intensities_in_range(p.frame_b)) {
        violations.emplace_back("intensity outside [0,1]");
    }

    if (sample.gt) {
        const VelocityField& f = *sample.gt;
        if (!f.u.same_shape(f.v)) {
            violations.emplace_back("flow component shape mismatch");
        }
        if (f.height() != p.height() || f.width() != p.width()) {
            violations.emplace_back("gt shape does not match image pair");
        }
        if (!all_finite(f.u) || !all_finite(f.v)) {
            violations.emplace_back("non-finite flow value");
        }
        if (f.coordinate_scale != 1.0 && f.coordinate_scale != 2.0) {
            violations.emplace_back("coordinate_scale not in {1.0, 2.0}");
        }
    }
    return violations;
}

} // namespace pivflow

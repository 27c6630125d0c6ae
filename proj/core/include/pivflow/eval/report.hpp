#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "pivflow/core/errors.hpp"
#include "pivflow/core/types.hpp"
#include "pivflow/eval/metrics.hpp"

namespace pivflow::eval {

/// Baseline results cover a different sample set than ours.
struct CaseMismatch : Error {
    explicit CaseMismatch(const std::string& msg) : Error(msg) {}
};

struct ReportOptions {
    MetricOptions metrics;
    /// Default aggregation averages sample-level metrics with equal weight
    /// per sample within a case; the alternative pools pixels across the
    /// case before averaging. The report records which mode was used.
    bool pixel_pooled = false;
};

struct EvalResult {
    const FlowSample* sample = nullptr;
    VelocityField prediction;
};

/// Aggregates per-sample metrics into per-case and overall tables and,
/// when baseline predictions are supplied, the fractional AEE reduction
/// (AEE_base - AEE_ours) / AEE_base.
EvalReport build_report(const std::vector<EvalResult>& results,
                        const std::vector<EvalResult>* baseline_results = nullptr,
                        const ReportOptions& opts = {});

/// Same aggregation, starting from already-computed per-sample metrics.
EvalReport build_report_from_metrics(const std::vector<SampleMetrics>& ours,
                                     const std::vector<SampleMetrics>* baseline = nullptr,
                                     bool pixel_pooled = false);

/// Human-readable table mirroring the comparison-table layout.
void print_report(const EvalReport& report, std::ostream& os);

/// Machine-readable line-oriented record file.
void write_report_records(const EvalReport& report, const std::filesystem::path& path);
EvalReport read_report_records(const std::filesystem::path& path);

/// "59.4%"-style rendering of the reduction fraction at one decimal.
std::string format_reduction_percent(double fraction);

} // namespace pivflow::eval

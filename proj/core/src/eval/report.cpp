#include "pivflow/eval/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace pivflow::eval {

namespace {

struct PixelAccum {
    double aee_sum = 0.0;
    double sq_sum = 0.0;
    double aae_sum = 0.0;
    long pixels = 0;
    long aae_included = 0;
    long samples = 0;
};

EvalReport aggregate_sample_mean(const std::vector<SampleMetrics>& per_sample) {
    EvalReport report;
    report.per_sample = per_sample;

    struct Accum {
        double aee = 0, rmse = 0, aae = 0;
        long n = 0, aae_n = 0;
    };
    std::map<CaseLabel, Accum> acc;
    for (const SampleMetrics& m : per_sample) {
        Accum& a = acc[m.case_label];
        a.aee += m.aee;
        a.rmse += m.rmse;
        if (!std::isnan(m.aae)) {
            a.aae += m.aae;
            ++a.aae_n;
        }
        ++a.n;
    }

    double aee_total = 0, rmse_total = 0, aae_total = 0;
    long n_total = 0, aae_n_total = 0;
    for (const auto& [label, a] : acc) {
        CaseAggregate c;
        c.count = a.n;
        c.aee = a.aee / a.n;
        c.rmse = a.rmse / a.n;
        c.aae = a.aae_n > 0 ? a.aae / a.aae_n : std::numeric_limits<double>::quiet_NaN();
        report.per_case[label] = c;
        aee_total += a.aee;
        rmse_total += a.rmse;
        aae_total += a.aae;
        n_total += a.n;
        aae_n_total += a.aae_n;
    }
    report.overall.count = n_total;
    report.overall.aee = aee_total / n_total;
    report.overall.rmse = rmse_total / n_total;
    report.overall.aae =
        aae_n_total > 0 ? aae_total / aae_n_total : std::numeric_limits<double>::quiet_NaN();
    return report;
}

} // namespace

EvalReport build_report_from_metrics(const std::vector<SampleMetrics>& ours,
                                     const std::vector<SampleMetrics>* baseline,
                                     bool pixel_pooled) {
    if (ours.empty()) throw PreconditionError("build_report requires at least one result");
    EvalReport report = aggregate_sample_mean(ours);
    report.pixel_pooled = pixel_pooled;

    if (baseline) {
        std::multiset<std::string> our_ids, base_ids;
        for (const auto& m : ours) our_ids.insert(m.sample_id);
        for (const auto& m : *baseline) base_ids.insert(m.sample_id);
        if (our_ids != base_ids) {
            std::string missing;
            for (const auto& id : our_ids) {
                if (base_ids.count(id) == 0) missing += (missing.empty() ? "" : ", ") + id;
            }
            for (const auto& id : base_ids) {
                if (our_ids.count(id) == 0) missing += (missing.empty() ? "" : ", ") + id;
            }
            throw CaseMismatch("baseline covers a different sample set; mismatched ids: " +
                               missing);
        }
        const EvalReport base = aggregate_sample_mean(*baseline);
        report.reduction_vs_baseline =
            (base.overall.aee - report.overall.aee) / base.overall.aee;
    }
    return report;
}

EvalReport build_report(const std::vector<EvalResult>& results,
                        const std::vector<EvalResult>* baseline_results,
                        const ReportOptions& opts) {
    if (results.empty()) throw PreconditionError("build_report requires at least one result");

    auto compute = [&](const std::vector<EvalResult>& rs) {
        std::vector<SampleMetrics> ms;
        ms.reserve(rs.size());
        for (const EvalResult& r : rs) {
            if (!r.sample || !r.sample->gt) {
                throw PreconditionError("build_report: result without ground truth");
            }
            ms.push_back(sample_metrics(r.sample->id(), r.sample->case_label, r.prediction,
                                        *r.sample->gt, opts.metrics));
        }
        return ms;
    };

    const std::vector<SampleMetrics> ours = compute(results);

    if (!opts.pixel_pooled) {
        if (baseline_results) {
            const std::vector<SampleMetrics> base = compute(*baseline_results);
            return build_report_from_metrics(ours, &base, false);
        }
        return build_report_from_metrics(ours, nullptr, false);
    }

    // Pixel-pooled mode: metrics are averaged over every valid pixel of a
    // case at once instead of per sample first.
    std::map<CaseLabel, PixelAccum> acc;
    for (const EvalResult& r : results) {
        const VelocityField& pred = r.prediction;
        const VelocityField& gt = *r.sample->gt;
        PixelAccum& a = acc[r.sample->case_label];
        const Grid2d res = residual_map(pred, gt, opts.metrics);
        for (int y = 0; y < res.height; ++y) {
            for (int x = 0; x < res.width; ++x) {
                const double e = res.at(y, x);
                if (e == kResidualInvalid) continue;
                a.aee_sum += e;
                a.sq_sum += e * e;
                ++a.pixels;
            }
        }
        try {
            const AaeResult ar = aae(pred, gt, opts.metrics);
            a.aae_sum += ar.value * ar.included;
            a.aae_included += ar.included;
        } catch (const EmptyValidSet&) {
        }
        ++a.samples;
    }

    EvalReport report;
    report.pixel_pooled = true;
    report.per_sample = ours;
    PixelAccum total;
    for (const auto& [label, a] : acc) {
        CaseAggregate c;
        c.count = a.samples;
        c.aee = a.aee_sum / a.pixels;
        c.rmse = std::sqrt(a.sq_sum / a.pixels);
        c.aae = a.aae_included > 0 ? a.aae_sum / a.aae_included
                                   : std::numeric_limits<double>::quiet_NaN();
        report.per_case[label] = c;
        total.aee_sum += a.aee_sum;
        total.sq_sum += a.sq_sum;
        total.aae_sum += a.aae_sum;
        total.pixels += a.pixels;
        total.aae_included += a.aae_included;
        total.samples += a.samples;
    }
    report.overall.count = total.samples;
    report.overall.aee = total.aee_sum / total.pixels;
    report.overall.rmse = std::sqrt(total.sq_sum / total.pixels);
    report.overall.aae = total.aae_included > 0
                             ? total.aae_sum / total.aae_included
                             : std::numeric_limits<double>::quiet_NaN();

    if (baseline_results) {
        const EvalReport base = build_report(*baseline_results, nullptr, opts);
        std::multiset<std::string> our_ids, base_ids;
        for (const auto& r : results) our_ids.insert(r.sample->id());
        for (const auto& r : *baseline_results) base_ids.insert(r.sample->id());
        if (our_ids != base_ids) {
            throw CaseMismatch("baseline covers a different sample set");
        }
        report.reduction_vs_baseline =
            (base.overall.aee - report.overall.aee) / base.overall.aee;
    }
    return report;
}

std::string format_reduction_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f%%", fraction * 100.0);
    return buf;
}

namespace {

std::string fmt_metric(double v) {
    if (std::isnan(v)) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

} // namespace

void print_report(const EvalReport& report, std::ostream& os) {
    os << std::left << std::setw(16) << "case" << std::right << std::setw(8) << "count"
       << std::setw(10) << "AEE" << std::setw(10) << "RMSE" << std::setw(10) << "AAE" << '\n';
    for (const auto& [label, c] : report.per_case) {
        os << std::left << std::setw(16) << to_string(label) << std::right << std::setw(8)
           << c.count << std::setw(10) << fmt_metric(c.aee) << std::setw(10)
           << fmt_metric(c.rmse) << std::setw(10) << fmt_metric(c.aae) << '\n';
    }
    os << std::left << std::setw(16) << "overall" << std::right << std::setw(8)
       << report.overall.count << std::setw(10) << fmt_metric(report.overall.aee)
       << std::setw(10) << fmt_metric(report.overall.rmse) << std::setw(10)
       << fmt_metric(report.overall.aae) << '\n';
    os << "aggregation: " << (report.pixel_pooled ? "pixel-pooled" : "sample-mean") << '\n';
    if (report.reduction_vs_baseline) {
        os << "AEE reduction vs baseline: "
           << format_reduction_percent(*report.reduction_vs_baseline) << '\n';
    }
}

namespace {

std::string fmt_full(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

void write_report_records(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IOFailure("cannot write " + path.string());
    f << "# pivflow eval report v1\n";
    f << "aggregation " << (report.pixel_pooled ? "pixel_pooled" : "sample_mean") << '\n';
    for (const auto& m : report.per_sample) {
        f << "sample " << m.sample_id << ' ' << to_string(m.case_label) << ' '
          << fmt_full(m.aee) << ' ' << fmt_full(m.rmse) << ' ' << fmt_full(m.aae) << ' '
          << m.aae_excluded << '\n';
    }
    for (const auto& [label, c] : report.per_case) {
        f << "case " << to_string(label) << ' ' << c.count << ' ' << fmt_full(c.aee) << ' '
          << fmt_full(c.rmse) << ' ' << fmt_full(c.aae) << '\n';
    }
    f << "overall " << report.overall.count << ' ' << fmt_full(report.overall.aee) << ' '
      << fmt_full(report.overall.rmse) << ' ' << fmt_full(report.overall.aae) << '\n';
    if (report.reduction_vs_baseline) {
        f << "reduction_vs_baseline " << fmt_full(*report.reduction_vs_baseline) << '\n';
    }
    if (!f) throw IOFailure("write failed for " + path.string());
}

EvalReport read_report_records(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IOFailure("cannot open " + path.string());
    EvalReport report;
    std::string line;
    bool saw_overall = false;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "aggregation") {
            std::string mode;
            ss >> mode;
            report.pixel_pooled = mode == "pixel_pooled";
        } else if (tag == "sample") {
            SampleMetrics m;
            std::string label;
            ss >> m.sample_id >> label >> m.aee >> m.rmse;
            std::string aae_str;
            ss >> aae_str >> m.aae_excluded;
            m.aae = aae_str == "nan" ? std::numeric_limits<double>::quiet_NaN()
                                     : std::stod(aae_str);
            m.case_label = parse_case_label(label);
            report.per_sample.push_back(std::move(m));
        } else if (tag == "case") {
            std::string label;
            CaseAggregate c;
            ss >> label >> c.count >> c.aee >> c.rmse;
            std::string aae_str;
            ss >> aae_str;
            c.aae = aae_str == "nan" ? std::numeric_limits<double>::quiet_NaN()
                                     : std::stod(aae_str);
            report.per_case[parse_case_label(label)] = c;
        } else if (tag == "overall") {
            ss >> report.overall.count >> report.overall.aee >> report.overall.rmse;
            std::string aae_str;
            ss >> aae_str;
            report.overall.aae = aae_str == "nan" ? std::numeric_limits<double>::quiet_NaN()
                                                  : std::stod(aae_str);
            saw_overall = true;
        } else if (tag == "reduction_vs_baseline") {
            double frac;
            ss >> frac;
            report.reduction_vs_baseline = frac;
        } else {
            throw Error(path.string() + ": malformed report line: " + line);
        }
        if (ss.fail()) throw Error(path.string() + ": malformed report line: " + line);
    }
    if (!saw_overall) throw Error(path.string() + ": report lacks an overall record");
    return report;
}

} // namespace pivflow::eval

#pragma once

#include <string>
#include <vector>

#include "pivflow/core/errors.hpp"
#include "pivflow/core/types.hpp"

namespace pivflow::diffusion {

struct ScheduleIndexError : Error {
    explicit ScheduleIndexError(const std::string& msg) : Error(msg) {}
};

enum class ScheduleKind { Cosine, Linear };

ScheduleKind parse_schedule_kind(const std::string& s);

/// Noise-level sequence and derived cumulative coefficients. Index 0 is
/// the clean signal (alpha_bar[0] == 1); index T the noisiest level.
class DiffusionSchedule {
public:
    DiffusionSchedule(int T, ScheduleKind kind, int inference_step_count, double eta);

    static DiffusionSchedule cosine(int T = 1000, int inference_steps = 6, double eta = 0.0);
    static DiffusionSchedule linear(int T = 1000, int inference_steps = 6, double eta = 0.0);

    int T() const { return T_; }
    double eta() const { return eta_; }
    ScheduleKind kind() const { return kind_; }

    /// Cumulative product of retention coefficients, valid for t in [0, T].
    double alpha_bar(int t) const;
    double beta(int t) const; // per-step noise level, t in [1, T]

    /// Decreasing subset of {1..T} visited at sampling time.
    const std::vector<int>& inference_steps() const { return inference_steps_; }

private:
    int T_;
    ScheduleKind kind_;
    double eta_;
    std::vector<double> betas_;      // betas_[t-1] for t in [1, T]
    std::vector<double> alpha_bars_; // alpha_bars_[t] for t in [0, T]
    std::vector<int> inference_steps_;
};

/// Maps flow values (pixels) onto the unit-scale signal diffusion runs on.
struct FlowNormalizer {
    double scale_max = 16.0;
    bool clamp = true;

    double normalize(double value) const;
    double denormalize(double value) const { return value * scale_max; }
};

VelocityField normalize_flow(const VelocityField& field, const FlowNormalizer& normalizer);
VelocityField denormalize_flow(const VelocityField& field, const FlowNormalizer& normalizer);

/// v_t = sqrt(alpha_bar_t) * v0 + sqrt(1 - alpha_bar_t) * noise.
VelocityField forward_noise(const VelocityField& v0_norm, int t, const VelocityField& noise,
                            const DiffusionSchedule& schedule);

} // namespace pivflow::diffusion

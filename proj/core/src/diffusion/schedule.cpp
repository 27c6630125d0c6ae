#include "pivflow/diffusion/schedule.hpp"

#include <algorithm>
#include <cmath>

namespace pivflow::diffusion {

ScheduleKind parse_schedule_kind(const std::string& s) {
    if (s == "cosine") return ScheduleKind::Cosine;
    if (s == "linear") return ScheduleKind::Linear;
    throw Error("unknown diffusion schedule: " + s);
}

DiffusionSchedule::DiffusionSchedule(int T, ScheduleKind kind, int inference_step_count,
                                     double eta)
    : T_(T), kind_(kind), eta_(eta) {
    if (T < 1) throw PreconditionError("schedule needs T >= 1");
    if (inference_step_count < 1 || inference_step_count > T) {
        throw PreconditionError("inference step count must lie in [1, T]");
    }
    if (eta < 0.0 || eta > 1.0) throw PreconditionError("eta must lie in [0, 1]");

    betas_.resize(T);
    if (kind == ScheduleKind::Linear) {
        const double beta_start = 1e-4;
        const double beta_end = 0.02;
        for (int t = 0; t < T; ++t) {
            betas_[t] = beta_start + (beta_end - beta_start) * t / std::max(1, T - 1);
        }
    } else {
        // Squared-cosine alpha_bar; betas derived from consecutive ratios.
        const double s = 0.008;
        auto f = [&](double t) {
            const double x = (t / T + s) / (1.0 + s) * M_PI / 2.0;
            return std::cos(x) * std::cos(x);
        };
        const double f0 = f(0.0);
        double prev = 1.0;
        for (int t = 1; t <= T; ++t) {
            const double ab = f(static_cast<double>(t)) / f0;
            double beta = 1.0 - ab / prev;
            beta = std::clamp(beta, 1e-8, 0.999);
            betas_[t - 1] = beta;
            prev = prev * (1.0 - beta);
        }
    }

    alpha_bars_.resize(T + 1);
    alpha_bars_[0] = 1.0;
    for (int t = 1; t <= T; ++t) {
        alpha_bars_[t] = alpha_bars_[t - 1] * (1.0 - betas_[t - 1]);
    }

    // Evenly spaced decreasing subset of {1..T}, always containing T.
    inference_steps_.resize(inference_step_count);
    for (int i = 0; i < inference_step_count; ++i) {
        inference_steps_[i] =
            static_cast<int>(std::llround(static_cast<double>(T) *
                                          (inference_step_count - i) / inference_step_count));
        inference_steps_[i] = std::max(1, inference_steps_[i]);
    }
}

DiffusionSchedule DiffusionSchedule::cosine(int T, int inference_steps, double eta) {
    return DiffusionSchedule(T, ScheduleKind::Cosine, inference_steps, eta);
}

DiffusionSchedule DiffusionSchedule::linear(int T, int inference_steps, double eta) {
    return DiffusionSchedule(T, ScheduleKind::Linear, inference_steps, eta);
}

double DiffusionSchedule::alpha_bar(int t) const {
    if (t < 0 || t > T_) {
        throw ScheduleIndexError("alpha_bar index " + std::to_string(t) + " outside [0, " +
                                 std::to_string(T_) + "]");
    }
    return alpha_bars_[t];
}

double DiffusionSchedule::beta(int t) const {
    if (t < 1 || t > T_) {
        throw ScheduleIndexError("beta index " + std::to_string(t) + " outside [1, " +
                                 std::to_string(T_) + "]");
    }
    return betas_[t - 1];
}

double FlowNormalizer::normalize(double value) const {
    const double x = value / scale_max;
    return clamp ? std::clamp(x, -1.0, 1.0) : x;
}

VelocityField normalize_flow(const VelocityField& field, const FlowNormalizer& normalizer) {
    VelocityField out = field;
    for (double& x : out.u.data) x = normalizer.normalize(x);
    for (double& x : out.v.data) x = normalizer.normalize(x);
    return out;
}

VelocityField denormalize_flow(const VelocityField& field, const FlowNormalizer& normalizer) {
    VelocityField out = field;
    for (double& x : out.u.data) x = normalizer.denormalize(x);
    for (double& x : out.v.data) x = normalizer.denormalize(x);
    return out;
}

VelocityField forward_noise(const VelocityField& v0_norm, int t, const VelocityField& noise,
                            const DiffusionSchedule& schedule) {
    if (t < 1 || t > schedule.T()) {
        throw ScheduleIndexError("forward_noise t outside [1, T]");
    }
    if (v0_norm.height() != noise.height() || v0_norm.width() != noise.width()) {
        throw ShapeMismatch("forward_noise: noise shape differs from signal");
    }
    const double ab = schedule.alpha_bar(t);
    const double signal = std::sqrt(ab);
    const double sigma = std::sqrt(1.0 - ab);
    VelocityField out = v0_norm;
    for (size_t i = 0; i < out.u.data.size(); ++i) {
        out.u.data[i] = signal * v0_norm.u.data[i] + sigma * noise.u.data[i];
        out.v.data[i] = signal * v0_norm.v.data[i] + sigma * noise.v.data[i];
    }
    return out;
}

} // namespace pivflow::diffusion

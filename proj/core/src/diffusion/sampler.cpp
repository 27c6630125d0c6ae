#include "pivflow/diffusion/sampler.hpp"

#include <cmath>

namespace pivflow::diffusion {

VelocityField reverse_step(const VelocityField& v_t, int t, int t_prev,
                           const VelocityField& predicted_v0, const DiffusionSchedule& schedule,
                           Rng* rng) {
    if (!(t > t_prev && t_prev >= 0)) {
        throw ScheduleIndexError("reverse_step requires t > t_prev >= 0, got t=" +
                                 std::to_string(t) + " t_prev=" + std::to_string(t_prev));
    }
    if (v_t.height() != predicted_v0.height() || v_t.width() != predicted_v0.width()) {
        throw ShapeMismatch("reverse_step: prediction shape differs from state");
    }

    const double ab_t = schedule.alpha_bar(t);
    const double ab_prev = schedule.alpha_bar(t_prev);
    const double sig_t = std::sqrt(1.0 - ab_t);
    const double sqrt_ab_t = std::sqrt(ab_t);
    const double sqrt_ab_prev = std::sqrt(ab_prev);

    double noise_std = 0.0;
    double eps_coeff = std::sqrt(1.0 - ab_prev);
    if (schedule.eta() > 0.0) {
        // Standard stochastic DDIM variance.
        const double var = (1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - ab_t / ab_prev);
        noise_std = schedule.eta() * std::sqrt(std::max(0.0, var));
        eps_coeff = std::sqrt(std::max(0.0, 1.0 - ab_prev - noise_std * noise_std));
        if (noise_std > 0.0 && rng == nullptr) {
            throw PreconditionError("reverse_step with eta > 0 needs an rng");
        }
    }

    VelocityField out = v_t;
    auto update = [&](std::vector<double>& dst, const std::vector<double>& state,
                      const std::vector<double>& v0) {
        for (size_t i = 0; i < dst.size(); ++i) {
            const double eps_hat = (state[i] - sqrt_ab_t * v0[i]) / sig_t;
            double x = sqrt_ab_prev * v0[i] + eps_coeff * eps_hat;
            if (noise_std > 0.0) x += noise_std * rng->normal();
            dst[i] = x;
        }
    };
    update(out.u.data, v_t.u.data, predicted_v0.u.data);
    update(out.v.data, v_t.v.data, predicted_v0.v.data);
    return out;
}

VelocityField sample(const Denoiser& denoiser, int height, int width,
                     const DiffusionSchedule& schedule, Rng& rng) {
    VelocityField state(height, width);
    for (double& x : state.u.data) x = rng.normal();
    for (double& x : state.v.data) x = rng.normal();

    const std::vector<int>& steps = schedule.inference_steps();
    for (size_t i = 0; i < steps.size(); ++i) {
        const int t = steps[i];
        const int t_prev = i + 1 < steps.size() ? steps[i + 1] : 0;
        const VelocityField v0 = denoiser(state, t);
        state = reverse_step(state, t, t_prev, v0, schedule, &rng);
    }
    return state;
}

} // namespace pivflow::diffusion

#pragma once

#include <functional>

#include "pivflow/core/rng.hpp"
#include "pivflow/diffusion/schedule.hpp"

namespace pivflow::diffusion {

/// The denoiser contract: maps (v_t, t) to an estimate of the clean
/// normalized flow. Conditioning is captured by the callable.
using Denoiser = std::function<VelocityField(const VelocityField& v_t, int t)>;

/// One reverse-process update from level t to t_prev (t > t_prev >= 0).
/// With eta = 0 this is the deterministic update: the implied noise
/// eps_hat = (v_t - sqrt(ab_t) v0) / sqrt(1 - ab_t) is re-applied at the
/// lower level. With eta > 0, rng must be supplied for the stochastic
/// variance term.
VelocityField reverse_step(const VelocityField& v_t, int t, int t_prev,
                           const VelocityField& predicted_v0, const DiffusionSchedule& schedule,
                           Rng* rng = nullptr);

/// Full reverse chain: draws v_T from a standard Gaussian and walks the
/// schedule's inference steps down to 0. Returns the final normalized
/// estimate. Deterministic given the rng seed when eta = 0 and the
/// denoiser is deterministic.
VelocityField sample(const Denoiser& denoiser, int height, int width,
                     const DiffusionSchedule& schedule, Rng& rng);

} // namespace pivflow::diffusion

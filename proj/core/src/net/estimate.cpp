#include "pivflow/net/estimate.hpp"

#include "pivflow/core/interp.hpp"

namespace pivflow::net {

VelocityField DiffusionEstimator::estimate_normalized(const ImagePair& working_pair, Rng& rng) {
    NoGradGuard no_grad;
    ConditionSet cond = model_.encode(working_pair);
    const diffusion::Denoiser denoiser = [&](const VelocityField& v_t, int t) {
        return model_.denoise_once_field(v_t, t, cond);
    };
    return diffusion::sample(denoiser, working_pair.height(), working_pair.width(), schedule_,
                             rng);
}

VelocityField estimate_with_scale_adaptation(const ImagePair& pair,
                                             WorkingResolutionEstimator& core,
                                             const diffusion::FlowNormalizer& normalizer,
                                             int upsample_factor, Rng& rng) {
    if (upsample_factor != 1 && upsample_factor != 2) {
        throw PreconditionError("upsample_factor must be 1 or 2");
    }
    const int H = pair.height();
    const int W = pair.width();
    const int up_h = H * upsample_factor;
    const int up_w = W * upsample_factor;
    const int pad_h = (up_h + 7) / 8 * 8;
    const int pad_w = (up_w + 7) / 8 * 8;

    ImagePair working;
    working.source_id = pair.source_id;
    working.frame_a = upsample_factor == 1 ? pair.frame_a
                                           : bilinear_resize(pair.frame_a, up_h, up_w);
    working.frame_b = upsample_factor == 1 ? pair.frame_b
                                           : bilinear_resize(pair.frame_b, up_h, up_w);
    if (pad_h != up_h || pad_w != up_w) {
        working.frame_a = pad_replicate(working.frame_a, pad_h, pad_w);
        working.frame_b = pad_replicate(working.frame_b, pad_h, pad_w);
    }

    VelocityField normalized = core.estimate_normalized(working, rng);
    VelocityField working_flow = denormalize_flow(normalized, normalizer);
    working_flow.coordinate_scale = static_cast<double>(upsample_factor);

    if (pad_h != up_h || pad_w != up_w) {
        working_flow.u = crop(working_flow.u, 0, 0, up_h, up_w);
        working_flow.v = crop(working_flow.v, 0, 0, up_h, up_w);
    }

    if (upsample_factor == 1) {
        working_flow.coordinate_scale = 1.0;
        return working_flow;
    }

    VelocityField out(H, W, 1.0);
    out.u = bilinear_resize(working_flow.u, H, W);
    out.v = bilinear_resize(working_flow.v, H, W);
    const double inv = 1.0 / upsample_factor;
    for (double& x : out.u.data) x *= inv;
    for (double& x : out.v.data) x *= inv;
    return out;
}

VelocityField estimate(const ImagePair& pair, const DiffuserModel& model,
                       const diffusion::DiffusionSchedule& schedule,
                       const diffusion::FlowNormalizer& normalizer, Rng& rng) {
    DiffusionEstimator core(model, schedule);
    return estimate_with_scale_adaptation(pair, core, normalizer, model.config().upsample_factor,
                                          rng);
}

} // namespace pivflow::net

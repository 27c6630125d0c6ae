#pragma once

#include "pivflow/diffusion/sampler.hpp"
#include "pivflow/net/model.hpp"

namespace pivflow::net {

/// Core contract behind the scale-adaptation wrapper: produce a
/// normalized flow at the working resolution of the (already resized,
/// already padded) pair.
struct WorkingResolutionEstimator {
    virtual ~WorkingResolutionEstimator() = default;
    virtual VelocityField estimate_normalized(const ImagePair& working_pair, Rng& rng) = 0;
};

/// The diffusion path: encode once, then run the reverse chain with the
/// conditional denoiser. The hidden state persists across denoising
/// steps within one call (unless the model config resets it).
class DiffusionEstimator : public WorkingResolutionEstimator {
public:
    DiffusionEstimator(const DiffuserModel& model, const diffusion::DiffusionSchedule& schedule)
        : model_(model), schedule_(schedule) {}

    VelocityField estimate_normalized(const ImagePair& working_pair, Rng& rng) override;

private:
    const DiffuserModel& model_;
    const diffusion::DiffusionSchedule& schedule_;
};

/// 2x scale-adaptation wrapper: bilinearly upsample both frames by
/// `upsample_factor`, pad to divisibility by 8 (edge replication), run
/// the core, denormalize, crop the padding, then downsample the flow
/// spatially AND divide its values by the factor so the output is native
/// resolution with coordinate_scale 1.0.
VelocityField estimate_with_scale_adaptation(const ImagePair& pair,
                                             WorkingResolutionEstimator& core,
                                             const diffusion::FlowNormalizer& normalizer,
                                             int upsample_factor, Rng& rng);

/// Full estimate pipeline for a trained model.
VelocityField estimate(const ImagePair& pair, const DiffuserModel& model,
                       const diffusion::DiffusionSchedule& schedule,
                       const diffusion::FlowNormalizer& normalizer, Rng& rng);

} // namespace pivflow::net

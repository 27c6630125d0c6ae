#pragma once

#include <cstdint>
#include <vector>

#include "pivflow/core/errors.hpp"
#include "pivflow/core/types.hpp"
#include "pivflow/synth/analytic_flow.hpp"

namespace pivflow::synth {

/// Seeding density too low to form an interrogable image.
struct DensityOverflow : Error {
    explicit DensityOverflow(const std::string& msg) : Error(msg) {}
};

struct GeneratorConfig {
    int height = 64;
    int width = 64;
    double particle_density = 0.05;      // particles per pixel
    double particle_diameter_sigma = 1.0; // Gaussian blob sigma, pixels
    double peak_intensity_min = 0.5;
    double peak_intensity_max = 1.0;
    double noise_std = 0.0;              // additive Gaussian, intensity units
    double background_level = 0.0;
    std::uint64_t rng_seed = 0;

    void validate() const; // throws PreconditionError on out-of-range knobs
};

struct Particle {
    double x = 0.0;
    double y = 0.0;
    double intensity = 1.0;
};

/// render_pair plus the seeded particle lists, for tests that count or
/// track individual tracers.
struct RenderDetail {
    FlowSample sample;
    std::vector<Particle> particles_a;
    std::vector<Particle> particles_b; // advected; out-of-bounds ones dropped
};

/// Seeds round(density*H*W) particles uniformly at random sub-pixel
/// positions, renders both frames as clipped sums of Gaussian blobs
/// (truncated at 4 sigma), advects frame-2 particles by the bilinearly
/// sampled flow, and applies independent per-frame additive noise.
/// Deterministic for a fixed rng_seed.
RenderDetail render_pair_detailed(const VelocityField& flow, const GeneratorConfig& cfg);

FlowSample render_pair(const VelocityField& flow, const GeneratorConfig& cfg);

/// Renders per_flow samples per analytic flow with seeds rng_seed + index.
/// Samples are labeled Unlabeled.
std::vector<FlowSample> make_dataset(const std::vector<AnalyticFlow>& flows, int per_flow,
                                     const GeneratorConfig& cfg);

} // namespace pivflow::synth

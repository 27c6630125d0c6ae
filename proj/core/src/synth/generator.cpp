#include "pivflow/synth/generator.hpp"

#include <algorithm>
#include <cmath>

#include "pivflow/core/interp.hpp"
#include "pivflow/core/rng.hpp"

namespace pivflow::synth {

void GeneratorConfig::validate() const {
    if (height < 16 || width < 16) {
        throw PreconditionError("generator image must be at least 16x16");
    }
    if (!(particle_density > 0.0 && particle_density <= 0.2)) {
        throw PreconditionError("particle_density must lie in (0, 0.2]");
    }
    if (!(particle_diameter_sigma >= 0.5 && particle_diameter_sigma <= 3.0)) {
        throw PreconditionError("particle_diameter_sigma must lie in [0.5, 3.0]");
    }
    if (noise_std < 0.0) {
        throw PreconditionError("noise_std must be >= 0");
    }
}

namespace {

/// Adds one truncated Gaussian blob to the accumulator. Pixel (y, x)
/// samples the scene at its center (x + 0.5, y + 0.5).
void splat(Grid2d& img, const Particle& p, double sigma) {
    const double radius = 4.0 * sigma;
    const int x_lo = std::max(0, static_cast<int>(std::floor(p.x - radius - 0.5)));
    const int x_hi = std::min(img.width - 1, static_cast<int>(std::ceil(p.x + radius - 0.5)));
    const int y_lo = std::max(0, static_cast<int>(std::floor(p.y - radius - 0.5)));
    const int y_hi = std::min(img.height - 1, static_cast<int>(std::ceil(p.y + radius - 0.5)));
    const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
    for (int y = y_lo; y <= y_hi; ++y) {
        for (int x = x_lo; x <= x_hi; ++x) {
            const double dx = (x + 0.5) - p.x;
            const double dy = (y + 0.5) - p.y;
            const double d2 = dx * dx + dy * dy;
            if (d2 > radius * radius) continue;
            img.at(y, x) += p.intensity * std::exp(-d2 * inv_two_sigma2);
        }
    }
}

Grid2d render_frame(const std::vector<Particle>& particles, const GeneratorConfig& cfg,
                    Rng& noise_rng) {
    Grid2d img(cfg.height, cfg.width, cfg.background_level);
    for (const Particle& p : particles) {
        splat(img, p, cfg.particle_diameter_sigma);
    }
    if (cfg.noise_std > 0.0) {
        for (double& px : img.data) {
            px += noise_rng.normal(0.0, cfg.noise_std);
        }
    }
    for (double& px : img.data) {
        px = std::clamp(px, 0.0, 1.0);
    }
    return img;
}

} // namespace

RenderDetail render_pair_detailed(const VelocityField& flow, const GeneratorConfig& cfg) {
    cfg.validate();
    if (flow.height() != cfg.height || flow.width() != cfg.width) {
        throw ShapeMismatch("render_pair: flow shape does not match generator config");
    }

    const long n = std::lround(cfg.particle_density * cfg.height * cfg.width);
    if (n < 4) {
        throw DensityOverflow("only " + std::to_string(n) +
                              " particles would be seeded; need at least 4");
    }

    Rng rng(cfg.rng_seed);

    RenderDetail out;
    out.particles_a.reserve(n);
    for (long i = 0; i < n; ++i) {
        Particle p;
        p.x = rng.uniform(0.0, static_cast<double>(cfg.width));
        p.y = rng.uniform(0.0, static_cast<double>(cfg.height));
        p.intensity = rng.uniform(cfg.peak_intensity_min, cfg.peak_intensity_max);
        out.particles_a.push_back(p);
    }

    // Forward advection, single step: x_b = x_a + flow(x_a). Grid entry
    // (y, x) holds the flow at pixel center (x + 0.5, y + 0.5).
    out.particles_b.reserve(n);
    for (const Particle& p : out.particles_a) {
        Particle q = p;
        q.x = p.x + bilinear_sample(flow.u, p.x - 0.5, p.y - 0.5);
        q.y = p.y + bilinear_sample(flow.v, p.x - 0.5, p.y - 0.5);
        if (q.x < 0.0 || q.x >= cfg.width || q.y < 0.0 || q.y >= cfg.height) {
            continue; // left the frame; not replenished
        }
        out.particles_b.push_back(q);
    }

    // Noise draws are ordered frame_a then frame_b so both depend only on
    // the seed, not on how many particles survived advection.
    out.sample.pair.frame_a = render_frame(out.particles_a, cfg, rng);
    out.sample.pair.frame_b = render_frame(out.particles_b, cfg, rng);
    out.sample.pair.source_id = "synth-" + std::to_string(cfg.rng_seed);
    out.sample.gt = flow;
    out.sample.case_label = CaseLabel::Unlabeled;
    return out;
}

FlowSample render_pair(const VelocityField& flow, const GeneratorConfig& cfg) {
    return render_pair_detailed(flow, cfg).sample;
}

std::vector<FlowSample> make_dataset(const std::vector<AnalyticFlow>& flows, int per_flow,
                                     const GeneratorConfig& cfg) {
    if (per_flow < 1) {
        throw PreconditionError("make_dataset requires per_flow >= 1");
    }
    std::vector<FlowSample> samples;
    samples.reserve(flows.size() * per_flow);
    std::uint64_t index = 0;
    for (const AnalyticFlow& flow : flows) {
        const VelocityField field = sample_flow(flow, cfg.height, cfg.width);
        for (int k = 0; k < per_flow; ++k, ++index) {
            GeneratorConfig sample_cfg = cfg;
            sample_cfg.rng_seed = cfg.rng_seed + index;
            FlowSample s = render_pair(field, sample_cfg);
            s.pair.source_id = "synth-" + std::to_string(index);
            samples.push_back(std::move(s));
        }
    }
    return samples;
}

} // namespace pivflow::synth

#pragma once

#include <string>
#include <variant>

#include "pivflow/core/types.hpp"

namespace pivflow::synth {

/// Closed-form flow families used as ground truth for generated samples.
/// All are evaluable at any continuous position.

struct UniformFlow {
    double u0 = 0.0;
    double v0 = 0.0;
};

/// Solid-body rotation about (cx, cy) with angular rate omega
/// (displacement per frame = omega x radius, tangential).
struct RotationFlow {
    double cx = 0.0;
    double cy = 0.0;
    double omega = 0.0;
};

/// Simple shear: u grows linearly with y, v with x.
struct ShearFlow {
    double du_dy = 0.0;
    double dv_dx = 0.0;
    double cx = 0.0;
    double cy = 0.0;
};

/// Lamb-Oseen vortex: tangential speed (gamma / 2 pi r)(1 - exp(-r^2/rc^2)).
struct LambOseenVortex {
    double cx = 0.0;
    double cy = 0.0;
    double circulation = 1.0; // gamma
    double core_radius = 1.0; // rc
};

/// Periodic cellular (Taylor-Green style) pattern with cell size and amplitude.
struct CellularFlow {
    double amplitude = 1.0;
    double cell_size = 32.0;
};

struct AnalyticFlow {
    std::variant<UniformFlow, RotationFlow, ShearFlow, LambOseenVortex, CellularFlow> kind;

    /// Closed-form evaluation at continuous position (x, y).
    void evaluate(double x, double y, double& u, double& v) const;

    /// Upper bound on displacement magnitude over an h x w raster.
    double max_displacement(int height, int width) const;

    static AnalyticFlow parse(const std::string& spec); // e.g. "uniform:3.25,-2.5"
    std::string describe() const;
};

/// Samples the flow at pixel centers (x + 0.5, y + 0.5).
VelocityField sample_flow(const AnalyticFlow& flow, int height, int width);

} // namespace pivflow::synth

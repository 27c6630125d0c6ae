#include "pivflow/synth/analytic_flow.hpp"

#include <cmath>
#include <sstream>

#include "pivflow/core/errors.hpp"

namespace pivflow::synth {

namespace {

struct Evaluator {
    double x, y;
    double& u;
    double& v;

    void operator()(const UniformFlow& f) const {
        u = f.u0;
        v = f.v0;
    }
    void operator()(const RotationFlow& f) const {
        const double dx = x - f.cx;
        const double dy = y - f.cy;
        u = -f.omega * dy;
        v = f.omega * dx;
    }
    void operator()(const ShearFlow& f) const {
        u = f.du_dy * (y - f.cy);
        v = f.dv_dx * (x - f.cx);
    }
    void operator()(const LambOseenVortex& f) const {
        const double dx = x - f.cx;
        const double dy = y - f.cy;
        const double r2 = dx * dx + dy * dy;
        if (r2 < 1e-12) {
            u = v = 0.0;
            return;
        }
        const double r = std::sqrt(r2);
        const double vt = f.circulation / (2.0 * M_PI * r) *
                          (1.0 - std::exp(-r2 / (f.core_radius * f.core_radius)));
        u = -vt * dy / r;
        v = vt * dx / r;
    }
    void operator()(const CellularFlow& f) const {
        const double k = M_PI / f.cell_size;
        u = f.amplitude * std::sin(k * x) * std::cos(k * y);
        v = -f.amplitude * std::cos(k * x) * std::sin(k * y);
    }
};

} // namespace

void AnalyticFlow::evaluate(double x, double y, double& u, double& v) const {
    std::visit(Evaluator{x, y, u, v}, kind);
}

double AnalyticFlow::max_displacement(int height, int width) const {
    double peak = 0.0;
    for (int yy = 0; yy < height; ++yy) {
        for (int xx = 0; xx < width; ++xx) {
            double u, v;
            evaluate(xx + 0.5, yy + 0.5, u, v);
            peak = std::max(peak, std::hypot(u, v));
        }
    }
    return peak;
}

namespace {

std::vector<double> parse_params(const std::string& s) {
    std::vector<double> out;
    std::istringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        out.push_back(std::stod(tok));
    }
    return out;
}

} // namespace

AnalyticFlow AnalyticFlow::parse(const std::string& spec) {
    const auto colon = spec.find(':');
    const std::string name = spec.substr(0, colon);
    const std::vector<double> p =
        colon == std::string::npos ? std::vector<double>{} : parse_params(spec.substr(colon + 1));

    auto arg = [&](size_t i, double fallback) { return i < p.size() ? p[i] : fallback; };

    if (name == "uniform") {
        return {UniformFlow{arg(0, 1.0), arg(1, 0.0)}};
    }
    if (name == "rotation") {
        return {RotationFlow{arg(1, 0.0), arg(2, 0.0), arg(0, 0.01)}};
    }
    if (name == "shear") {
        return {ShearFlow{arg(0, 0.05), arg(1, 0.0), arg(2, 0.0), arg(3, 0.0)}};
    }
    if (name == "lamb_oseen" || name == "lamb_oseen_vortex") {
        return {LambOseenVortex{arg(1, 0.0), arg(2, 0.0), arg(0, 50.0), arg(3, 10.0)}};
    }
    if (name == "cellular") {
        return {CellularFlow{arg(0, 2.0), arg(1, 32.0)}};
    }
    throw Error("unknown analytic flow kind: " + name);
}

std::string AnalyticFlow::describe() const {
    std::ostringstream out;
    std::visit(
        [&](const auto& f) {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, UniformFlow>) {
                out << "uniform:" << f.u0 << ',' << f.v0;
            } else if constexpr (std::is_same_v<T, RotationFlow>) {
                out << "rotation:" << f.omega << ',' << f.cx << ',' << f.cy;
            } else if constexpr (std::is_same_v<T, ShearFlow>) {
                out << "shear:" << f.du_dy << ',' << f.dv_dx << ',' << f.cx << ',' << f.cy;
            } else if constexpr (std::is_same_v<T, LambOseenVortex>) {
                out << "lamb_oseen:" << f.circulation << ',' << f.cx << ',' << f.cy << ','
                    << f.core_radius;
            } else {
                out << "cellular:" << f.amplitude << ',' << f.cell_size;
            }
        },
        kind);
    return out.str();
}

VelocityField sample_flow(const AnalyticFlow& flow, int height, int width) {
    VelocityField field(height, width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            flow.evaluate(x + 0.5, y + 0.5, field.u.at(y, x), field.v.at(y, x));
        }
    }
    return field;
}

} // namespace pivflow::synth

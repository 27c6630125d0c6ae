#include "pivflow/core/interp.hpp"

#include <algorithm>
#include <cmath>

namespace pivflow {

double bilinear_sample(const Grid2d& g, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(g.width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(g.height - 1));
    const int x0 = std::min(static_cast<int>(x), g.width - 2 >= 0 ? g.width - 2 : 0);
    const int y0 = std::min(static_cast<int>(y), g.height - 2 >= 0 ? g.height - 2 : 0);
    const int x1 = std::min(x0 + 1, g.width - 1);
    const int y1 = std::min(y0 + 1, g.height - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double top = g.at(y0, x0) * (1.0 - fx) + g.at(y0, x1) * fx;
    const double bot = g.at(y1, x0) * (1.0 - fx) + g.at(y1, x1) * fx;
    return top * (1.0 - fy) + bot * fy;
}

Grid2d bilinear_resize(const Grid2d& g, int out_h, int out_w) {
    Grid2d out(out_h, out_w);
    const double sy = static_cast<double>(g.height) / out_h;
    const double sx = static_cast<double>(g.width) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const double src_y = (y + 0.5) * sy - 0.5;
        for (int x = 0; x < out_w; ++x) {
            const double src_x = (x + 0.5) * sx - 0.5;
            out.at(y, x) = bilinear_sample(g, src_x, src_y);
        }
    }
    return out;
}

Grid2d pad_replicate(const Grid2d& g, int out_h, int out_w) {
    Grid2d out(out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        const int sy = std::min(y, g.height - 1);
        for (int x = 0; x < out_w; ++x) {
            out.at(y, x) = g.at(sy, std::min(x, g.width - 1));
        }
    }
    return out;
}

Grid2d crop(const Grid2d& g, int y0, int x0, int h, int w) {
    Grid2d out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            out.at(y, x) = g.at(y0 + y, x0 + x);
        }
    }
    return out;
}

} // namespace pivflow

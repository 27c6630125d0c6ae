#include "pivflow/io/flo.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace pivflow::io {

namespace {

constexpr float kFloMagic = 202021.25f;

static_assert(std::endian::native == std::endian::little,
              "flo I/O assumes a little-endian host");

template <typename T>
T read_le(std::istream& is) {
    T value;
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    return value;
}

template <typename T>
void write_le(std::ostream& os, T value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

} // namespace

VelocityField read_flo(const std::filesystem::path& path, FloStats* stats) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IOFailure("cannot open " + path.string());

    const float magic = read_le<float>(f);
    if (!f) throw TruncatedFile(path.string() + ": shorter than the 4-byte magic");
    if (magic != kFloMagic) {
        throw MagicMismatch(path.string() + ": magic " + std::to_string(magic) +
                            " is not 202021.25");
    }

    const std::int32_t w = read_le<std::int32_t>(f);
    const std::int32_t h = read_le<std::int32_t>(f);
    if (!f) throw TruncatedFile(path.string() + ": missing dimensions");
    if (w <= 0 || h <= 0) {
        throw TruncatedFile(path.string() + ": nonpositive dimensions " +
                            std::to_string(w) + "x" + std::to_string(h));
    }

    const size_t count = static_cast<size_t>(w) * h * 2;
    std::vector<float> payload(count);
    f.read(reinterpret_cast<char*>(payload.data()),
           static_cast<std::streamsize>(count * sizeof(float)));
    if (static_cast<size_t>(f.gcount()) != count * sizeof(float)) {
        throw TruncatedFile(path.string() + ": payload shorter than " +
                            std::to_string(count * sizeof(float)) + " bytes");
    }

    VelocityField field(h, w);
    FloStats local;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const float fu = payload[(static_cast<size_t>(y) * w + x) * 2];
            const float fv = payload[(static_cast<size_t>(y) * w + x) * 2 + 1];
            if (!std::isfinite(fu) || !std::isfinite(fv)) ++local.nonfinite_values;
            else if (std::fabs(fu) > kInvalidFlowThreshold ||
                     std::fabs(fv) > kInvalidFlowThreshold) ++local.sentinel_values;
            field.u.at(y, x) = fu;
            field.v.at(y, x) = fv;
        }
    }
    if (stats) *stats = local;
    return field;
}

void write_flo(const VelocityField& field, const std::filesystem::path& path) {
    if (field.coordinate_scale != 1.0) {
        throw PreconditionError("write_flo requires coordinate_scale == 1.0, got " +
                                std::to_string(field.coordinate_scale));
    }
    if (!field.u.same_shape(field.v)) {
        throw ShapeMismatch("write_flo: u and v shapes differ");
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IOFailure("cannot open " + path.string() + " for writing");

    write_le(f, kFloMagic);
    write_le(f, static_cast<std::int32_t>(field.width()));
    write_le(f, static_cast<std::int32_t>(field.height()));
    for (int y = 0; y < field.height(); ++y) {
        for (int x = 0; x < field.width(); ++x) {
            write_le(f, static_cast<float>(field.u.at(y, x)));
            write_le(f, static_cast<float>(field.v.at(y, x)));
        }
    }
    if (!f) throw IOFailure("write failed for " + path.string());
}

} // namespace pivflow::io

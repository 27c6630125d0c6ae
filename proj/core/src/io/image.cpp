#include "pivflow/io/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>

namespace pivflow::io {

namespace {

bool has_lossless_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png" || ext == ".tif" || ext == ".tiff";
}

} // namespace

Grid2d read_image(const std::filesystem::path& path) {
    if (!has_lossless_extension(path)) {
        throw UnsupportedFormat(path.string() + ": only PNG/TIFF containers are accepted");
    }
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) {
        throw UnsupportedFormat(path.string() + ": unreadable or unsupported raster");
    }
    if (m.channels() != 1) {
        throw MultiChannelInput(path.string() + ": has " + std::to_string(m.channels()) +
                                " channels, expected 1");
    }

    double denom = 0.0;
    if (m.depth() == CV_8U) denom = 255.0;
    else if (m.depth() == CV_16U) denom = 65535.0;
    else throw UnsupportedFormat(path.string() + ": only 8- and 16-bit depths are accepted");

    Grid2d out(m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y) {
        for (int x = 0; x < m.cols; ++x) {
            const double raw = (m.depth() == CV_8U)
                                   ? static_cast<double>(m.at<std::uint8_t>(y, x))
                                   : static_cast<double>(m.at<std::uint16_t>(y, x));
            out.at(y, x) = raw / denom;
        }
    }
    return out;
}

namespace {

void write_png(const Grid2d& img, const std::filesystem::path& path, int depth) {
    const double maxv = depth == 8 ? 255.0 : 65535.0;
    cv::Mat m(img.height, img.width, depth == 8 ? CV_8UC1 : CV_16UC1);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double q = std::round(std::clamp(img.at(y, x), 0.0, 1.0) * maxv);
            if (depth == 8) m.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(q);
            else m.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(q);
        }
    }
    // Fixed compression level keeps rewrites byte-identical.
    const std::vector<int> params = {cv::IMWRITE_PNG_COMPRESSION, 6};
    if (!cv::imwrite(path.string(), m, params)) {
        throw IOFailure("cannot write " + path.string());
    }
}

} // namespace

void write_image_png16(const Grid2d& img, const std::filesystem::path& path) {
    write_png(img, path, 16);
}

void write_image_png8(const Grid2d& img, const std::filesystem::path& path) {
    write_png(img, path, 8);
}

} // namespace pivflow::io

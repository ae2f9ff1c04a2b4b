#include "dtf/visualize.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <vector>

#include "dtf/error.hpp"

namespace dtf {

namespace {

using Rgb = std::array<double, 3>;

/// Hue segments of the Middlebury flow color wheel.
std::vector<Rgb> make_color_wheel() {
    constexpr int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
    std::vector<Rgb> wheel;
    wheel.reserve(RY + YG + GC + CB + BM + MR);
    for (int k = 0; k < RY; ++k) wheel.push_back({255, 255.0 * k / RY, 0});
    for (int k = 0; k < YG; ++k) wheel.push_back({255 - 255.0 * k / YG, 255, 0});
    for (int k = 0; k < GC; ++k) wheel.push_back({0, 255, 255.0 * k / GC});
    for (int k = 0; k < CB; ++k) wheel.push_back({0, 255 - 255.0 * k / CB, 255});
    for (int k = 0; k < BM; ++k) wheel.push_back({255.0 * k / BM, 0, 255});
    for (int k = 0; k < MR; ++k) wheel.push_back({255, 0, 255 - 255.0 * k / MR});
    return wheel;
}

const std::vector<Rgb>& color_wheel() {
    static const std::vector<Rgb> wheel = make_color_wheel();
    return wheel;
}

Rgb flow_color(double u, double v) {
    const auto& wheel = color_wheel();
    const int n = int(wheel.size());
    const double rad = std::hypot(u, v);
    const double a = std::atan2(-v, -u) / std::numbers::pi;
    const double fk = (a + 1.0) / 2.0 * (n - 1);
    const int k0 = int(std::floor(fk));
    const int k1 = (k0 + 1) % n;
    const double f = fk - k0;
    Rgb out;
    for (int c = 0; c < 3; ++c) {
        double col = ((1.0 - f) * wheel[k0][c] + f * wheel[k1][c]) / 255.0;
        col = rad <= 1.0 ? 1.0 - rad * (1.0 - col) : col * 0.75;
        out[c] = 255.0 * col;
    }
    return out;
}

std::uint8_t to_byte(double x) { return std::uint8_t(std::lround(std::clamp(x, 0.0, 255.0))); }

}  // namespace

Raster8 error_map_image(const PixelMask& outliers, const PixelMask& valid) {
    if (!outliers.same_extent(valid)) throw ShapeError("error map: mask extents differ");
    Raster8 img(valid.width(), valid.height(), 3);
    for (int i = 0; i < valid.height(); ++i)
        for (int j = 0; j < valid.width(); ++j) {
            if (!valid(i, j)) continue;
            const bool bad = outliers(i, j);
            img.at(i, j, 0) = bad ? 255 : 0;
            img.at(i, j, 1) = bad ? 0 : 255;
            img.at(i, j, 2) = bad ? 255 : 0;
        }
    return img;
}

double max_flow_magnitude(const SceneFlowField& field) {
    double m = 0.0;
    for (int i = 0; i < field.height(); ++i)
        for (int j = 0; j < field.width(); ++j) {
            const double r = std::hypot(field.at(i, j, kFlowU), field.at(i, j, kFlowV));
            if (std::isfinite(r)) m = std::max(m, r);
        }
    return m;
}

Raster8 flow_color_image(const SceneFlowField& field, double max_magnitude) {
    if (!(max_magnitude >= 0.0) || !std::isfinite(max_magnitude))
        throw InvalidArgument("flow image: max magnitude must be finite and non-negative");
    const double scale = max_magnitude > 0.0 ? 1.0 / max_magnitude : 0.0;
    Raster8 img(field.width(), field.height(), 3);
    for (int i = 0; i < field.height(); ++i)
        for (int j = 0; j < field.width(); ++j) {
            const double u = field.at(i, j, kFlowU), v = field.at(i, j, kFlowV);
            if (!std::isfinite(u) || !std::isfinite(v)) continue;
            const Rgb c = flow_color(u * scale, v * scale);
            for (int k = 0; k < 3; ++k) img.at(i, j, k) = to_byte(c[k]);
        }
    return img;
}

std::filesystem::path write_flow_image(const std::filesystem::path& dir, const std::string& stem,
                                       const SceneFlowField& field) {
    const double m = max_flow_magnitude(field);
    char suffix[64];
    std::snprintf(suffix, sizeof suffix, "_max%.3f.png", m);
    const auto path = dir / (stem + suffix);
    write_png(path, flow_color_image(field, m));
    return path;
}

Raster8 occlusion_map_image(const Grid2D& occlusion) {
    if (occlusion.channels() != 1) throw ShapeError("occlusion map must have one channel");
    Raster8 img(occlusion.width(), occlusion.height(), 1);
    for (int i = 0; i < occlusion.height(); ++i)
        for (int j = 0; j < occlusion.width(); ++j) img.at(i, j) = to_byte(255.0 * occlusion.at(i, j));
    return img;
}

}  // namespace dtf

#include "dtf/grid.hpp"

#include <algorithm>
#include <cmath>

#include "dtf/error.hpp"

namespace dtf {

namespace {

void check_dims(int height, int width, int channels) {
    if (height < 1 || width < 1 || channels < 1) {
        throw InvalidArgument("grid dimensions must be positive, got " + std::to_string(height) + "x" +
                              std::to_string(width) + "x" + std::to_string(channels));
    }
}

}  // namespace

Grid2D::Grid2D(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
    check_dims(height, width, channels);
    values_.assign(pixels() * channels, fill);
}

Grid2D::Grid2D(int height, int width, int channels, std::vector<double> values)
    : height_(height), width_(width), channels_(channels), values_(std::move(values)) {
    check_dims(height, width, channels);
    if (values_.size() != pixels() * channels) {
        throw ShapeError("grid value count does not match " + std::to_string(height) + "x" +
                         std::to_string(width) + "x" + std::to_string(channels));
    }
}

Grid2D Grid2D::slice_channels(int first, int count) const {
    if (first < 0 || count < 1 || first + count > channels_) {
        throw ShapeError("channel slice out of range");
    }
    Grid2D out(height_, width_, count);
    const std::size_t n = pixels();
    for (std::size_t p = 0; p < n; ++p) {
        std::copy_n(values_.data() + p * channels_ + first, count, out.values_.data() + p * count);
    }
    return out;
}

Grid2D concat_channels(std::span<const Grid2D* const> parts) {
    if (parts.empty()) throw InvalidArgument("concat_channels needs at least one grid");
    const Grid2D& first = *parts.front();
    int channels = 0;
    for (const Grid2D* g : parts) {
        if (!g->same_extent(first)) throw ShapeError("concat_channels: grids differ in extent");
        channels += g->channels();
    }
    Grid2D out(first.height(), first.width(), channels);
    const std::size_t n = first.pixels();
    double* dst = out.data();
    for (std::size_t p = 0; p < n; ++p) {
        for (const Grid2D* g : parts) {
            const int c = g->channels();
            dst = std::copy_n(g->data() + p * c, c, dst);
        }
    }
    return out;
}

const char* to_string(Direction d) { return d == Direction::forward ? "forward" : "backward"; }

SceneFlowField::SceneFlowField(int height, int width, Direction direction)
    : grid_(height, width, kSceneFlowChannels), direction_(direction) {}

SceneFlowField::SceneFlowField(Grid2D grid, Direction direction) : grid_(std::move(grid)), direction_(direction) {
    if (grid_.channels() != kSceneFlowChannels) {
        throw ShapeError("scene flow field needs 4 channels, got " + std::to_string(grid_.channels()));
    }
}

PixelMask::PixelMask(int height, int width, bool fill, MaskKind kind)
    : height_(height), width_(width), kind_(kind) {
    if (height < 1 || width < 1) throw InvalidArgument("mask dimensions must be positive");
    bits_.assign(std::size_t(height) * width, fill ? 1 : 0);
}

std::size_t PixelMask::count() const { return std::size_t(std::count(bits_.begin(), bits_.end(), std::uint8_t{1})); }

const SceneFlowField& FrameTripletSample::gt(Direction d) const {
    if (d == Direction::forward) return gt_forward;
    if (!gt_backward) throw DataError("sample " + id + " has no backward ground truth");
    return *gt_backward;
}

Grid2D normalized_coordinate_grid(int height, int width) {
    Grid2D g(height, width, 2);
    for (int i = 0; i < height; ++i) {
        const double y = height > 1 ? -1.0 + 2.0 * i / (height - 1) : 0.0;
        for (int j = 0; j < width; ++j) {
            g.at(i, j, 0) = width > 1 ? -1.0 + 2.0 * j / (width - 1) : 0.0;
            g.at(i, j, 1) = y;
        }
    }
    return g;
}

PixelMask derive_occ_mask(const PixelMask& valid, const PixelMask& noc) {
    if (!valid.same_extent(noc)) throw ShapeError("derive_occ_mask: masks differ in extent");
    PixelMask occ(valid.height(), valid.width(), false, MaskKind::occ);
    for (int i = 0; i < valid.height(); ++i)
        for (int j = 0; j < valid.width(); ++j) occ.set(i, j, valid(i, j) && !noc(i, j));
    return occ;
}

PixelMask mask_and(const PixelMask& a, const PixelMask& b) {
    if (!a.same_extent(b)) throw ShapeError("mask_and: masks differ in extent");
    PixelMask out(a.height(), a.width(), false, a.kind());
    for (int i = 0; i < a.height(); ++i)
        for (int j = 0; j < a.width(); ++j) out.set(i, j, a(i, j) && b(i, j));
    return out;
}

}  // namespace dtf
